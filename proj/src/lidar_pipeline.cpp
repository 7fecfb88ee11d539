#include "rigcalib/lidar_pipeline.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

#include "rigcalib/errors.hpp"

namespace rigcalib {

LidarScan undistort_scan(const LidarScan& scan, const TrajectoryBuffer& trajectory,
                         const Pose& t_il) {
  if (!trajectory.covers(scan.stamp_start) || !trajectory.covers(scan.stamp_end)) {
    throw ExtrapolationError("undistort_scan: trajectory does not cover the scan");
  }
  const Pose t_ref = pose_compose(trajectory.interpolate(scan.stamp_end), t_il);
  const Pose t_ref_inv = pose_inverse(t_ref);

  LidarScan out;
  out.stamp_start = scan.stamp_start;
  out.stamp_end = scan.stamp_end;
  out.points.reserve(scan.points.size());
  const double duration = scan.duration();
  for (const LidarPoint& p : scan.points) {
    const Pose t_at = pose_compose(trajectory.interpolate(scan.stamp_start + p.t_rel), t_il);
    const Pose rel = pose_compose(t_ref_inv, t_at);
    out.points.push_back({rel.rot * p.position + rel.trans, duration});
  }
  return out;
}

PlaneObservation fit_plane_ransac(const std::vector<Vec3>& points,
                                  const RansacOptions& options,
                                  std::vector<int>* inlier_indices) {
  const int n = static_cast<int>(points.size());
  if (n < 3) throw DegenerateGeometryError("fit_plane_ransac: fewer than 3 points");

  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<int> pick(0, n - 1);

  int best_count = 0;
  Vec3 best_n = Vec3::UnitZ();
  double best_d = 0.0;
  for (int it = 0; it < options.iterations; ++it) {
    const int a = pick(rng), b = pick(rng), c = pick(rng);
    if (a == b || b == c || a == c) continue;
    const Vec3 cross = (points[b] - points[a]).cross(points[c] - points[a]);
    if (cross.norm() < 1e-12) continue;
    const Vec3 nh = cross.normalized();
    const double dh = -nh.dot(points[a]);
    int count = 0;
    for (const Vec3& p : points) {
      if (std::abs(nh.dot(p) + dh) <= options.inlier_tol) ++count;
    }
    if (count > best_count) {
      best_count = count;
      best_n = nh;
      best_d = dh;
    }
  }
  if (best_count < 3) {
    throw DegenerateGeometryError("fit_plane_ransac: no plane hypothesis found");
  }

  // total-least-squares refinement over the inliers
  std::vector<int> inliers;
  Vec3 centroid = Vec3::Zero();
  for (int i = 0; i < n; ++i) {
    if (std::abs(best_n.dot(points[i]) + best_d) <= options.inlier_tol) {
      inliers.push_back(i);
      centroid += points[i];
    }
  }
  centroid /= static_cast<double>(inliers.size());
  Mat3 scatter = Mat3::Zero();
  for (int i : inliers) {
    const Vec3 q = points[i] - centroid;
    scatter += q * q.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> es(scatter);
  if (es.eigenvalues()[1] < 1e-12) {
    throw DegenerateGeometryError("fit_plane_ransac: collinear support");
  }
  Vec3 normal = es.eigenvectors().col(0);
  double offset = -normal.dot(centroid);
  canonicalize_plane(normal, offset);

  PlaneObservation plane;
  plane.source = PlaneSource::kLidar;
  plane.normal = normal;
  plane.offset = offset;
  plane.inlier_count = static_cast<int>(inliers.size());
  if (inlier_indices != nullptr) *inlier_indices = std::move(inliers);
  return plane;
}

std::int64_t IcpTarget::cell_key(const Vec3& p) const {
  const auto cx = static_cast<std::int64_t>(std::floor(p.x() / cell_size_));
  const auto cy = static_cast<std::int64_t>(std::floor(p.y() / cell_size_));
  const auto cz = static_cast<std::int64_t>(std::floor(p.z() / cell_size_));
  return (cx * 73856093) ^ (cy * 19349663) ^ (cz * 83492791);
}

IcpTarget::IcpTarget(const LidarScan& scan, const IcpOptions& options)
    : opts_(options), cell_size_(options.corr_radius) {
  points_.reserve(scan.points.size());
  for (const LidarPoint& p : scan.points) points_.push_back(p.position);
  const int n = static_cast<int>(points_.size());
  for (int i = 0; i < n; ++i) grid_[cell_key(points_[i])].push_back(i);

  // normals from the eigen-analysis of the k nearest neighbours
  normals_.assign(n, Vec3::UnitZ());
  valid_.assign(n, false);
  for (int i = 0; i < n; ++i) {
    // gather candidates from the surrounding cells
    std::vector<std::pair<double, int>> cand;
    const Vec3& p = points_[i];
    for (int dx = -1; dx <= 1; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dz = -1; dz <= 1; ++dz) {
          const Vec3 probe = p + cell_size_ * Vec3(dx, dy, dz);
          const auto it = grid_.find(cell_key(probe));
          if (it == grid_.end()) continue;
          for (int j : it->second) {
            const double d2 = (points_[j] - p).squaredNorm();
            if (d2 <= cell_size_ * cell_size_) cand.emplace_back(d2, j);
          }
        }
      }
    }
    if (static_cast<int>(cand.size()) < opts_.normal_neighbors) continue;
    std::partial_sort(cand.begin(), cand.begin() + opts_.normal_neighbors, cand.end());
    Vec3 centroid = Vec3::Zero();
    for (int k = 0; k < opts_.normal_neighbors; ++k) centroid += points_[cand[k].second];
    centroid /= opts_.normal_neighbors;
    Mat3 scatter = Mat3::Zero();
    for (int k = 0; k < opts_.normal_neighbors; ++k) {
      const Vec3 q = points_[cand[k].second] - centroid;
      scatter += q * q.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> es(scatter);
    const double sum = es.eigenvalues().sum();
    if (sum <= 0.0) continue;
    // points near plane intersections get mixed neighbourhoods; skip them
    if (es.eigenvalues()[0] / sum > opts_.max_curvature) continue;
    normals_[i] = es.eigenvectors().col(0);
    valid_[i] = true;
  }
}

int IcpTarget::nearest(const Vec3& query) const {
  int best = -1;
  double best_d2 = cell_size_ * cell_size_;
  for (int dx = -1; dx <= 1; ++dx) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dz = -1; dz <= 1; ++dz) {
        const Vec3 probe = query + cell_size_ * Vec3(dx, dy, dz);
        const auto it = grid_.find(cell_key(probe));
        if (it == grid_.end()) continue;
        for (int j : it->second) {
          if (!valid_[j]) continue;
          const double d2 = (points_[j] - query).squaredNorm();
          if (d2 < best_d2) {
            best_d2 = d2;
            best = j;
          }
        }
      }
    }
  }
  return best;
}

LidarPoseMeasurement icp_point_to_plane(const LidarScan& source, const IcpTarget& target,
                                        const Pose& init) {
  const IcpOptions& opts = target.options();
  Pose pose = init;
  Pose last_pose = init;
  double prev_objective = std::numeric_limits<double>::infinity();
  double rms = 0.0, last_rms = 0.0;
  bool converged = false;

  std::vector<std::pair<int, double>> pairs;  // source index -> target index, residual
  std::vector<double> mags;
  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    pairs.clear();
    mags.clear();
    for (std::size_t si = 0; si < source.points.size(); ++si) {
      const Vec3 s = pose.rot * source.points[si].position + pose.trans;
      const int idx = target.nearest(s);
      if (idx < 0) continue;
      const double e = target.normal(idx).dot(s - target.point(idx));
      pairs.emplace_back(static_cast<int>(si) * 65536 + idx, e);
      mags.push_back(std::abs(e));
    }
    if (static_cast<int>(pairs.size()) < opts.min_correspondences) {
      throw InsufficientOverlapError("icp_point_to_plane: too few correspondences");
    }
    // trim against the median residual; kills cross-plane and corner pairs
    std::nth_element(mags.begin(), mags.begin() + mags.size() / 2, mags.end());
    const double threshold = std::max(3.0 * mags[mags.size() / 2], opts.trim_floor);

    Mat6 hess = Mat6::Zero();
    Vec6 grad = Vec6::Zero();
    double objective = 0.0;
    int matched = 0;
    for (std::size_t si = 0; si < source.points.size(); ++si) {
      const Vec3 s = pose.rot * source.points[si].position + pose.trans;
      const int idx = target.nearest(s);
      if (idx < 0) continue;
      const Vec3& nrm = target.normal(idx);
      const double e = nrm.dot(s - target.point(idx));
      if (std::abs(e) > threshold) continue;
      Vec6 row;  // twist order [rho; phi], left perturbation
      row.head<3>() = nrm;
      row.tail<3>() = s.cross(nrm);
      hess += row * row.transpose();
      grad += row * e;
      objective += e * e;
      ++matched;
    }
    if (matched < opts.min_correspondences) {
      throw InsufficientOverlapError("icp_point_to_plane: too few trimmed correspondences");
    }
    rms = std::sqrt(objective / matched);
    if (objective > prev_objective) {
      // a step made things worse: revert and stop
      pose = last_pose;
      rms = last_rms;
      break;
    }
    last_pose = pose;
    last_rms = rms;
    prev_objective = objective;

    const Vec6 step = hess.ldlt().solve(-grad);
    if (!step.allFinite()) break;
    pose = pose_compose(Pose(so3_exp(step.tail<3>()), step.head<3>()), pose);
    if (step.norm() < opts.tol) {
      converged = true;
      break;
    }
  }

  LidarPoseMeasurement out;
  out.stamp = source.stamp_end;
  out.pose = pose;
  out.fitness = converged ? rms : std::max(4.0 * rms, 0.01);
  return out;
}

LidarPoseMeasurement icp_point_to_plane(const LidarScan& source, const LidarScan& target,
                                        const Pose& init, const IcpOptions& options) {
  const IcpTarget accel(target, options);
  return icp_point_to_plane(source, accel, init);
}

}  // namespace rigcalib
