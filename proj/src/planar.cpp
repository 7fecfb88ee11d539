#include "rigcalib/planar.hpp"

#include <algorithm>
#include <cmath>

#include "rigcalib/errors.hpp"

namespace rigcalib {

void canonicalize_plane(Vec3& normal, double& offset) {
  if (offset < 0.0) {
    normal = -normal;
    offset = -offset;
  }
}

std::vector<std::pair<PlaneObservation, PlaneObservation>> pair_plane_observations(
    const std::vector<PlaneObservation>& lidar_obs,
    const std::vector<PlaneObservation>& camera_obs, double max_dt) {
  struct Candidate {
    double dt;
    std::size_t li, ci;
  };
  std::vector<Candidate> candidates;
  for (std::size_t li = 0; li < lidar_obs.size(); ++li) {
    for (std::size_t ci = 0; ci < camera_obs.size(); ++ci) {
      const double dt = std::abs(lidar_obs[li].stamp - camera_obs[ci].stamp);
      if (dt <= max_dt) candidates.push_back({dt, li, ci});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.dt != b.dt) return a.dt < b.dt;
    if (a.li != b.li) return a.li < b.li;
    return a.ci < b.ci;
  });

  std::vector<bool> lidar_used(lidar_obs.size(), false);
  std::vector<bool> camera_used(camera_obs.size(), false);
  std::vector<std::pair<PlaneObservation, PlaneObservation>> pairs;
  for (const Candidate& c : candidates) {
    if (lidar_used[c.li] || camera_used[c.ci]) continue;
    lidar_used[c.li] = true;
    camera_used[c.ci] = true;
    pairs.emplace_back(lidar_obs[c.li], camera_obs[c.ci]);
  }
  std::sort(pairs.begin(), pairs.end(),
            [](const auto& a, const auto& b) { return a.first.stamp < b.first.stamp; });
  return pairs;
}

Pose relative_lidar_to_camera(const Pose& pose_i, const Pose& pose_j,
                              const Pose& extr_lidar, const Pose& extr_cam) {
  return pose_compose(pose_inverse(pose_compose(pose_j, extr_cam)),
                      pose_compose(pose_i, extr_lidar));
}

namespace {

// Writes a 4x6 residual-vs-twist block into jacobian columns laid out
// [rot(3), pos(3)], given the derivative w.r.t. a [rho; phi] twist.
void place_twist_block(Eigen::MatrixXd& jac, int col, const Eigen::Matrix<double, 4, 6>& d_twist) {
  jac.block<4, 3>(0, col) = d_twist.rightCols<3>();      // rotation dims
  jac.block<4, 3>(0, col + 3) = d_twist.leftCols<3>();   // position dims
}

}  // namespace

LinearizedMeasurement plane_alignment_residual(
    const PlaneObservation& lidar_plane, const PlaneObservation& camera_plane,
    const ClonePair& clones, const Pose& extr_lidar, const Pose& extr_cam,
    const PlaneNoise& noise) {
  const Pose t_rel =
      relative_lidar_to_camera(clones.pose_i, clones.pose_j, extr_lidar, extr_cam);
  const Mat3 r_rel = t_rel.rot.matrix();
  const Vec3 n_l = lidar_plane.normal;
  const Vec3 n_c = camera_plane.normal;
  const Vec3 mapped = r_rel * n_l;
  if (n_c.dot(mapped) < 0.0) {
    throw SignFaultError("plane pair normals anti-parallel after canonicalization");
  }

  LinearizedMeasurement meas;
  meas.residual.resize(4);
  meas.residual.head<3>() = n_c - mapped;
  meas.residual[3] = n_c.dot(t_rel.trans) + camera_plane.offset - lidar_plane.offset;

  // Derivative w.r.t. the right increment eps of T_rel, twist order [rho; phi].
  Eigen::Matrix<double, 4, 6> d_eps = Eigen::Matrix<double, 4, 6>::Zero();
  d_eps.block<3, 3>(0, 3) = r_rel * skew(n_l);
  d_eps.block<1, 3>(3, 0) = n_c.transpose() * r_rel;

  // Right increments of the four involved poses map into eps linearly.
  const Mat6 a_clone_i = pose_adjoint(pose_inverse(extr_lidar));
  const Mat6 a_extr_lidar = Mat6::Identity();
  const Pose m = pose_compose(pose_compose(pose_inverse(clones.pose_j), clones.pose_i),
                              extr_lidar);
  const Mat6 a_clone_j = -pose_adjoint(pose_inverse(m));
  const Mat6 a_extr_cam = -pose_adjoint(pose_inverse(t_rel));

  meas.jacobian = Eigen::MatrixXd::Zero(4, err::kDim + 2 * err::kCloneDim);
  place_twist_block(meas.jacobian, err::kLidarRot, d_eps * a_extr_lidar);
  place_twist_block(meas.jacobian, err::kCamRot, d_eps * a_extr_cam);
  place_twist_block(meas.jacobian, err::kDim, d_eps * a_clone_i);
  place_twist_block(meas.jacobian, err::kDim + err::kCloneDim, d_eps * a_clone_j);

  meas.noise_cov = Eigen::MatrixXd::Zero(4, 4);
  meas.noise_cov.diagonal() << noise.sigma_n * noise.sigma_n,
      noise.sigma_n * noise.sigma_n, noise.sigma_n * noise.sigma_n,
      noise.sigma_d * noise.sigma_d;
  return meas;
}

}  // namespace rigcalib
