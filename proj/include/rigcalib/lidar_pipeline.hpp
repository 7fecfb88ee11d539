// Raw scan processing: motion undistortion against the propagated IMU
// trajectory, RANSAC plane extraction of the calibration target, and
// point-to-plane ICP scan matching.

#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "rigcalib/geometry.hpp"
#include "rigcalib/lidar.hpp"
#include "rigcalib/planar.hpp"
#include "rigcalib/propagation.hpp"

namespace rigcalib {

struct LidarPoint {
  Vec3 position = Vec3::Zero();  // sensor frame at acquisition instant
  double t_rel = 0.0;            // seconds since stamp_start
};

struct LidarScan {
  double stamp_start = 0.0;
  double stamp_end = 0.0;
  std::vector<LidarPoint> points;

  double duration() const { return stamp_end - stamp_start; }
};

// Re-expresses every point in the LiDAR frame at stamp_end. The trajectory
// holds global IMU poses covering [stamp_start, stamp_end].
LidarScan undistort_scan(const LidarScan& scan, const TrajectoryBuffer& trajectory,
                         const Pose& t_il);

struct RansacOptions {
  int iterations = 200;
  double inlier_tol = 0.02;  // meters
  std::uint64_t seed = 1;
};

// Best 3-point hypothesis by inlier count, refined by a total-least-squares
// fit over the inliers; canonical offset > 0 form. Optionally reports the
// inlier indices.
PlaneObservation fit_plane_ransac(const std::vector<Vec3>& points,
                                  const RansacOptions& options,
                                  std::vector<int>* inlier_indices = nullptr);

struct IcpOptions {
  int max_iterations = 40;
  double tol = 1e-10;               // twist update norm
  double corr_radius = 0.5;         // meters
  int normal_neighbors = 10;
  double max_curvature = 0.05;      // planarity gate on target normals
  int min_correspondences = 50;
};

// Target-cloud acceleration structure: voxel-hashed points with precomputed
// eigen-analysis normals. Built once, matched against many source scans.
class IcpTarget {
 public:
  IcpTarget(const LidarScan& scan, const IcpOptions& options);

  const IcpOptions& options() const { return opts_; }
  // nearest valid-normal point within corr_radius; index or -1
  int nearest(const Vec3& query) const;
  const Vec3& point(int idx) const { return points_[idx]; }
  const Vec3& normal(int idx) const { return normals_[idx]; }

 private:
  std::int64_t cell_key(const Vec3& p) const;
  IcpOptions opts_;
  double cell_size_;
  std::vector<Vec3> points_;
  std::vector<Vec3> normals_;      // unit, only meaningful where valid_
  std::vector<bool> valid_;
  std::unordered_map<std::int64_t, std::vector<int>> grid_;
};

// Point-to-plane ICP of source onto target. The returned measurement carries
// the refined pose and the inlier RMS point-to-plane distance as fitness
// (inflated when the iteration limit was hit without convergence).
LidarPoseMeasurement icp_point_to_plane(const LidarScan& source, const IcpTarget& target,
                                        const Pose& init);
LidarPoseMeasurement icp_point_to_plane(const LidarScan& source, const LidarScan& target,
                                        const Pose& init, const IcpOptions& options = {});

}  // namespace rigcalib
