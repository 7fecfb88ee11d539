// Joint camera-LiDAR plane-alignment update: pairing of per-sensor plane
// detections, the cross-frame transform chain, and the 4-row residual that
// couples both extrinsics in a single EKF update.

#pragma once

#include <utility>
#include <vector>

#include "rigcalib/filter.hpp"
#include "rigcalib/geometry.hpp"

namespace rigcalib {

enum class PlaneSource { kLidar, kCamera };

// Plane n^T x + d = 0 in the sensor frame; canonical form keeps d > 0
// (normal pointing from the plane toward the sensor origin).
struct PlaneObservation {
  double stamp = 0.0;
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;
  PlaneSource source = PlaneSource::kLidar;
  int inlier_count = 0;
};

// Flips the (normal, offset) pair if needed so offset > 0.
void canonicalize_plane(Vec3& normal, double& offset);

constexpr double kDefaultPairMaxDt = 0.05;

// Greedy nearest-stamp one-to-one matching; pairs further apart than max_dt
// are discarded. Streams must be time ordered.
std::vector<std::pair<PlaneObservation, PlaneObservation>> pair_plane_observations(
    const std::vector<PlaneObservation>& lidar_obs,
    const std::vector<PlaneObservation>& camera_obs,
    double max_dt = kDefaultPairMaxDt);

// LiDAR frame at time i expressed in the camera frame at time j:
// T^{Cj}_{Li} = (T^G_Ij * T^I_C)^-1 * (T^G_Ii * T^I_L).
Pose relative_lidar_to_camera(const Pose& pose_i, const Pose& pose_j,
                              const Pose& extr_lidar, const Pose& extr_cam);

struct PlaneNoise {
  double sigma_n = 0.01;  // per normal component
  double sigma_d = 0.01;  // meters
};

// 4-row residual [n_C - R n_L; n_C^T p + d_C - d_L] with jacobian columns
// [live(27) | clone_i(6) | clone_j(6)]; the normal rows depend only on
// rotation error dims, and both extrinsic blocks are populated.
LinearizedMeasurement plane_alignment_residual(
    const PlaneObservation& lidar_plane, const PlaneObservation& camera_plane,
    const ClonePair& clones, const Pose& extr_lidar, const Pose& extr_cam,
    const PlaneNoise& noise = {});

inline ClonePair clone_states(const EskfFilter& filter, double stamp_i, double stamp_j) {
  return filter.clone_states(stamp_i, stamp_j);
}

}  // namespace rigcalib
