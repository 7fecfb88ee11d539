// LiDAR-IMU measurement model: relative LiDAR pose predicted from the IMU
// trajectory and T^I_L, with its on-manifold residual against scan matching.

#pragma once

#include "rigcalib/filter.hpp"
#include "rigcalib/geometry.hpp"

namespace rigcalib {

struct LidarPoseMeasurement {
  double stamp = 0.0;   // scan end time
  Pose pose;            // z_IL: LiDAR frame at scan k relative to scan 1
  double fitness = 0.0; // ICP inlier RMS, meters
};

// h(T^G_Ik, T^I_L) = T^I_L^-1 T^G_I1^-1 T^G_Ik T^I_L.
Pose predict_lidar_pose(const Pose& anchor, const Pose& t_gik, const Pose& t_il);

struct LidarNoise {
  double sigma_rot = 0.2 * M_PI / 180.0;  // rad
  double sigma_trans = 0.01;              // m
  double fitness_scale = 0.05;            // noise inflation 1 + fitness/scale
  double fitness_threshold = 0.5;         // above: measurement rejected
};

// 6-row residual z ominus h, rows [translation; rotation]; jacobian nonzero
// on the IMU-pose and LiDAR-extrinsic blocks.
LinearizedMeasurement lidar_imu_residual(const LidarPoseMeasurement& z,
                                         const FilterState& state,
                                         const LidarNoise& noise = {});

}  // namespace rigcalib
