// Camera-IMU measurement model: checkerboard reprojection residual and its
// error-state jacobian, plane parameters of the board seen from the camera,
// and a board-pose solver (homography init + Gauss-Newton refinement).

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rigcalib/filter.hpp"
#include "rigcalib/geometry.hpp"
#include "rigcalib/planar.hpp"

namespace rigcalib {

struct CameraIntrinsics {
  double fx = 0.0, fy = 0.0;  // pixels
  double cx = 0.0, cy = 0.0;  // pixels
  int width = 0, height = 0;
  Eigen::Vector4d distortion = Eigen::Vector4d::Zero();  // k1, k2, p1, p2
};

struct CornerObservation {
  int board_index = 0;
  Vec2 pixel = Vec2::Zero();
};

struct CornerObservationSet {
  double stamp = 0.0;
  std::vector<CornerObservation> corners;
  std::string board_id = "board0";
};

struct BoardGeometry {
  int rows = 0, cols = 0;    // interior corner counts
  double spacing = 0.0;      // meters
  Pose board_to_global;      // board frame: corner grid on z = 0
  std::vector<Vec3> corner_positions;  // in the global frame

  Vec3 corner_in_board(int index) const {
    const int r = index / cols;
    const int c = index % cols;
    return Vec3(c * spacing, r * spacing, 0.0);
  }
};

BoardGeometry make_board(int rows, int cols, double spacing, const Pose& board_to_global);

// Radial-tangential (k1, k2, p1, p2) model on normalized coordinates.
Vec2 distort_normalized(const Vec2& xy, const Eigen::Vector4d& dist);
// Inverse by fixed-point iteration (5 rounds).
Vec2 undistort_normalized(const Vec2& xy_d, const Eigen::Vector4d& dist);

constexpr double kMinProjectionDepth = 1e-6;
constexpr int kMinCornersForUpdate = 6;

// Pinhole projection of a camera-frame point; nullopt behind the camera.
std::optional<Vec2> project_camera_point(const Vec3& x_c, const CameraIntrinsics& intr);

// h(): projects a global-frame point through T^G_I and T^I_C.
std::optional<Vec2> project_corner(const Pose& t_gi, const Pose& t_ic, const Vec3& x_g,
                                   const CameraIntrinsics& intr);

// Stacked 2-rows-per-corner reprojection residual (observed - predicted) with
// jacobian blocks on the IMU-pose and camera-extrinsic error dims. Corners
// behind the camera are dropped; fewer than kMinCornersForUpdate visible ones
// raise InsufficientObservationsError.
LinearizedMeasurement camera_imu_residual(const CornerObservationSet& obs,
                                          const FilterState& state,
                                          const BoardGeometry& board,
                                          const CameraIntrinsics& intr,
                                          double sigma_px = 0.5);

// Board plane in the camera frame from the board pose: normal is the board
// z-axis mapped to camera coordinates, canonicalized to offset > 0.
PlaneObservation camera_plane_params(const Pose& board_pose_in_camera);

// Board pose in the camera frame from detected corners: planar homography
// (DLT) initialization refined by Gauss-Newton on the reprojection error.
// Requires at least 4 corners; throws InsufficientObservationsError.
Pose board_pose_from_corners(const CornerObservationSet& obs, const BoardGeometry& board,
                             const CameraIntrinsics& intr);

}  // namespace rigcalib
