#include "rigcalib/camera.hpp"

#include <Eigen/Eigenvalues>
#include <random>

#include "doctest.h"
#include "rigcalib/errors.hpp"
#include "test_util.hpp"

using namespace rigcalib;
using testutil::random_pose;
using testutil::random_vec3;

namespace {

CameraIntrinsics test_intrinsics() {
  CameraIntrinsics intr;
  intr.fx = 800.0;
  intr.fy = 780.0;
  intr.cx = 600.0;
  intr.cy = 450.0;
  intr.width = 1200;
  intr.height = 900;
  intr.distortion << -0.05, 0.01, 0.001, -0.0005;
  return intr;
}

// A rig looking down +z of the camera at a board ~1.5 m ahead.
struct CameraScene {
  FilterState state;
  BoardGeometry board;
  CameraIntrinsics intr = test_intrinsics();

  CameraScene() {
    state.imu_pose = Pose(so3_exp(Vec3(0.02, -0.05, 0.1)), Vec3(0.1, -0.2, 0.05));
    state.extr_cam = Pose(so3_exp(Vec3(0.01, 0.03, -0.02)), Vec3(0.05, 0.12, -0.08));
    // camera z forward along global x: board z facing back toward the rig
    Mat3 rb;
    rb << 0, 0, -1, 1, 0, 0, 0, -1, 0;
    const Pose board_pose(Rotation(rb), Vec3(1.8, -0.25, 0.3));
    board = make_board(5, 6, 0.1, board_pose);
    // point the camera at the board: cam axes x->-global y, y->-global z, z->global x
    Mat3 rc;
    rc << 0, 0, 1, -1, 0, 0, 0, -1, 0;
    state.extr_cam.rot = state.imu_pose.rot.inverse() * Rotation(rc);
  }

  CornerObservationSet observe() const {
    CornerObservationSet obs;
    obs.stamp = 0.0;
    for (int i = 0; i < board.rows * board.cols; ++i) {
      const std::optional<Vec2> uv =
          project_corner(state.imu_pose, state.extr_cam, board.corner_positions[i], intr);
      if (uv) obs.corners.push_back({i, *uv});
    }
    return obs;
  }
};

}  // namespace

TEST_CASE("projection basics") {
  CameraIntrinsics intr = test_intrinsics();
  intr.distortion.setZero();

  const std::optional<Vec2> axis = project_camera_point(Vec3(0, 0, 1), intr);
  REQUIRE(axis);
  CHECK((*axis - Vec2(intr.cx, intr.cy)).norm() < 1e-14);

  const std::optional<Vec2> off = project_camera_point(Vec3(0.1, 0, 1), intr);
  REQUIRE(off);
  CHECK((*off - Vec2(680.0, intr.cy)).norm() < 1e-12);

  CHECK_FALSE(project_camera_point(Vec3(0, 0, -1), intr));
  CHECK_FALSE(project_camera_point(Vec3(0, 0, 1e-9), intr));
}

TEST_CASE("distortion round trip and pinhole reduction") {
  const CameraIntrinsics intr = test_intrinsics();
  std::mt19937_64 rng(30);
  for (int i = 0; i < 100; ++i) {
    const Vec2 xy = random_vec3(rng, 0.3).head<2>();
    const Vec2 xy_d = distort_normalized(xy, intr.distortion);
    CHECK((undistort_normalized(xy_d, intr.distortion) - xy).norm() < 1e-9);
  }
  const Vec2 xy(0.21, -0.13);
  CHECK((distort_normalized(xy, Eigen::Vector4d::Zero()) - xy).norm() == doctest::Approx(0.0));
}

TEST_CASE("residual vanishes at the generating state") {
  const CameraScene scene;
  const CornerObservationSet obs = scene.observe();
  REQUIRE(obs.corners.size() == 30);
  const LinearizedMeasurement m =
      camera_imu_residual(obs, scene.state, scene.board, scene.intr);
  CHECK(m.residual.cwiseAbs().maxCoeff() < 1e-9);
  CHECK(m.jacobian.rows() == 60);
}

TEST_CASE("residual jacobian blocks match finite differences") {
  const CameraScene scene;
  const CornerObservationSet obs = scene.observe();
  std::mt19937_64 rng(31);

  for (int trial = 0; trial < 20; ++trial) {
    // evaluate at a state perturbed away from the generating one
    ErrorVector big = ErrorVector::Zero();
    big.segment<3>(err::kImuRot) = random_vec3(rng, 0.03);
    big.segment<3>(err::kImuPos) = random_vec3(rng, 0.03);
    big.segment<3>(err::kCamRot) = random_vec3(rng, 0.03);
    big.segment<3>(err::kCamPos) = random_vec3(rng, 0.03);
    const FilterState state = inject_error(scene.state, big);
    const LinearizedMeasurement m =
        camera_imu_residual(obs, state, scene.board, scene.intr);

    Eigen::MatrixXd fd(m.residual.size(), err::kDim);
    const double eps = 1e-6;
    for (int j = 0; j < err::kDim; ++j) {
      ErrorVector d = ErrorVector::Zero();
      d[j] = eps;
      const Eigen::VectorXd rp =
          camera_imu_residual(obs, inject_error(state, d), scene.board, scene.intr).residual;
      const Eigen::VectorXd rm =
          camera_imu_residual(obs, inject_error(state, -d), scene.board, scene.intr).residual;
      fd.col(j) = (rp - rm) / (2 * eps);
    }
    const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
    CHECK((m.jacobian - fd).cwiseAbs().maxCoeff() / scale < 1e-5);

    // only IMU-pose and camera-extrinsic blocks are populated
    CHECK(fd.middleCols<3>(err::kVel).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    CHECK(m.jacobian.middleCols<3>(err::kVel).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    CHECK(m.jacobian.middleCols<3>(err::kBg).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    CHECK(m.jacobian.middleCols<3>(err::kBa).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    CHECK(m.jacobian.middleCols<3>(err::kLidarRot).cwiseAbs().maxCoeff() ==
          doctest::Approx(0.0));
    CHECK(m.jacobian.middleCols<3>(err::kLidarPos).cwiseAbs().maxCoeff() ==
          doctest::Approx(0.0));
  }
}

TEST_CASE("first-order residual prediction for a small extrinsic twist") {
  const CameraScene scene;
  const CornerObservationSet obs = scene.observe();
  const LinearizedMeasurement m =
      camera_imu_residual(obs, scene.state, scene.board, scene.intr);

  ErrorVector d = ErrorVector::Zero();
  d.segment<3>(err::kCamRot) = Vec3(0, 0, 1e-4);
  const Eigen::VectorXd r_pert =
      camera_imu_residual(obs, inject_error(scene.state, d), scene.board, scene.intr)
          .residual;
  CHECK((r_pert - m.jacobian * d).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("all corners behind the camera raises insufficient observations") {
  const CameraScene scene;
  CornerObservationSet obs = scene.observe();
  FilterState flipped = scene.state;
  // rotate the camera 180 degrees about its y axis: board ends up behind
  flipped.extr_cam = pose_compose(flipped.extr_cam,
                                  Pose(so3_exp(Vec3(0, M_PI, 0)), Vec3::Zero()));
  CHECK_THROWS_AS(camera_imu_residual(obs, flipped, scene.board, scene.intr),
                  InsufficientObservationsError);

  obs.corners.resize(4);
  CHECK_THROWS_AS(camera_imu_residual(obs, scene.state, scene.board, scene.intr),
                  InsufficientObservationsError);
}

TEST_CASE("residual invariant under a global-frame rigid transform") {
  const CameraScene scene;
  const CornerObservationSet obs = scene.observe();
  std::mt19937_64 rng(32);
  const Pose g = random_pose(rng);

  FilterState moved = scene.state;
  moved.imu_pose = pose_compose(g, scene.state.imu_pose);
  const BoardGeometry moved_board =
      make_board(scene.board.rows, scene.board.cols, scene.board.spacing,
                 pose_compose(g, scene.board.board_to_global));

  const Eigen::VectorXd r0 =
      camera_imu_residual(obs, scene.state, scene.board, scene.intr).residual;
  const Eigen::VectorXd r1 =
      camera_imu_residual(obs, moved, moved_board, scene.intr).residual;
  CHECK((r0 - r1).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("camera plane parameters") {
  SUBCASE("axis aligned board one meter ahead") {
    Mat3 r;  // board z pointing back at the camera
    r << 1, 0, 0, 0, -1, 0, 0, 0, -1;
    const PlaneObservation p = camera_plane_params(Pose(Rotation(r), Vec3(0, 0, 1)));
    CHECK((p.normal - Vec3(0, 0, -1)).norm() < 1e-14);
    CHECK(p.offset == doctest::Approx(1.0));
  }
  SUBCASE("definition holds for transformed corners") {
    std::mt19937_64 rng(33);
    for (int trial = 0; trial < 50; ++trial) {
      Pose pose = random_pose(rng, 1.0, 1.0);
      pose.trans.z() += 2.0;  // keep the board in front
      const PlaneObservation p = camera_plane_params(pose);
      const BoardGeometry board = make_board(4, 5, 0.08, Pose::identity());
      for (int i = 0; i < 20; ++i) {
        const Vec3 x_c = pose.rot * board.corner_in_board(i) + pose.trans;
        CHECK(std::abs(p.normal.dot(x_c) + p.offset) < 1e-10);
      }
    }
  }
  SUBCASE("matches least-squares plane fit of transformed corners") {
    std::mt19937_64 rng(34);
    const BoardGeometry board = make_board(5, 6, 0.1, Pose::identity());
    for (int trial = 0; trial < 20; ++trial) {
      Pose pose = random_pose(rng, 0.5, 1.0);
      pose.trans.z() += 2.5;
      const PlaneObservation p = camera_plane_params(pose);

      Vec3 centroid = Vec3::Zero();
      std::vector<Vec3> pts;
      for (int i = 0; i < board.rows * board.cols; ++i) {
        pts.push_back(pose.rot * board.corner_in_board(i) + pose.trans);
        centroid += pts.back();
      }
      centroid /= pts.size();
      Mat3 scatter = Mat3::Zero();
      for (const Vec3& x : pts) scatter += (x - centroid) * (x - centroid).transpose();
      Eigen::SelfAdjointEigenSolver<Mat3> es(scatter);
      Vec3 n_fit = es.eigenvectors().col(0);
      double d_fit = -n_fit.dot(centroid);
      canonicalize_plane(n_fit, d_fit);
      CHECK((n_fit - p.normal).norm() < 1e-9);
      CHECK(std::abs(d_fit - p.offset) < 1e-9);
    }
  }
}

TEST_CASE("board pose recovery from corners") {
  const CameraScene scene;
  const CornerObservationSet obs = scene.observe();

  // ground-truth board pose in the camera frame
  const Pose t_gc = pose_compose(scene.state.imu_pose, scene.state.extr_cam);
  const Pose truth = pose_compose(pose_inverse(t_gc), scene.board.board_to_global);

  const Pose recovered = board_pose_from_corners(obs, scene.board, scene.intr);
  const Twist d = pose_boxminus(recovered, truth);
  CHECK(d.phi.norm() < 1e-9);
  CHECK(d.rho.norm() < 1e-9);

  // with pixel noise the recovery degrades gracefully
  std::mt19937_64 rng(35);
  std::normal_distribution<double> px(0.0, 0.5);
  CornerObservationSet noisy = obs;
  for (CornerObservation& c : noisy.corners) c.pixel += Vec2(px(rng), px(rng));
  const Twist dn = pose_boxminus(board_pose_from_corners(noisy, scene.board, scene.intr), truth);
  CHECK(dn.phi.norm() < 0.02);
  CHECK(dn.rho.norm() < 0.02);

  CornerObservationSet few = obs;
  few.corners.resize(3);
  CHECK_THROWS_AS(board_pose_from_corners(few, scene.board, scene.intr),
                  InsufficientObservationsError);
}
