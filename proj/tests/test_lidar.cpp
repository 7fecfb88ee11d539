#include "rigcalib/lidar.hpp"

#include <random>

#include "doctest.h"
#include "rigcalib/errors.hpp"
#include "test_util.hpp"

using namespace rigcalib;
using testutil::random_pose;
using testutil::random_vec3;

namespace {

FilterState anchored_state(std::mt19937_64& rng) {
  FilterState s;
  s.imu_pose = random_pose(rng, 1.0, 0.8);
  s.extr_lidar = random_pose(rng, 0.2, 0.4);
  s.extr_cam = random_pose(rng, 0.2, 0.4);
  s.anchor_pose = random_pose(rng, 1.0, 0.8);
  s.anchor_set = true;
  return s;
}

}  // namespace

TEST_CASE("predict_lidar_pose") {
  std::mt19937_64 rng(40);
  const Pose anchor = random_pose(rng);
  const Pose t_il = random_pose(rng, 0.3);

  SUBCASE("first scan gives the identity") {
    CHECK(pose_boxminus(predict_lidar_pose(anchor, anchor, t_il), Pose::identity()).norm() <
          1e-12);
  }
  SUBCASE("identity extrinsic collapses the conjugation") {
    const Pose t_gik = random_pose(rng);
    const Pose expected = pose_compose(pose_inverse(anchor), t_gik);
    CHECK(pose_boxminus(predict_lidar_pose(anchor, t_gik, Pose::identity()), expected)
              .norm() < 1e-12);
  }
  SUBCASE("matches the homogeneous matrix chain") {
    for (int i = 0; i < 50; ++i) {
      const Pose a = random_pose(rng);
      const Pose k = random_pose(rng);
      const Pose l = random_pose(rng, 0.3);
      const Mat4 expected =
          l.matrix().inverse() * a.matrix().inverse() * k.matrix() * l.matrix();
      CHECK((predict_lidar_pose(a, k, l).matrix() - expected).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("pure imu translation with identity lidar rotation passes through") {
    const Vec3 t = random_vec3(rng);
    const Pose t_il_trans(Rotation::identity(), random_vec3(rng, 0.3));
    const Pose h = predict_lidar_pose(Pose::identity(), Pose(Rotation::identity(), t),
                                      t_il_trans);
    CHECK(so3_log(h.rot).norm() < 1e-12);
    CHECK((h.trans - t).norm() < 1e-12);
  }
}

TEST_CASE("lidar residual is zero at the predicted pose") {
  std::mt19937_64 rng(41);
  const FilterState s = anchored_state(rng);
  LidarPoseMeasurement z;
  z.pose = predict_lidar_pose(s.anchor_pose, s.imu_pose, s.extr_lidar);
  const LinearizedMeasurement m = lidar_imu_residual(z, s);
  CHECK(m.residual.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("lidar residual error paths") {
  std::mt19937_64 rng(42);
  FilterState s = anchored_state(rng);
  LidarPoseMeasurement z;
  z.pose = predict_lidar_pose(s.anchor_pose, s.imu_pose, s.extr_lidar);

  SUBCASE("anchor unset") {
    s.anchor_set = false;
    CHECK_THROWS_AS(lidar_imu_residual(z, s), OrderingFaultError);
  }
  SUBCASE("poor fitness") {
    z.fitness = 2.0;
    CHECK_THROWS_AS(lidar_imu_residual(z, s), MeasurementQualityError);
  }
  SUBCASE("fitness inflates the noise") {
    const LinearizedMeasurement clean = lidar_imu_residual(z, s);
    z.fitness = 0.05;
    const LinearizedMeasurement scaled = lidar_imu_residual(z, s);
    CHECK(scaled.noise_cov(0, 0) == doctest::Approx(4.0 * clean.noise_cov(0, 0)));
  }
}

TEST_CASE("lidar residual jacobian matches finite differences") {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 100; ++trial) {
    const FilterState s = anchored_state(rng);
    LidarPoseMeasurement z;
    // measured pose near but not equal to the prediction
    z.pose = pose_boxplus(predict_lidar_pose(s.anchor_pose, s.imu_pose, s.extr_lidar),
                          Twist(random_vec3(rng, 0.05), random_vec3(rng, 0.05)));
    const LinearizedMeasurement m = lidar_imu_residual(z, s);

    Eigen::MatrixXd fd(6, err::kDim);
    const double eps = 1e-6;
    for (int j = 0; j < err::kDim; ++j) {
      ErrorVector d = ErrorVector::Zero();
      d[j] = eps;
      const Eigen::VectorXd rp = lidar_imu_residual(z, inject_error(s, d)).residual;
      const Eigen::VectorXd rm = lidar_imu_residual(z, inject_error(s, -d)).residual;
      fd.col(j) = (rp - rm) / (2 * eps);
    }
    const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
    CHECK((m.jacobian - fd).cwiseAbs().maxCoeff() / scale < 1e-5);

    // only IMU-pose and lidar-extrinsic columns are populated
    CHECK(m.jacobian.middleCols<3>(err::kVel).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    CHECK(m.jacobian.middleCols<3>(err::kCamRot).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    CHECK(m.jacobian.middleCols<3>(err::kCamPos).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  }
}

TEST_CASE("first-order residual prediction for a small extrinsic shift") {
  std::mt19937_64 rng(44);
  const FilterState s = anchored_state(rng);
  LidarPoseMeasurement z;
  z.pose = predict_lidar_pose(s.anchor_pose, s.imu_pose, s.extr_lidar);
  const LinearizedMeasurement m = lidar_imu_residual(z, s);

  ErrorVector d = ErrorVector::Zero();
  d.segment<3>(err::kLidarPos) = Vec3(1e-4, 0, 0);
  const Eigen::VectorXd r_pert = lidar_imu_residual(z, inject_error(s, d)).residual;
  CHECK((r_pert - m.jacobian * d).cwiseAbs().maxCoeff() < 1e-7);
}
