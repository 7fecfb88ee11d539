#include "rigcalib/lidar.hpp"

#include "rigcalib/errors.hpp"

namespace rigcalib {

Pose predict_lidar_pose(const Pose& anchor, const Pose& t_gik, const Pose& t_il) {
  return pose_compose(
      pose_inverse(t_il),
      pose_compose(pose_inverse(anchor), pose_compose(t_gik, t_il)));
}

LinearizedMeasurement lidar_imu_residual(const LidarPoseMeasurement& z,
                                         const FilterState& state,
                                         const LidarNoise& noise) {
  if (!state.anchor_set) {
    throw OrderingFaultError("lidar_imu_residual: anchor pose not set");
  }
  if (z.fitness > noise.fitness_threshold) {
    throw MeasurementQualityError("lidar_imu_residual: scan match fitness too poor");
  }

  const Pose h = predict_lidar_pose(state.anchor_pose, state.imu_pose, state.extr_lidar);
  const Twist r = pose_boxminus(z.pose, h);

  LinearizedMeasurement meas;
  meas.residual.resize(6);
  meas.residual.head<3>() = r.rho;
  meas.residual.tail<3>() = r.phi;

  // d(residual)/d(eta) for a right increment eta of h, twist order [rho; phi].
  Mat6 d_eta = Mat6::Zero();
  d_eta.topLeftCorner<3, 3>() = -Mat3::Identity();
  d_eta.topRightCorner<3, 3>() = skew(r.rho);
  d_eta.bottomRightCorner<3, 3>() = -so3_left_jacobian_inv(r.phi);

  // Right increments of the states map into eta:
  //   T^G_Ik boxplus xi   ->  eta = Ad(T^I_L^-1) xi
  //   T^I_L  boxplus zeta ->  eta = (I - Ad(h^-1)) zeta
  const Mat6 a_imu = pose_adjoint(pose_inverse(state.extr_lidar));
  const Mat6 a_extr = Mat6::Identity() - pose_adjoint(pose_inverse(h));

  const Mat6 d_imu = d_eta * a_imu;
  const Mat6 d_extr = d_eta * a_extr;

  meas.jacobian = Eigen::MatrixXd::Zero(6, err::kDim);
  meas.jacobian.block<6, 3>(0, err::kImuRot) = d_imu.rightCols<3>();
  meas.jacobian.block<6, 3>(0, err::kImuPos) = d_imu.leftCols<3>();
  meas.jacobian.block<6, 3>(0, err::kLidarRot) = d_extr.rightCols<3>();
  meas.jacobian.block<6, 3>(0, err::kLidarPos) = d_extr.leftCols<3>();

  const double infl = 1.0 + z.fitness / noise.fitness_scale;
  const double st = noise.sigma_trans * infl;
  const double sr = noise.sigma_rot * infl;
  meas.noise_cov = Eigen::MatrixXd::Zero(6, 6);
  meas.noise_cov.diagonal() << st * st, st * st, st * st, sr * sr, sr * sr, sr * sr;
  return meas;
}

}  // namespace rigcalib
