#include "rigcalib/propagation.hpp"

#include <algorithm>
#include <cmath>

#include "rigcalib/errors.hpp"

namespace rigcalib {

PropagationResult propagate(const FilterState& state, const CovMatrix& cov,
                            const ImuSample& sample_k, const ImuSample& sample_k1,
                            const ImuNoiseModel& noise) {
  const double dt = sample_k1.stamp - sample_k.stamp;
  if (dt <= 0.0) throw InvalidIntervalError("propagate: non-positive interval");
  if (dt > kMaxImuInterval) throw StreamGapError("propagate: IMU stream gap");

  const Vec3 w1 = sample_k.gyro - state.bias_gyro;
  const Vec3 w2 = sample_k1.gyro - state.bias_gyro;
  const Vec3 f1 = sample_k.accel - state.bias_accel;
  const Vec3 f2 = sample_k1.accel - state.bias_accel;

  const Vec3 omega = 0.5 * dt * (w1 + w2) + (dt * dt / 12.0) * w1.cross(w2);
  const Rotation rot_new = state.imu_pose.rot * so3_exp(omega);
  const Mat3 r_old = state.imu_pose.rot.matrix();
  const Mat3 r_new = rot_new.matrix();

  const Vec3 aw1 = r_old * f1 + noise.gravity;
  const Vec3 aw2 = r_new * f2 + noise.gravity;
  const Vec3 vel_new = state.velocity + 0.5 * dt * (aw1 + aw2);
  const Vec3 pos_new = state.imu_pose.trans + 0.5 * dt * (state.velocity + vel_new);

  PropagationResult out;
  out.state = state;
  out.state.imu_pose = Pose(rot_new, pos_new);
  out.state.velocity = vel_new;
  out.state.stamp = sample_k1.stamp;

  // Tangent map of the step above under right perturbations,
  // rows/cols [theta, p, v, bg, ba].
  const Mat3 e = so3_exp(omega).matrix().transpose();  // Exp(Omega)^T
  const Mat3 jr = so3_right_jacobian(omega);
  const Mat3 domega_dbg =
      -(dt * Mat3::Identity() - (dt * dt / 12.0) * skew(w2 - w1));
  const Mat3 phi_t_bg = jr * domega_dbg;
  const Mat3 a1 = r_old * skew(f1);
  const Mat3 a2 = r_new * skew(f2);
  const Mat3 phi_v_t = -0.5 * dt * (a1 + a2 * e);
  const Mat3 phi_v_bg = -0.5 * dt * a2 * phi_t_bg;
  const Mat3 phi_v_ba = -0.5 * dt * (r_old + r_new);

  PhiImu phi = PhiImu::Identity();
  constexpr int t = 0, p = 3, v = 6, bg = 9, ba = 12;
  phi.block<3, 3>(t, t) = e;
  phi.block<3, 3>(t, bg) = phi_t_bg;
  phi.block<3, 3>(p, p) = e;
  phi.block<3, 3>(p, v) = dt * r_new.transpose();
  phi.block<3, 3>(p, t) = 0.5 * dt * r_new.transpose() * phi_v_t;
  phi.block<3, 3>(p, bg) = 0.5 * dt * r_new.transpose() * phi_v_bg;
  phi.block<3, 3>(p, ba) = 0.5 * dt * r_new.transpose() * phi_v_ba;
  phi.block<3, 3>(v, t) = phi_v_t;
  phi.block<3, 3>(v, bg) = phi_v_bg;
  phi.block<3, 3>(v, ba) = phi_v_ba;

  // Discrete process noise on the 15 IMU dims; extrinsic blocks carry none.
  Eigen::Matrix<double, err::kImuDim, err::kImuDim> q =
      Eigen::Matrix<double, err::kImuDim, err::kImuDim>::Zero();
  const double qg = noise.sigma_g * noise.sigma_g * dt;
  const double qa = noise.sigma_a * noise.sigma_a * dt;
  q.block<3, 3>(t, t) = qg * Mat3::Identity();
  q.block<3, 3>(v, v) = qa * Mat3::Identity();
  q.block<3, 3>(p, p) = 0.25 * dt * dt * qa * Mat3::Identity();
  q.block<3, 3>(p, v) = 0.5 * dt * qa * r_new.transpose();
  q.block<3, 3>(v, p) = q.block<3, 3>(p, v).transpose();
  q.block<3, 3>(bg, bg) = noise.sigma_bg * noise.sigma_bg * dt * Mat3::Identity();
  q.block<3, 3>(ba, ba) = noise.sigma_ba * noise.sigma_ba * dt * Mat3::Identity();

  out.cov = cov;
  const auto pii = cov.topLeftCorner<err::kImuDim, err::kImuDim>();
  const auto pix = cov.topRightCorner<err::kImuDim, err::kDim - err::kImuDim>();
  out.cov.topLeftCorner<err::kImuDim, err::kImuDim>() =
      phi * pii * phi.transpose() + q;
  out.cov.topRightCorner<err::kImuDim, err::kDim - err::kImuDim>() = phi * pix;
  out.cov.bottomLeftCorner<err::kDim - err::kImuDim, err::kImuDim>() =
      out.cov.topRightCorner<err::kImuDim, err::kDim - err::kImuDim>().transpose();
  symmetrize(out.cov);
  out.phi_imu = phi;
  return out;
}

void TrajectoryBuffer::push(double stamp, const Pose& pose) {
  if (!knots_.empty() && stamp <= knots_.back().first) {
    throw InvalidArgumentError("TrajectoryBuffer: stamps must increase");
  }
  knots_.emplace_back(stamp, pose);
}

bool TrajectoryBuffer::covers(double t) const {
  return !knots_.empty() && t >= knots_.front().first - 1e-12 &&
         t <= knots_.back().first + 1e-12;
}

double TrajectoryBuffer::front_stamp() const {
  if (knots_.empty()) throw ExtrapolationError("TrajectoryBuffer: empty");
  return knots_.front().first;
}

double TrajectoryBuffer::back_stamp() const {
  if (knots_.empty()) throw ExtrapolationError("TrajectoryBuffer: empty");
  return knots_.back().first;
}

void TrajectoryBuffer::drop_before(double t) {
  const auto it = std::lower_bound(
      knots_.begin(), knots_.end(), t,
      [](const std::pair<double, Pose>& k, double value) { return k.first < value; });
  if (it != knots_.begin()) knots_.erase(knots_.begin(), it - 1);
}

Pose TrajectoryBuffer::interpolate(double t) const {
  if (!covers(t)) {
    throw ExtrapolationError("interpolate_pose: query outside buffered span");
  }
  const auto it = std::lower_bound(
      knots_.begin(), knots_.end(), t,
      [](const std::pair<double, Pose>& k, double value) { return k.first < value; });
  if (it == knots_.begin()) return it->second;
  if (it == knots_.end()) return knots_.back().second;
  const auto& [tb, pb] = *it;
  const auto& [ta, pa] = *(it - 1);
  const double u = (t - ta) / (tb - ta);
  const Vec3 trans = (1.0 - u) * pa.trans + u * pb.trans;
  const Vec3 dphi = so3_log(pa.rot.inverse() * pb.rot);
  return Pose(pa.rot * so3_exp(u * dphi), trans);
}

}  // namespace rigcalib
