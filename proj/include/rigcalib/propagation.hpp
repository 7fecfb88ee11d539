// IMU mechanization and covariance propagation between measurement updates.
//
// Nominal integration per sample interval [t_k, t_k1] with bias-corrected
// rates w_i and specific forces f_i:
//   Omega = dt/2 (w1 + w2) + dt^2/12 (w1 x w2)        rotation increment
//   R'    = R Exp(Omega)
//   v'    = v + dt/2 [(R f1 + g) + (R' f2 + g)]
//   p'    = p + dt/2 (v + v')
// The rotation increment is the two-sample Magnus expansion of the midpoint
// rule; the velocity quadrature averages the world-frame specific force at
// the interval ends, which avoids rectifying rotation ripple against gravity.

#pragma once

#include <vector>

#include "rigcalib/filter.hpp"
#include "rigcalib/geometry.hpp"

namespace rigcalib {

struct ImuSample {
  double stamp = 0.0;  // seconds
  Vec3 gyro = Vec3::Zero();   // rad/s, body frame
  Vec3 accel = Vec3::Zero();  // m/s^2, body frame specific force
};

struct ImuNoiseModel {
  double sigma_g = 1e-3;    // rad/s/sqrt(Hz)
  double sigma_a = 1e-2;    // m/s^2/sqrt(Hz)
  double sigma_bg = 1e-5;   // rad/s^2/sqrt(Hz)
  double sigma_ba = 1e-4;   // m/s^3/sqrt(Hz)
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);
};

using PhiImu = Eigen::Matrix<double, err::kImuDim, err::kImuDim>;

struct PropagationResult {
  FilterState state;
  CovMatrix cov;
  PhiImu phi_imu;  // transition of the 15 IMU-related error dims
};

// Maximum inter-sample gap before the stream is considered faulted.
constexpr double kMaxImuInterval = 0.1;

PropagationResult propagate(const FilterState& state, const CovMatrix& cov,
                            const ImuSample& sample_k, const ImuSample& sample_k1,
                            const ImuNoiseModel& noise);

// Append-only pose knots; linear translation and geodesic rotation between
// bracketing knots. Queries outside the span throw ExtrapolationError.
class TrajectoryBuffer {
 public:
  void push(double stamp, const Pose& pose);
  Pose interpolate(double t) const;
  bool covers(double t) const;
  bool empty() const { return knots_.empty(); }
  double front_stamp() const;
  double back_stamp() const;
  void drop_before(double t);

 private:
  std::vector<std::pair<double, Pose>> knots_;
};

inline Pose interpolate_pose(double t, const TrajectoryBuffer& buffer) {
  return buffer.interpolate(t);
}

}  // namespace rigcalib
