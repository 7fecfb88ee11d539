#include "rigcalib/geometry.hpp"

#include <cmath>
#include <sstream>

#include "rigcalib/errors.hpp"

namespace rigcalib {

double Rotation::angle_to(const Rotation& other) const {
  return so3_log(inverse() * other).norm();
}

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rot.matrix();
  m.topRightCorner<3, 1>() = trans;
  return m;
}

Rotation so3_exp(const Vec3& omega) {
  if (!omega.allFinite()) {
    throw InvalidArgumentError("so3_exp: non-finite rotation vector");
  }
  const double theta2 = omega.squaredNorm();
  const double theta = std::sqrt(theta2);
  double w, s;  // q = [cos(theta/2), s * omega]
  if (theta < kSmallAngle) {
    w = 1.0 - theta2 / 8.0;
    s = 0.5 - theta2 / 48.0;
  } else {
    w = std::cos(0.5 * theta);
    s = std::sin(0.5 * theta) / theta;
  }
  return Rotation(w, s * omega.x(), s * omega.y(), s * omega.z());
}

Vec3 so3_log(const Rotation& r) {
  // Canonical qw >= 0 puts the angle in [0, pi]; atan2 is uniformly accurate
  // including near pi, where the vector part carries the axis.
  const Eigen::Quaterniond& q = r.quat();
  const double vn = q.vec().norm();
  if (vn < kSmallAngle) {
    return 2.0 * q.vec() * (1.0 + vn * vn / (6.0 * q.w() * q.w())) / q.w();
  }
  const double theta = 2.0 * std::atan2(vn, q.w());
  return (theta / vn) * q.vec();
}

Mat3 so3_right_jacobian(const Vec3& phi) {
  const double t2 = phi.squaredNorm();
  const double t = std::sqrt(t2);
  const Mat3 k = skew(phi);
  double c1, c2;  // J_r = I - c1 K + c2 K^2
  if (t < kSmallAngle) {
    c1 = 0.5 - t2 / 24.0;
    c2 = 1.0 / 6.0 - t2 / 120.0;
  } else {
    c1 = (1.0 - std::cos(t)) / t2;
    c2 = (t - std::sin(t)) / (t2 * t);
  }
  return Mat3::Identity() - c1 * k + c2 * k * k;
}

Mat3 so3_left_jacobian(const Vec3& phi) { return so3_right_jacobian(-phi); }

Mat3 so3_right_jacobian_inv(const Vec3& phi) {
  const double t2 = phi.squaredNorm();
  const double t = std::sqrt(t2);
  const Mat3 k = skew(phi);
  double c;  // J_r^-1 = I + K/2 + c K^2
  if (t < kSmallAngle) {
    c = 1.0 / 12.0 + t2 / 720.0;
  } else {
    c = 1.0 / t2 - (1.0 + std::cos(t)) / (2.0 * t * std::sin(t));
  }
  return Mat3::Identity() + 0.5 * k + c * k * k;
}

Mat3 so3_left_jacobian_inv(const Vec3& phi) { return so3_right_jacobian_inv(-phi); }

Pose pose_compose(const Pose& a, const Pose& b) {
  return Pose(a.rot * b.rot, a.rot * b.trans + a.trans);
}

Pose pose_inverse(const Pose& a) {
  const Rotation rinv = a.rot.inverse();
  return Pose(rinv, -(rinv * a.trans));
}

Twist pose_boxminus(const Pose& a, const Pose& b) {
  const Pose rel = pose_compose(pose_inverse(b), a);
  return Twist(rel.trans, so3_log(rel.rot));
}

Pose pose_boxplus(const Pose& a, const Twist& delta) {
  return Pose(a.rot * so3_exp(delta.phi), a.trans + a.rot * delta.rho);
}

Mat6 pose_adjoint(const Pose& t) {
  const Mat3 r = t.rot.matrix();
  Mat6 ad = Mat6::Zero();
  ad.topLeftCorner<3, 3>() = r;
  ad.topRightCorner<3, 3>() = skew(t.trans) * r;
  ad.bottomRightCorner<3, 3>() = r;
  return ad;
}

EulerRpyDeg rotation_to_rpy_degrees(const Rotation& r) {
  const Mat3 m = r.matrix();
  constexpr double kRad2Deg = 180.0 / M_PI;
  EulerRpyDeg e;
  const double sp = -m(2, 0);
  // Degenerate at |pitch| = 90: yaw set to 0 by convention. The 1e-9 deg
  // margin is below the resolution of sin near 1, so flag at machine level.
  if (std::abs(sp) >= 1.0 - 1e-15) {
    e.gimbal_lock = true;
    e.pitch = (sp > 0.0 ? 90.0 : -90.0);
    e.yaw = 0.0;
    if (sp > 0.0) {
      e.roll = std::atan2(m(0, 1), m(0, 2)) * kRad2Deg;
    } else {
      e.roll = std::atan2(-m(0, 1), -m(0, 2)) * kRad2Deg;
    }
    return e;
  }
  e.pitch = std::asin(sp) * kRad2Deg;
  e.roll = std::atan2(m(2, 1), m(2, 2)) * kRad2Deg;
  e.yaw = std::atan2(m(1, 0), m(0, 0)) * kRad2Deg;
  return e;
}

Rotation rpy_degrees_to_rotation(double roll, double pitch, double yaw) {
  constexpr double kDeg2Rad = M_PI / 180.0;
  const Eigen::Quaterniond q =
      Eigen::AngleAxisd(yaw * kDeg2Rad, Vec3::UnitZ()) *
      Eigen::AngleAxisd(pitch * kDeg2Rad, Vec3::UnitY()) *
      Eigen::AngleAxisd(roll * kDeg2Rad, Vec3::UnitX());
  return Rotation(q);
}

std::string format_pose(const Pose& p, int precision) {
  std::ostringstream os;
  os.precision(precision);
  const Eigen::Quaterniond& q = p.rot.quat();
  os << q.w() << " " << q.x() << " " << q.y() << " " << q.z() << " "
     << p.trans.x() << " " << p.trans.y() << " " << p.trans.z();
  return os.str();
}

Pose parse_pose(const std::string& text) {
  std::istringstream is(text);
  double w, x, y, z, tx, ty, tz;
  if (!(is >> w >> x >> y >> z >> tx >> ty >> tz)) {
    throw ParseError("parse_pose: expected 7 numbers, got '" + text + "'");
  }
  return Pose(Rotation(w, x, y, z), Vec3(tx, ty, tz));
}

}  // namespace rigcalib
