// Lie-group primitives for SO(3)/SE(3): exponential/log maps, composition,
// on-manifold differences and the Euler conventions used for reporting.
//
// Conventions (used throughout the library):
//  - Quaternions are Hamilton, scalar-first, normalized, canonicalized to a
//    non-negative scalar part. They carry frame-transform semantics: for a
//    pose T^A_B, v_A = R^A_B * v_B + t^A_B.
//  - Twists are ordered [rho; phi] (translation first).
//  - Perturbations are right (body-frame): T * Exp([rho; phi]).

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <string>

namespace rigcalib {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

// Small-angle threshold for Taylor branches of the trigonometric coefficients.
constexpr double kSmallAngle = 1e-8;
// Logs are restricted to angles below pi minus this margin.
constexpr double kNearPi = 1e-6;

/// Unit quaternion with canonical (qw >= 0) form.
class Rotation {
 public:
  Rotation() : q_(1.0, 0.0, 0.0, 0.0) {}
  explicit Rotation(const Eigen::Quaterniond& q) : q_(q) { canonicalize(); }
  explicit Rotation(const Mat3& m) : q_(m) { canonicalize(); }
  Rotation(double w, double x, double y, double z) : q_(w, x, y, z) { canonicalize(); }

  static Rotation identity() { return Rotation(); }

  const Eigen::Quaterniond& quat() const { return q_; }
  Mat3 matrix() const { return q_.toRotationMatrix(); }

  Rotation operator*(const Rotation& rhs) const { return Rotation(q_ * rhs.q_); }
  Vec3 operator*(const Vec3& v) const { return q_ * v; }
  Rotation inverse() const { return Rotation(q_.conjugate()); }

  double angle_to(const Rotation& other) const;

 private:
  void canonicalize() {
    q_.normalize();
    if (q_.w() < 0.0) q_.coeffs() = -q_.coeffs();
  }
  Eigen::Quaterniond q_;
};

/// Rigid transform: rotation plus translation, v_A = rot * v_B + trans.
struct Pose {
  Rotation rot;
  Vec3 trans = Vec3::Zero();

  Pose() = default;
  Pose(const Rotation& r, const Vec3& t) : rot(r), trans(t) {}

  static Pose identity() { return Pose(); }
  Mat4 matrix() const;
};

/// Local difference of two poses, split parameterization [rho; phi].
struct Twist {
  Vec3 rho = Vec3::Zero();
  Vec3 phi = Vec3::Zero();

  Twist() = default;
  Twist(const Vec3& r, const Vec3& p) : rho(r), phi(p) {}
  explicit Twist(const Vec6& v) : rho(v.head<3>()), phi(v.tail<3>()) {}

  Vec6 vector() const {
    Vec6 v;
    v << rho, phi;
    return v;
  }
  double norm() const { return vector().norm(); }
};

Rotation so3_exp(const Vec3& omega);
Vec3 so3_log(const Rotation& r);

// Right/left Jacobians of SO(3) and their inverses.
Mat3 so3_right_jacobian(const Vec3& phi);
Mat3 so3_left_jacobian(const Vec3& phi);
Mat3 so3_right_jacobian_inv(const Vec3& phi);
Mat3 so3_left_jacobian_inv(const Vec3& phi);

Pose pose_compose(const Pose& a, const Pose& b);
Pose pose_inverse(const Pose& a);
Twist pose_boxminus(const Pose& a, const Pose& b);
Pose pose_boxplus(const Pose& a, const Twist& delta);

// Adjoint of a pose in [rho; phi] ordering: T * Exp(xi) * T^-1 = Exp(Ad_T xi).
Mat6 pose_adjoint(const Pose& t);

struct EulerRpyDeg {
  double roll = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;
  bool gimbal_lock = false;
};

// Intrinsic Z-Y-X factorization, R = Rz(yaw) * Ry(pitch) * Rx(roll),
// pitch in [-90, 90] deg. Within 1e-9 deg of |pitch| = 90 the factorization
// is degenerate; yaw is reported as 0 and the gimbal_lock flag set.
EulerRpyDeg rotation_to_rpy_degrees(const Rotation& r);
Rotation rpy_degrees_to_rotation(double roll, double pitch, double yaw);

// Text form "qw qx qy qz tx ty tz" used in config and report files.
std::string format_pose(const Pose& p, int precision = 17);
Pose parse_pose(const std::string& text);

}  // namespace rigcalib
