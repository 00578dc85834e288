#pragma once

#include <cmath>
#include <numbers>

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace toolhand {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat32 = Eigen::Matrix<double, 3, 2>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using Transform = Eigen::Isometry3d;

inline constexpr double kPi = std::numbers::pi;

inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return s;
}

inline Mat3 rotX(double a) { return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix(); }
inline Mat3 rotY(double a) { return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix(); }
inline Mat3 rotZ(double a) { return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(); }

/// Wraps an angle to (-pi, pi].
inline double wrapAngle(double a) {
  double w = std::remainder(a, 2.0 * kPi);
  if (w <= -kPi) w += 2.0 * kPi;
  return w;
}

/// Rotation matrix of a rotation vector (exponential coordinates).
inline Mat3 expSO3(const Vec3& w) {
  const double th = w.norm();
  if (th < 1e-12) return Mat3::Identity() + skew(w);
  return Eigen::AngleAxisd(th, w / th).toRotationMatrix();
}

inline Vec3 logSO3(const Mat3& R) {
  Eigen::AngleAxisd aa(R);
  return aa.angle() * aa.axis();
}

/// Left Jacobian of SO(3): d(exp(w)) = skew(J_l(w) dw) exp(w).
inline Mat3 leftJacobianSO3(const Vec3& w) {
  const double th2 = w.squaredNorm();
  const Mat3 W = skew(w);
  double a, b;
  if (th2 < 1e-8) {
    a = 0.5 - th2 / 24.0;
    b = 1.0 / 6.0 - th2 / 120.0;
  } else {
    const double th = std::sqrt(th2);
    a = (1.0 - std::cos(th)) / th2;
    b = (th - std::sin(th)) / (th2 * th);
  }
  return Mat3::Identity() + a * W + b * W * W;
}

inline Transform makeTransform(const Mat3& R, const Vec3& p) {
  Transform T = Transform::Identity();
  T.linear() = R;
  T.translation() = p;
  return T;
}

/// Rotation by `angle` about the line through `center` along unit `axis`.
inline Transform rotationAboutLine(const Vec3& center, const Vec3& axis, double angle) {
  const Mat3 R = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
  return makeTransform(R, center - R * center);
}

}  // namespace toolhand
