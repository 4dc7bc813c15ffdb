#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>

namespace sical {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

// Below this angle (rad), exp/log/Jacobians switch to 4th-order Taylor series.
inline constexpr double kSmallAngle = 1e-8;

/// Skew-symmetric matrix such that Hat(v) * w == v.cross(w).
template <typename T>
Eigen::Matrix<T, 3, 3> Hat(const Eigen::Matrix<T, 3, 1> &v) {
  Eigen::Matrix<T, 3, 3> m;
  // clang-format off
  m << T(0), -v.z(),  v.y(),
       v.z(),  T(0), -v.x(),
      -v.y(),  v.x(),  T(0);
  // clang-format on
  return m;
}

Mat3 So3Exp(const Vec3 &phi);
Vec3 So3Log(const Mat3 &rot);

/// Right Jacobian of SO(3): Exp(phi + d) ~= Exp(phi) * Exp(Jr(phi) * d).
Mat3 So3RightJacobian(const Vec3 &phi);
/// Left Jacobian, equal to Jr(phi)^T and Jr(-phi).
Mat3 So3LeftJacobian(const Vec3 &phi);

/// Re-orthonormalize a near-rotation matrix (SVD projection).
Mat3 ProjectToSo3(const Mat3 &m);

/// Geodesic distance between two rotations, radians.
double RotationDistance(const Mat3 &a, const Mat3 &b);

// Quaternion-form exp/log, templated so that ceres Jets flow through spline
// evaluation (including derivatives w.r.t. time offsets).

template <typename T>
Eigen::Quaternion<T> QuatExp(const Eigen::Matrix<T, 3, 1> &phi) {
  const T theta_sq = phi.squaredNorm();
  T half_sin_by_theta, cos_half;
  if (theta_sq < T(kSmallAngle * kSmallAngle)) {
    half_sin_by_theta = T(0.5) - theta_sq / T(48.0);
    cos_half = T(1.0) - theta_sq / T(8.0);
  } else {
    const T theta = sqrt(theta_sq);
    half_sin_by_theta = sin(T(0.5) * theta) / theta;
    cos_half = cos(T(0.5) * theta);
  }
  Eigen::Quaternion<T> q;
  q.w() = cos_half;
  q.vec() = half_sin_by_theta * phi;
  return q;
}

template <typename T>
Eigen::Matrix<T, 3, 1> QuatLog(const Eigen::Quaternion<T> &q_in) {
  Eigen::Quaternion<T> q = q_in;
  if (q.w() < T(0)) q.coeffs() = -q.coeffs();
  const T vec_norm_sq = q.vec().squaredNorm();
  T two_atan_by_norm;
  if (vec_norm_sq < T(kSmallAngle * kSmallAngle)) {
    // theta/2 ~= |vec|/w for small angles
    two_atan_by_norm = T(2.0) / q.w() - T(2.0 / 3.0) * vec_norm_sq / (q.w() * q.w() * q.w());
  } else {
    const T vec_norm = sqrt(vec_norm_sq);
    two_atan_by_norm = T(2.0) * atan2(vec_norm, q.w()) / vec_norm;
  }
  return two_atan_by_norm * q.vec();
}

}  // namespace sical
