#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "sical/lie.hpp"

namespace sical {

// Segment-level evaluation of cumulative cubic B-splines, templated on the
// scalar so ceres Jets can flow through knots, normalized time, and time
// offsets alike.

template <typename T>
Eigen::Matrix<T, 4, 1> MonomialVector(const T &u, int derivative_order) {
  Eigen::Matrix<T, 4, 1> m;
  switch (derivative_order) {
    case 0:
      m << T(1), u, u * u, u * u * u;
      break;
    case 1:
      m << T(0), T(1), T(2) * u, T(3) * u * u;
      break;
    default:
      m << T(0), T(0), T(2), T(6) * u;
      break;
  }
  return m;
}

template <typename T>
Eigen::Matrix<T, 4, 1> CumulativeBasisT(const T &u, int derivative_order, double dt) {
  static const Eigen::Matrix4d kCumulative = (Eigen::Matrix4d() << 6, 0, 0, 0,  //
                                              5, 3, -3, 1,                      //
                                              1, 3, 3, -2,                      //
                                              0, 0, 0, 1)
                                                 .finished() /
                                             6.0;
  Eigen::Matrix<T, 4, 1> lambda = kCumulative.cast<T>() * MonomialVector(u, derivative_order);
  return lambda / T(std::pow(dt, derivative_order));
}

/// R^3 segment value of the requested derivative order from 4 knots.
template <typename T>
Eigen::Matrix<T, 3, 1> EvalR3Segment(const Eigen::Matrix<T, 3, 1> knots[4], const T &u, double dt,
                                     int order) {
  const Eigen::Matrix<T, 4, 1> lambda = CumulativeBasisT(u, order, dt);
  Eigen::Matrix<T, 3, 1> value =
      order == 0 ? Eigen::Matrix<T, 3, 1>(knots[0]) : Eigen::Matrix<T, 3, 1>::Zero().eval();
  for (int j = 1; j < 4; ++j) {
    value += lambda[j] * (knots[j] - knots[j - 1]);
  }
  return value;
}

template <typename T>
struct So3SegmentKinematics {
  Eigen::Quaternion<T> q;                // world-from-body rotation
  Eigen::Matrix<T, 3, 1> w_body;         // body-frame angular velocity
  Eigen::Matrix<T, 3, 1> alpha_body;     // body-frame angular acceleration
};

/// SO(3) cumulative segment R = k0 * prod_j Exp(lambda_j * Log(k_j-1^T k_j)),
/// with body-frame velocity/acceleration accumulated through the product.
template <typename T>
So3SegmentKinematics<T> EvalSo3Segment(const Eigen::Quaternion<T> knots[4], const T &u, double dt,
                                       bool with_kinematics = true) {
  const Eigen::Matrix<T, 4, 1> lambda = CumulativeBasisT(u, 0, dt);
  So3SegmentKinematics<T> out;
  out.q = knots[0];
  out.w_body.setZero();
  out.alpha_body.setZero();

  Eigen::Matrix<T, 4, 1> lambda_d, lambda_dd;
  if (with_kinematics) {
    lambda_d = CumulativeBasisT(u, 1, dt);
    lambda_dd = CumulativeBasisT(u, 2, dt);
  }

  for (int j = 1; j < 4; ++j) {
    const Eigen::Matrix<T, 3, 1> delta = QuatLog(Eigen::Quaternion<T>(
        knots[j - 1].conjugate() * knots[j]));
    const Eigen::Quaternion<T> step = QuatExp(Eigen::Matrix<T, 3, 1>(lambda[j] * delta));
    out.q = out.q * step;
    if (with_kinematics) {
      const Eigen::Quaternion<T> step_inv = step.conjugate();
      const Eigen::Matrix<T, 3, 1> w_j = lambda_d[j] * delta;
      const Eigen::Matrix<T, 3, 1> w_rot = step_inv * out.w_body;
      out.alpha_body = step_inv * out.alpha_body - w_j.cross(w_rot) + lambda_dd[j] * delta;
      out.w_body = w_rot + w_j;
    }
  }
  return out;
}

}  // namespace sical
