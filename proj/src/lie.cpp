#include "sical/lie.hpp"

#include <Eigen/SVD>

namespace sical {

Mat3 So3Exp(const Vec3 &phi) {
  const double theta_sq = phi.squaredNorm();
  const Mat3 k = Hat(phi);
  if (theta_sq < kSmallAngle * kSmallAngle) {
    return Mat3::Identity() + k + 0.5 * k * k;
  }
  const double theta = std::sqrt(theta_sq);
  return Mat3::Identity() + std::sin(theta) / theta * k +
         (1.0 - std::cos(theta)) / theta_sq * k * k;
}

Vec3 So3Log(const Mat3 &rot) {
  const double trace = rot.trace();
  const double cos_theta = std::max(-1.0, std::min(1.0, 0.5 * (trace - 1.0)));
  const double theta = std::acos(cos_theta);

  if (theta < kSmallAngle) {
    Vec3 phi(rot(2, 1) - rot(1, 2), rot(0, 2) - rot(2, 0), rot(1, 0) - rot(0, 1));
    return 0.5 * phi;
  }
  const Vec3 antisym(rot(2, 1) - rot(1, 2), rot(0, 2) - rot(2, 0), rot(1, 0) - rot(0, 1));
  if (M_PI - theta > 1e-7) {
    return 0.5 * theta / std::sin(theta) * antisym;
  }

  // Near pi the antisymmetric part vanishes; extract the axis from the
  // symmetric part. The sign follows the antisymmetric part while it is
  // meaningful and falls back to the largest diagonal element at exactly pi.
  const Mat3 sym = 0.5 * (rot + Mat3::Identity());  // = axis * axis^T at pi
  int k = 0;
  sym.diagonal().maxCoeff(&k);
  Vec3 axis = sym.col(k) / std::sqrt(sym(k, k));
  axis.normalize();
  if (antisym.norm() > 1e-10) {
    if (axis.dot(antisym) < 0.0) axis = -axis;
  } else if (axis(k) < 0.0) {
    axis = -axis;
  }
  return theta * axis;
}

Mat3 So3RightJacobian(const Vec3 &phi) {
  const double theta_sq = phi.squaredNorm();
  const Mat3 k = Hat(phi);
  if (theta_sq < kSmallAngle * kSmallAngle) {
    return Mat3::Identity() - 0.5 * k + (1.0 / 6.0) * k * k;
  }
  const double theta = std::sqrt(theta_sq);
  return Mat3::Identity() - (1.0 - std::cos(theta)) / theta_sq * k +
         (theta - std::sin(theta)) / (theta_sq * theta) * k * k;
}

Mat3 So3LeftJacobian(const Vec3 &phi) { return So3RightJacobian(-phi); }

Mat3 ProjectToSo3(const Mat3 &m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Mat3 d = Mat3::Identity();
    d(2, 2) = -1.0;
    r = svd.matrixU() * d * svd.matrixV().transpose();
  }
  return r;
}

double RotationDistance(const Mat3 &a, const Mat3 &b) {
  return So3Log(a.transpose() * b).norm();
}

}  // namespace sical
