#include "sical/manifolds.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace sical {

namespace {

class SphereParameterization : public ceres::LocalParameterization {
 public:
  bool Plus(const double *x_raw, const double *delta_raw, double *out_raw) const override {
    const Eigen::Map<const Eigen::Vector3d> x(x_raw);
    const Eigen::Map<const Eigen::Vector2d> delta(delta_raw);
    Eigen::Map<Eigen::Vector3d> out(out_raw);
    const double norm = x.norm();
    if (norm < 1e-12) {
      out = x;
      return true;
    }
    Eigen::Matrix<double, 3, 2> basis;
    TangentBasis(x / norm, &basis);
    const Eigen::Vector3d stepped = x + basis * delta;
    out = stepped * (norm / stepped.norm());
    return true;
  }

  bool ComputeJacobian(const double *x_raw, double *jacobian) const override {
    const Eigen::Map<const Eigen::Vector3d> x(x_raw);
    Eigen::Map<Eigen::Matrix<double, 3, 2, Eigen::RowMajor>> j(jacobian);
    const double norm = x.norm();
    if (norm < 1e-12) {
      j.setZero();
      return true;
    }
    Eigen::Matrix<double, 3, 2> basis;
    TangentBasis(x / norm, &basis);
    j = basis;
    return true;
  }

  int GlobalSize() const override { return 3; }
  int LocalSize() const override { return 2; }

 private:
  static void TangentBasis(const Eigen::Vector3d &unit, Eigen::Matrix<double, 3, 2> *basis) {
    const Eigen::Vector3d pick =
        std::abs(unit.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
    basis->col(0) = unit.cross(pick).normalized();
    basis->col(1) = unit.cross(basis->col(0));
  }
};

}  // namespace

ceres::LocalParameterization *NewQuaternionParameterization() {
  return new ceres::EigenQuaternionParameterization;
}

ceres::LocalParameterization *NewSphereParameterization() {
  return new SphereParameterization;
}

}  // namespace sical
