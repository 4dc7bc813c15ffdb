#include <Eigen/Geometry>

#include "doctest.h"
#include "sical/lie.hpp"
#include "sical/rng.hpp"

using namespace sical;

TEST_CASE("hat matrix reproduces the cross product") {
  const Vec3 v(0.3, -1.2, 2.1);
  const Vec3 w(-0.7, 0.4, 0.9);
  CHECK((Hat(v) * w - v.cross(w)).norm() == doctest::Approx(0.0));
  CHECK((Hat(v) + Hat(v).transpose()).norm() == doctest::Approx(0.0));
}

TEST_CASE("exp matches the angle-axis rotation") {
  StreamRng rng(11, "lie", 0);
  for (int i = 0; i < 50; ++i) {
    Vec3 axis(rng.Gaussian(), rng.Gaussian(), rng.Gaussian());
    axis.normalize();
    const double angle = rng.Uniform(0.0, 3.0);
    const Mat3 expected = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
    CHECK((So3Exp(angle * axis) - expected).norm() < 1e-12);
  }
}

TEST_CASE("log inverts exp across the angle range") {
  StreamRng rng(12, "lie", 0);
  for (int i = 0; i < 100; ++i) {
    Vec3 axis(rng.Gaussian(), rng.Gaussian(), rng.Gaussian());
    axis.normalize();
    const double angle = rng.Uniform(1e-10, M_PI - 1e-7);
    const Vec3 phi = angle * axis;
    CHECK((So3Log(So3Exp(phi)) - phi).norm() < 1e-9);
  }
}

TEST_CASE("log at pi returns a pi-norm vector mapping back to the rotation") {
  for (const Vec3 &axis : {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1),
                           Vec3(1, 1, 1).normalized(), Vec3(-0.3, 0.8, 0.52).normalized()}) {
    const Mat3 rot = So3Exp(M_PI * axis);
    const Vec3 phi = So3Log(rot);
    // acos conditioning near trace -1 limits the angle accuracy to ~sqrt(eps)
    CHECK(phi.norm() == doctest::Approx(M_PI).epsilon(1e-7));
    CHECK((So3Exp(phi) - rot).norm() < 1e-7);
  }
}

TEST_CASE("small angle branch stays accurate") {
  const Vec3 phi(1e-10, -2e-10, 5e-11);
  CHECK((So3Log(So3Exp(phi)) - phi).norm() < 1e-16);
  CHECK((So3Exp(phi) - (Mat3::Identity() + Hat(phi))).norm() < 1e-18);
}

TEST_CASE("right jacobian matches a finite-difference probe") {
  StreamRng rng(13, "lie", 0);
  for (int i = 0; i < 20; ++i) {
    const Vec3 phi(rng.Uniform(-2, 2), rng.Uniform(-2, 2), rng.Uniform(-2, 2));
    const Mat3 jr = So3RightJacobian(phi);
    const double h = 1e-6;
    for (int a = 0; a < 3; ++a) {
      const Vec3 d = h * Vec3::Unit(a);
      // Exp(phi + d) ~ Exp(phi) Exp(Jr d)
      const Vec3 observed = So3Log(So3Exp(phi).transpose() * So3Exp(phi + d));
      CHECK((observed - jr * d).norm() < 1e-10);
    }
  }
}

TEST_CASE("left jacobian is the right jacobian of the negated argument") {
  const Vec3 phi(0.4, -1.1, 0.8);
  CHECK((So3LeftJacobian(phi) - So3RightJacobian(-phi)).norm() < 1e-14);
  CHECK((So3LeftJacobian(phi) - So3RightJacobian(phi).transpose()).norm() < 1e-14);
}

TEST_CASE("quaternion exp and log agree with the matrix forms") {
  StreamRng rng(14, "lie", 0);
  for (int i = 0; i < 50; ++i) {
    const Vec3 phi(rng.Uniform(-3, 3), rng.Uniform(-3, 3), rng.Uniform(-3, 3));
    if (phi.norm() >= M_PI - 1e-6) continue;
    const Quat q = QuatExp<double>(phi);
    CHECK((q.toRotationMatrix() - So3Exp(phi)).norm() < 1e-12);
    CHECK((QuatLog<double>(q) - phi).norm() < 1e-10);
  }
}

TEST_CASE("projection restores orthonormality") {
  Mat3 noisy = So3Exp(Vec3(0.2, 0.5, -0.1));
  noisy(0, 1) += 1e-3;
  noisy(2, 2) -= 1e-3;
  const Mat3 fixed = ProjectToSo3(noisy);
  CHECK((fixed * fixed.transpose() - Mat3::Identity()).norm() < 1e-12);
  CHECK(fixed.determinant() == doctest::Approx(1.0));
  CHECK((fixed - noisy).norm() < 5e-3);
}

TEST_CASE("rotation distance is the geodesic angle") {
  const Mat3 a = So3Exp(Vec3(0.1, 0.2, 0.3));
  const Mat3 b = a * So3Exp(Vec3(0.0, 0.0, 0.25));
  CHECK(RotationDistance(a, b) == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(RotationDistance(a, a) == doctest::Approx(0.0));
}
