#include "doctest.h"
#include "sical/rng.hpp"
#include "sical/sensor_models.hpp"

using namespace sical;

namespace {

CameraIntrinsics TestCamera(DistortionModel model, std::vector<double> dist) {
  CameraIntrinsics intr;
  intr.fx = 500.0;
  intr.fy = 505.0;
  intr.cx = 320.0;
  intr.cy = 240.0;
  intr.width = 640;
  intr.height = 480;
  intr.model = model;
  intr.distortion = std::move(dist);
  return intr;
}

}  // namespace

TEST_CASE("imu forward model is a passthrough at identity intrinsics") {
  ImuIntrinsics intr;
  const Vec3 a(0.1, -9.8, 0.3), w(0.02, 0.5, -1.0);
  const auto [am, wm] = ImuForward(a, w, intr);
  CHECK((am - a).norm() == doctest::Approx(0.0));
  CHECK((wm - w).norm() == doctest::Approx(0.0));
}

TEST_CASE("bias only shifts the measurement") {
  ImuIntrinsics intr;
  intr.accel_bias = Vec3(0.1, 0.0, 0.0);
  const auto [am, wm] = ImuForward(Vec3::Zero(), Vec3::Zero(), intr);
  CHECK((am - Vec3(0.1, 0, 0)).norm() == doctest::Approx(0.0));
  CHECK(wm.norm() == doctest::Approx(0.0));
}

TEST_CASE("gyro scale applies through the mapping matrix") {
  ImuIntrinsics intr;
  intr.gyro_mapping = Vec3(1.01, 1.0, 1.0).asDiagonal();
  const auto [am, wm] = ImuForward(Vec3::Zero(), Vec3::UnitX(), intr);
  CHECK(wm.x() == doctest::Approx(1.01));
  CHECK(wm.y() == doctest::Approx(0.0));
  CHECK(wm.z() == doctest::Approx(0.0));
}

TEST_CASE("intrinsic inversion undoes the forward model") {
  ImuIntrinsics intr;
  intr.accel_mapping << 1.02, 0.003, -0.001, 0, 0.99, 0.002, 0, 0, 1.01;
  intr.gyro_mapping << 0.98, -0.002, 0.001, 0, 1.03, 0.004, 0, 0, 1.0;
  intr.accel_from_gyro = So3Exp(Vec3(0.01, -0.02, 0.005));
  intr.accel_bias = Vec3(0.05, -0.02, 0.03);
  intr.gyro_bias = Vec3(-0.001, 0.002, 0.0005);
  intr.Validate();
  const Vec3 a(1.0, -2.0, 9.5), w(0.4, -0.1, 0.8);
  const auto [am, wm] = ImuForward(a, w, intr);
  CHECK((intr.InvertAccel(am) - a).norm() < 1e-12);
  CHECK((intr.InvertGyro(wm) - w).norm() < 1e-12);
}

TEST_CASE("imu forward model is affine") {
  ImuIntrinsics intr;
  intr.accel_mapping(0, 1) = 0.01;
  intr.accel_bias = Vec3(0.1, 0.2, -0.3);
  const Vec3 a1(1, 2, 3), a2(-0.5, 0.4, 1.1);
  const Vec3 sum = ImuForward(a1 + a2, Vec3::Zero(), intr).first;
  const Vec3 parts = ImuForward(a1, Vec3::Zero(), intr).first +
                     ImuForward(a2, Vec3::Zero(), intr).first -
                     ImuForward(Vec3::Zero(), Vec3::Zero(), intr).first;
  CHECK((sum - parts).norm() < 1e-13);
}

TEST_CASE("doppler sign and orthogonality") {
  // Radar moving +x in a static world: target ahead closes at -1 m/s.
  CHECK(RadarDoppler(Vec3(10, 0, 0), Vec3(-1, 0, 0)) == doctest::Approx(-1.0));
  CHECK(RadarDoppler(Vec3(0, 5, 0), Vec3(-1, 0, 0)) == doctest::Approx(0.0));
  CHECK_THROWS_AS(RadarDoppler(Vec3::Zero(), Vec3(1, 0, 0)), DomainError);
}

TEST_CASE("doppler equals the explicit radial projection") {
  StreamRng rng(3, "doppler", 0);
  for (int i = 0; i < 40; ++i) {
    const Vec3 p(rng.Uniform(-5, 5), rng.Uniform(-5, 5), rng.Uniform(1, 5));
    const Vec3 v(rng.Gaussian(), rng.Gaussian(), rng.Gaussian());
    CHECK(RadarDoppler(p, v) == doctest::Approx(p.normalized().dot(v)).epsilon(1e-12));
    CHECK(RadarDoppler(3.7 * p, v) == doctest::Approx(RadarDoppler(p, v)).epsilon(1e-12));
  }
}

TEST_CASE("projection hits the principal point on the optical axis") {
  const auto intr = TestCamera(DistortionModel::kBrown, {});
  const Vec2 px = Project(Vec3(0, 0, 1), intr);
  CHECK(px.x() == doctest::Approx(320.0));
  CHECK(px.y() == doctest::Approx(240.0));
  CHECK(Project(Vec3(1, 0, 1), intr).x() == doctest::Approx(820.0));
  CHECK_THROWS_AS(Project(Vec3(0, 0, -1), intr), DomainError);
}

TEST_CASE("unproject inverts project for both distortion models") {
  for (const auto &intr : {TestCamera(DistortionModel::kBrown, {0.1, -0.05, 0.001, -0.002, 0.01}),
                           TestCamera(DistortionModel::kFisheye, {0.03, -0.01, 0.004, -0.001})}) {
    StreamRng rng(4, "camera", 0);
    for (int i = 0; i < 50; ++i) {
      const Vec2 px(rng.Uniform(40, 600), rng.Uniform(40, 440));
      const double lambda = rng.Uniform(0.1, 2.0);
      const Vec3 p = Unproject(px, lambda, intr);
      CHECK(p.z() == doctest::Approx(1.0 / lambda).epsilon(1e-9));
      CHECK((Project(p, intr) - px).norm() < 1e-6);
    }
  }
  CHECK_THROWS_AS(Unproject(Vec2(320, 240), 0.0, TestCamera(DistortionModel::kBrown, {})),
                  DomainError);
}

TEST_CASE("unproject at the principal point scales the optical axis") {
  const auto intr = TestCamera(DistortionModel::kBrown, {});
  const Vec3 p = Unproject(Vec2(320, 240), 0.5, intr);
  CHECK((p - Vec3(0, 0, 2)).norm() < 1e-12);
}

TEST_CASE("rolling shutter row time anchors at the middle row") {
  CHECK(RsRowTime(10.0, 240.0, 480, 0.03) == doctest::Approx(10.0));
  CHECK(RsRowTime(10.0, 100.0, 480, 0.0) == doctest::Approx(10.0));
  CHECK(RsRowTime(10.0, 0.0, 480, 0.03) == doctest::Approx(10.0 - 0.015));
  CHECK(RsRowTime(1.0, 120.0, 480, 0.03) < RsRowTime(1.0, 360.0, 480, 0.03));
  CHECK_THROWS_AS(RsRowTime(0.0, 480.0, 480, 0.03), DomainError);
  CHECK_THROWS_AS(RsRowTime(0.0, -1.0, 480, 0.03), DomainError);
}

TEST_CASE("intrinsics validation rejects bad shapes") {
  ImuIntrinsics imu;
  imu.accel_mapping(1, 0) = 0.01;
  CHECK_THROWS_AS(imu.Validate(), ConfigError);
  CameraIntrinsics cam = TestCamera(DistortionModel::kBrown, {});
  cam.fx = 0.0;
  CHECK_THROWS_AS(cam.Validate(), ConfigError);
}
