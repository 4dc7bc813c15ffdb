#include <cmath>

#include "doctest.h"
#include "sical/hand_eye.hpp"
#include "sical/integration.hpp"
#include "sical/radar_ego.hpp"
#include "sical/rotation_recovery.hpp"
#include "sical/sim.hpp"

using namespace sical;

namespace {

RigConfig SingleImuConfig(double duration = 10.0) {
  RigConfig cfg;
  cfg.reference_imu = "imu0";
  cfg.seed = 11;
  cfg.sim.duration = duration;
  cfg.sensors = {SensorConfig{SensorKind::kImu, "imu0", 200.0},
                 SensorConfig{SensorKind::kImu, "imu1", 200.0}};
  return cfg;
}

Mat3 Rz(double angle) { return So3Exp(angle * Vec3::UnitZ()); }

}  // namespace

// ---------------------------------------------------------------------------
// integration terms

TEST_CASE("stationary window integrates to -g * dt") {
  auto cfg = SingleImuConfig(6.0);
  cfg.sim.angular_amplitude = 0.0;
  cfg.sim.linear_amplitude = 0.0;
  auto sc = MakeScenario(cfg);
  const auto imu = SynthesizeImu(sc, "imu0", 200.0, cfg.noise);
  const auto terms = ComputeIntegrationTerms(imu, sc.rot_spline, Mat3::Identity(), 0.0,
                                             ImuIntrinsics{}, 1.0, 2.5);
  REQUIRE(terms.has_value());
  CHECK((terms->c + 1.5 * sc.gravity).norm() < 1e-6);
  CHECK(terms->Span() == doctest::Approx(1.5));
}

TEST_CASE("velocity and position constraints close against the true trajectory") {
  auto cfg = SingleImuConfig(8.0);
  auto sc = MakeScenario(cfg);
  const auto &p1 = sc.true_poses.at("imu1");
  const auto imu0 = SynthesizeImu(sc, "imu0", 400.0, cfg.noise);
  const auto imu1 = SynthesizeImu(sc, "imu1", 400.0, cfg.noise);

  for (const auto &[imu, rot, p_i, off] :
       {std::tuple{&imu0, Mat3(Mat3::Identity()), Vec3(Vec3::Zero()), 0.0},
        std::tuple{&imu1, p1.rotation, p1.translation, p1.time_offset}}) {
    const double t1 = 2.0, t2 = 2.8;
    const auto terms =
        ComputeIntegrationTerms(*imu, sc.rot_spline, rot, off, ImuIntrinsics{}, t1, t2);
    REQUIRE(terms.has_value());
    const Vec3 dv = sc.pos_spline.Evaluate(t2, 1) - sc.pos_spline.Evaluate(t1, 1);
    CHECK((dv - (terms->c - terms->a * p_i + sc.gravity * terms->Span())).norm() < 2e-4);
    const Vec3 dp = sc.pos_spline.Evaluate(t2, 0) - sc.pos_spline.Evaluate(t1, 0);
    const Vec3 predicted = terms->d - terms->b * p_i +
                           sc.pos_spline.Evaluate(t1, 1) * terms->Span() +
                           0.5 * terms->Span() * terms->Span() * sc.gravity;
    CHECK((dp - predicted).norm() < 2e-4);
  }
}

TEST_CASE("halving the sample spacing shrinks the quadrature error ~4x") {
  auto cfg = SingleImuConfig(6.0);
  auto sc = MakeScenario(cfg);
  const auto &p1 = sc.true_poses.at("imu1");
  const double t1 = 1.5, t2 = 2.75;
  const Vec3 dv = sc.pos_spline.Evaluate(t2, 1) - sc.pos_spline.Evaluate(t1, 1);
  double errors[2];
  const double rates[2] = {100.0, 200.0};
  for (int i = 0; i < 2; ++i) {
    const auto imu = SynthesizeImu(sc, "imu1", rates[i], cfg.noise);
    const auto terms = ComputeIntegrationTerms(imu, sc.rot_spline, p1.rotation, p1.time_offset,
                                               ImuIntrinsics{}, t1, t2);
    REQUIRE(terms.has_value());
    errors[i] =
        (dv - (terms->c - terms->a * p1.translation + sc.gravity * terms->Span())).norm();
  }
  CHECK(errors[0] / errors[1] > 2.5);
  CHECK(errors[0] / errors[1] < 6.5);
}

TEST_CASE("windows without bracketing samples are skipped") {
  auto cfg = SingleImuConfig(6.0);
  auto sc = MakeScenario(cfg);
  const auto imu = SynthesizeImu(sc, "imu0", 200.0, cfg.noise);
  CHECK_FALSE(ComputeIntegrationTerms(imu, sc.rot_spline, Mat3::Identity(), 0.0, ImuIntrinsics{},
                                      -1.0, 0.5)
                  .has_value());
  CHECK_FALSE(ComputeIntegrationTerms(imu, sc.rot_spline, Mat3::Identity(), 0.0, ImuIntrinsics{},
                                      5.9, 7.0)
                  .has_value());
  // Exactly on the first sample is fine.
  CHECK(ComputeIntegrationTerms(imu, sc.rot_spline, Mat3::Identity(), 0.0, ImuIntrinsics{}, 0.0,
                                0.5)
            .has_value());
}

// ---------------------------------------------------------------------------
// radar ego velocity

namespace {

std::vector<RadarTarget> MakeScan(const Vec3 &velocity, int count, std::uint64_t salt) {
  std::vector<RadarTarget> scan;
  for (int i = 0; i < count; ++i) {
    const double az = std::sin(0.7 * i + static_cast<double>(salt)) * 1.0;
    const double el = std::cos(1.3 * i) * 0.4;
    const Vec3 dir(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    RadarTarget tgt;
    tgt.position = (3.0 + 0.2 * i) * dir;
    tgt.doppler = -dir.dot(velocity);
    scan.push_back(tgt);
  }
  return scan;
}

}  // namespace

TEST_CASE("noise-free scan recovers the exact velocity") {
  const Vec3 v(0.4, -1.2, 0.3);
  const auto scan = MakeScan(v, 12, 0);
  const auto est = EstimateRadarEgoVelocity(scan, RadarEgoConfig{});
  REQUIRE(est.has_value());
  CHECK((est->velocity - v).norm() < 1e-10);
  CHECK(est->rms < 1e-10);
  for (bool inlier : est->inliers) CHECK(inlier);
}

TEST_CASE("dynamic outliers are excluded") {
  const Vec3 v(1.0, 0.5, -0.2);
  auto scan = MakeScan(v, 30, 1);
  // 20% outliers with clearly inconsistent Doppler.
  for (int i = 0; i < 6; ++i) scan[i].doppler += (i % 2 ? 1.4 : -2.2);
  RadarEgoConfig cfg;
  cfg.inlier_threshold = 0.15;
  const auto est = EstimateRadarEgoVelocity(scan, cfg);
  REQUIRE(est.has_value());
  CHECK((est->velocity - v).norm() < 0.05);
  for (int i = 0; i < 6; ++i) CHECK_FALSE(est->inliers[i]);
  for (size_t i = 6; i < scan.size(); ++i) CHECK(est->inliers[i]);
}

TEST_CASE("single-ray scans are rejected as degenerate") {
  std::vector<RadarTarget> scan;
  const Vec3 dir = Vec3(1.0, 0.2, 0.1).normalized();
  for (int i = 0; i < 10; ++i) scan.push_back({0.0, (2.0 + i) * dir, -dir.dot(Vec3(1, 0, 0))});
  CHECK_FALSE(EstimateRadarEgoVelocity(scan, RadarEgoConfig{}).has_value());
  CHECK_FALSE(EstimateRadarEgoVelocity({scan[0], scan[1]}, RadarEgoConfig{}).has_value());
}

// ---------------------------------------------------------------------------
// rotation spline recovery

TEST_CASE("single IMU rotation spline matches truth") {
  auto cfg = SingleImuConfig(10.0);
  auto sc = MakeScenario(cfg);
  const auto imu = SynthesizeImu(sc, "imu0", 200.0, cfg.noise);
  const KnotGrid grid = KnotGrid::Covering(imu.front().t, imu.back().t, 0.05);
  const auto rec = RecoverRotationSpline({{"imu0", &imu, ImuIntrinsics{}, true}}, grid,
                                         RotationRecoveryConfig{});
  CHECK((rec.rotations.at("imu0") - Mat3::Identity()).norm() == 0.0);
  CHECK(rec.offsets.at("imu0") == 0.0);
  double worst = 0.0;
  for (double t = grid.SupportBegin(); t < imu.back().t - 1e-9; t += 0.01) {
    worst = std::max(worst, RotationDistance(rec.spline.Evaluate(t), sc.rot_spline.Evaluate(t)));
  }
  CHECK(worst < 0.01 * M_PI / 180.0);
}

TEST_CASE("two-IMU recovery finds the relative rotation and offset") {
  auto cfg = SingleImuConfig(10.0);
  auto sc = MakeScenario(cfg);
  sc.true_poses["imu1"].rotation = Rz(M_PI / 2.0);
  sc.true_poses["imu1"].time_offset = 0.0042;
  const auto imu0 = SynthesizeImu(sc, "imu0", 200.0, cfg.noise);
  const auto imu1 = SynthesizeImu(sc, "imu1", 200.0, cfg.noise);
  const KnotGrid grid = KnotGrid::Covering(imu0.front().t, imu0.back().t, 0.05);
  const auto rec = RecoverRotationSpline({{"imu0", &imu0, ImuIntrinsics{}, true},
                                          {"imu1", &imu1, ImuIntrinsics{}, false}},
                                         grid, RotationRecoveryConfig{});
  CHECK(RotationDistance(rec.rotations.at("imu1"), Rz(M_PI / 2.0)) < 0.01 * M_PI / 180.0);
  CHECK(std::abs(rec.offsets.at("imu1") - 0.0042) < 5e-5);
}

TEST_CASE("constant-rate streams trigger the excitation warning") {
  std::vector<ImuMeasurement> imu;
  for (int k = 0; k <= 2000; ++k) {
    imu.push_back({k / 200.0, Vec3(0, 0, 9.81), Vec3(0.3, 0.0, 0.0)});
  }
  const KnotGrid grid = KnotGrid::Covering(0.0, 10.0, 0.1);
  const auto rec =
      RecoverRotationSpline({{"imu0", &imu, ImuIntrinsics{}, true}}, grid,
                            RotationRecoveryConfig{});
  REQUIRE(!rec.warnings.empty());
  CHECK(rec.warnings.front().find("excited") != std::string::npos);
}

// ---------------------------------------------------------------------------
// hand-eye

TEST_CASE("hand-eye self-alignment is the identity") {
  auto cfg = SingleImuConfig(10.0);
  auto sc = MakeScenario(cfg);
  std::vector<OdomPose> poses;
  for (double t = 0.0; t < 10.0; t += 0.1) {
    poses.push_back({t, Quat(sc.rot_spline.Evaluate(t)), Vec3::Zero()});
  }
  const auto he = RotationHandEye(poses, sc.rot_spline, HandEyeConfig{});
  CHECK(RotationDistance(he.rotation, Mat3::Identity()) < 1e-6);
  CHECK(std::abs(he.offset) < 1e-5);
}

TEST_CASE("hand-eye recovers a 180-degree extrinsic and a 7 ms offset") {
  RigConfig cfg;
  cfg.reference_imu = "imu0";
  cfg.seed = 3;
  cfg.sim.duration = 10.0;
  cfg.noise.sigma_odom_rot = 0.2 * M_PI / 180.0;
  SensorConfig lidar{SensorKind::kLidar, "lidar0", 10.0};
  cfg.sensors = {SensorConfig{SensorKind::kImu, "imu0", 200.0}, lidar};
  auto sc = MakeScenario(cfg);
  sc.true_poses["lidar0"].rotation = So3Exp(M_PI * Vec3::UnitX());
  sc.true_poses["lidar0"].time_offset = 0.007;
  RebuildMapAnchors(&sc);
  const auto poses = SynthesizeOdometry(sc, "lidar0", cfg.noise);
  const auto he = RotationHandEye(poses, sc.rot_spline, HandEyeConfig{});
  CHECK(RotationDistance(he.rotation, sc.true_poses["lidar0"].rotation) < 0.1 * M_PI / 180.0);
  CHECK(std::abs(he.offset - 0.007) < 5e-4);
}

TEST_CASE("single-axis rotations are rejected with the axis named") {
  std::vector<OdomPose> poses;
  for (double t = 0.0; t < 10.0; t += 0.1) {
    poses.push_back({t, Quat(Rz(0.5 * std::sin(t))), Vec3::Zero()});
  }
  auto cfg = SingleImuConfig(10.0);
  const auto sc = MakeScenario(cfg);
  CHECK_THROWS_AS(RotationHandEye(poses, sc.rot_spline, HandEyeConfig{}), DegeneracyError);
}

TEST_CASE("too few rotation pairs is an error") {
  std::vector<OdomPose> poses(3);
  auto cfg = SingleImuConfig(6.0);
  const auto sc = MakeScenario(cfg);
  CHECK_THROWS_AS(RotationHandEye(poses, sc.rot_spline, HandEyeConfig{}), UnderConstrainedError);
}
