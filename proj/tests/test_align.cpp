#include <cmath>

#include "doctest.h"
#include "sical/alignment.hpp"
#include "sical/radar_ego.hpp"
#include "sical/scale_recovery.hpp"
#include "sical/sim.hpp"

using namespace sical;

namespace {

constexpr double kDeg = M_PI / 180.0;

RigConfig TwoImuConfig(double duration = 12.0) {
  RigConfig cfg;
  cfg.reference_imu = "imu0";
  cfg.seed = 7;
  cfg.sim.duration = duration;
  cfg.sensors = {SensorConfig{SensorKind::kImu, "imu0", 200.0},
                 SensorConfig{SensorKind::kImu, "imu1", 200.0}};
  return cfg;
}

std::vector<AlignmentImu> MakeAlignmentImus(const GroundTruthScenario &sc,
                                            const std::vector<ImuMeasurement> *imu0,
                                            const std::vector<ImuMeasurement> *imu1) {
  std::vector<AlignmentImu> imus;
  imus.push_back({"imu0", imu0, ImuIntrinsics{}, Mat3::Identity(), 0.0, true});
  if (imu1 != nullptr) {
    const auto &sp = sc.true_poses.at("imu1");
    imus.push_back({"imu1", imu1, ImuIntrinsics{}, sp.rotation, sp.time_offset, false});
  }
  return imus;
}

AlignmentRadar MakeAlignmentRadar(const GroundTruthScenario &sc, const std::string &name,
                                  const std::vector<RadarScanTruth> &scans) {
  AlignmentRadar radar;
  radar.name = name;
  radar.offset = sc.true_poses.at(name).time_offset;
  for (const auto &scan : scans) {
    const auto est = EstimateRadarEgoVelocity(scan.targets, RadarEgoConfig{});
    if (est) radar.ego_velocities.emplace_back(scan.targets.front().t, est->velocity);
  }
  return radar;
}

SensorConfig MakeCamera(const std::string &name, double rate) {
  SensorConfig cam{SensorKind::kCamera, name, rate};
  cam.camera_intrinsics.fx = 450.0;
  cam.camera_intrinsics.fy = 450.0;
  cam.camera_intrinsics.cx = 320.0;
  cam.camera_intrinsics.cy = 240.0;
  cam.camera_intrinsics.width = 640;
  cam.camera_intrinsics.height = 480;
  return cam;
}

double GravityAngle(const Vec3 &a, const Vec3 &b) {
  return std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0));
}

}  // namespace

TEST_CASE("radar-inertial alignment recovers gravity and extrinsics") {
  auto cfg = TwoImuConfig();
  cfg.sensors.push_back(SensorConfig{SensorKind::kRadar, "radar0", 10.0});
  auto sc = MakeScenario(cfg);
  const auto imu0 = SynthesizeImu(sc, "imu0", 200.0, cfg.noise);
  const auto imu1 = SynthesizeImu(sc, "imu1", 200.0, cfg.noise);
  const auto scans = SynthesizeRadar(sc, "radar0", 10.0, 30, cfg.noise);

  const auto res = OneShotAlignment(sc.rot_spline, MakeAlignmentImus(sc, &imu0, &imu1),
                                    {MakeAlignmentRadar(sc, "radar0", scans)}, {}, 0.0,
                                    cfg.sim.duration, AlignmentConfig{});
  CHECK(GravityAngle(res.gravity, sc.gravity) < 0.05 * kDeg);
  CHECK(std::abs(res.gravity.norm() - 9.81) < 1e-12);
  CHECK((res.translations.at("imu1") - sc.true_poses.at("imu1").translation).norm() < 1e-3);
  CHECK((res.translations.at("radar0") - sc.true_poses.at("radar0").translation).norm() < 1e-3);
  CHECK(RotationDistance(res.radar_rotations.at("radar0"),
                         sc.true_poses.at("radar0").rotation) < 0.05 * kDeg);
}

TEST_CASE("camera odometry alignment recovers the visual scale") {
  auto cfg = TwoImuConfig();
  cfg.sensors.push_back(MakeCamera("cam0", 15.0));
  auto sc = MakeScenario(cfg);
  sc.true_poses["cam0"].scale = 2.0;
  RebuildMapAnchors(&sc);
  const auto imu0 = SynthesizeImu(sc, "imu0", 200.0, cfg.noise);
  const auto imu1 = SynthesizeImu(sc, "imu1", 200.0, cfg.noise);
  const auto poses = SynthesizeOdometry(sc, "cam0", cfg.noise);
  const auto &cp = sc.true_poses.at("cam0");
  AlignmentOdometry odom{"cam0", SensorKind::kCamera, &poses, cp.rotation, cp.time_offset};

  const auto res = OneShotAlignment(sc.rot_spline, MakeAlignmentImus(sc, &imu0, &imu1), {},
                                    {odom}, 0.0, cfg.sim.duration, AlignmentConfig{});
  CHECK(std::abs(res.scales.at("cam0") - 2.0) / 2.0 < 0.005);
  CHECK(GravityAngle(res.gravity, sc.gravity) < 0.05 * kDeg);
  CHECK((res.translations.at("cam0") - cp.translation).norm() < 5e-3);
  CHECK((res.translations.at("imu1") - sc.true_poses.at("imu1").translation).norm() < 1e-3);
}

TEST_CASE("inertial-only alignment recovers translations and warns about gravity") {
  auto cfg = TwoImuConfig();
  auto sc = MakeScenario(cfg);
  const auto imu0 = SynthesizeImu(sc, "imu0", 200.0, cfg.noise);
  const auto imu1 = SynthesizeImu(sc, "imu1", 200.0, cfg.noise);

  const auto res = OneShotAlignment(sc.rot_spline, MakeAlignmentImus(sc, &imu0, &imu1), {}, {},
                                    0.0, cfg.sim.duration, AlignmentConfig{});
  CHECK((res.translations.at("imu1") - sc.true_poses.at("imu1").translation).norm() < 1e-3);
  CHECK(std::abs(res.gravity.norm() - 9.81) < 1e-9);
  REQUIRE(!res.warnings.empty());
  bool mentioned = false;
  for (const auto &w : res.warnings) mentioned |= w.find("gravity") != std::string::npos;
  CHECK(mentioned);
}

TEST_CASE("a lone IMU admits no alignment") {
  auto cfg = TwoImuConfig(8.0);
  auto sc = MakeScenario(cfg);
  const auto imu0 = SynthesizeImu(sc, "imu0", 200.0, cfg.noise);
  CHECK_THROWS_AS(OneShotAlignment(sc.rot_spline, MakeAlignmentImus(sc, &imu0, nullptr), {}, {},
                                   0.0, cfg.sim.duration, AlignmentConfig{}),
                  DegeneracyError);
  CHECK_THROWS_AS(OneShotAlignment(sc.rot_spline, {}, {}, {}, 0.0, cfg.sim.duration,
                                   AlignmentConfig{}),
                  ConfigError);
}

// ---------------------------------------------------------------------------
// linear scale spline

TEST_CASE("acceleration mode reproduces the world acceleration") {
  auto cfg = TwoImuConfig();
  auto sc = MakeScenario(cfg);
  const auto imu0 = SynthesizeImu(sc, "imu0", 200.0, cfg.noise);
  const auto imu1 = SynthesizeImu(sc, "imu1", 200.0, cfg.noise);
  std::map<std::string, Vec3> translations = {
      {"imu0", Vec3::Zero()}, {"imu1", sc.true_poses.at("imu1").translation}};
  const KnotGrid grid = KnotGrid::Covering(0.0, cfg.sim.duration, 0.05);
  const auto res =
      RecoverLinearScaleSpline(ScaleMode::kAcceleration, sc.rot_spline,
                               MakeAlignmentImus(sc, &imu0, &imu1), {}, {}, sc.gravity,
                               translations, grid, ScaleRecoveryConfig{});
  double worst = 0.0;
  for (double t = 0.5; t < cfg.sim.duration - 0.5; t += 0.03) {
    worst = std::max(worst, (res.spline.Evaluate(t, 0) - sc.pos_spline.Evaluate(t, 2)).norm());
  }
  // The true acceleration is only C0 at the knots, so the C2 spline smooths
  // the kinks; the bound reflects that approximation floor, not noise.
  CHECK(worst < 0.1);
  CHECK(res.final_cost < 0.05);
}

TEST_CASE("translation mode fits positions up to the map-origin gauge") {
  auto cfg = TwoImuConfig();
  cfg.sensors.push_back(SensorConfig{SensorKind::kLidar, "lidar0", 10.0});
  auto sc = MakeScenario(cfg);
  const auto imu0 = SynthesizeImu(sc, "imu0", 200.0, cfg.noise);
  const auto imu1 = SynthesizeImu(sc, "imu1", 200.0, cfg.noise);
  const auto poses = SynthesizeOdometry(sc, "lidar0", cfg.noise);
  const auto &lp = sc.true_poses.at("lidar0");
  std::map<std::string, Vec3> translations = {{"imu0", Vec3::Zero()},
                                              {"imu1", sc.true_poses.at("imu1").translation},
                                              {"lidar0", lp.translation}};
  const KnotGrid grid = KnotGrid::Covering(0.0, cfg.sim.duration, 0.05);
  const auto res = RecoverLinearScaleSpline(
      ScaleMode::kTranslation, sc.rot_spline, MakeAlignmentImus(sc, &imu0, &imu1), {},
      {OdomScaleInput{"lidar0", &poses, lp.rotation, lp.translation, lp.time_offset, 1.0}},
      sc.gravity, translations, grid, ScaleRecoveryConfig{});
  const Vec3 shift = res.spline.Evaluate(1.0, 0) - sc.pos_spline.Evaluate(1.0, 0);
  double worst_pos = 0.0, worst_vel = 0.0;
  for (double t = 0.5; t < cfg.sim.duration - 0.5; t += 0.03) {
    worst_pos = std::max(worst_pos, (res.spline.Evaluate(t, 0) - sc.pos_spline.Evaluate(t, 0) -
                                     shift)
                                        .norm());
    worst_vel =
        std::max(worst_vel, (res.spline.Evaluate(t, 1) - sc.pos_spline.Evaluate(t, 1)).norm());
  }
  CHECK(worst_pos < 1e-3);
  CHECK(worst_vel < 1e-3);
}

TEST_CASE("velocity mode recovers a large radar time offset") {
  auto cfg = TwoImuConfig();
  cfg.sensors.push_back(SensorConfig{SensorKind::kRadar, "radar0", 10.0});
  auto sc = MakeScenario(cfg);
  sc.true_poses["radar0"].time_offset = -0.119;
  const auto imu0 = SynthesizeImu(sc, "imu0", 200.0, cfg.noise);
  const auto imu1 = SynthesizeImu(sc, "imu1", 200.0, cfg.noise);
  const auto truth = SynthesizeRadar(sc, "radar0", 10.0, 30, cfg.noise);
  std::vector<std::vector<RadarTarget>> scans;
  RadarScaleInput radar{"radar0", &scans, {}, sc.true_poses.at("radar0").rotation,
                        sc.true_poses.at("radar0").translation, 0.0};
  for (const auto &scan : truth) {
    scans.push_back(scan.targets);
    radar.inliers.emplace_back(scan.targets.size(), true);
  }
  std::map<std::string, Vec3> translations = {{"imu0", Vec3::Zero()},
                                              {"imu1", sc.true_poses.at("imu1").translation}};
  const KnotGrid grid = KnotGrid::Covering(0.0, cfg.sim.duration, 0.05);
  ScaleRecoveryConfig scfg;
  scfg.max_offset = 0.15;
  const auto res =
      RecoverLinearScaleSpline(ScaleMode::kVelocity, sc.rot_spline,
                               MakeAlignmentImus(sc, &imu0, &imu1), {radar}, {}, sc.gravity,
                               translations, grid, scfg);
  CHECK(std::abs(res.radar_offsets.at("radar0") + 0.119) < 2e-3);
  double worst = 0.0;
  for (double t = 0.5; t < cfg.sim.duration - 0.5; t += 0.03) {
    worst = std::max(worst, (res.spline.Evaluate(t, 0) - sc.pos_spline.Evaluate(t, 1)).norm());
  }
  CHECK(worst < 5e-3);
}

TEST_CASE("mode and sensor census must agree") {
  auto cfg = TwoImuConfig(8.0);
  auto sc = MakeScenario(cfg);
  const auto imu0 = SynthesizeImu(sc, "imu0", 200.0, cfg.noise);
  const auto imus = MakeAlignmentImus(sc, &imu0, nullptr);
  const KnotGrid grid = KnotGrid::Covering(0.0, cfg.sim.duration, 0.05);
  std::vector<std::vector<RadarTarget>> scans;
  const std::vector<RadarScaleInput> radars = {{"radar0", &scans, {}, Mat3::Identity(),
                                                Vec3::Zero(), 0.0}};
  CHECK_THROWS_AS(RecoverLinearScaleSpline(ScaleMode::kAcceleration, sc.rot_spline, imus, radars,
                                           {}, sc.gravity, {{"imu0", Vec3::Zero()}}, grid,
                                           ScaleRecoveryConfig{}),
                  ConfigError);
  CHECK_THROWS_AS(RecoverLinearScaleSpline(ScaleMode::kVelocity, sc.rot_spline, imus, {}, {},
                                           sc.gravity, {{"imu0", Vec3::Zero()}}, grid,
                                           ScaleRecoveryConfig{}),
                  ConfigError);
  CHECK_THROWS_AS(RecoverLinearScaleSpline(ScaleMode::kTranslation, sc.rot_spline, imus, {}, {},
                                           sc.gravity, {{"imu0", Vec3::Zero()}}, grid,
                                           ScaleRecoveryConfig{}),
                  ConfigError);
}

TEST_CASE("the scale mode follows the sensor census") {
  auto cfg = TwoImuConfig();
  CHECK(cfg.SelectScaleMode() == ScaleMode::kAcceleration);
  cfg.sensors.push_back(SensorConfig{SensorKind::kRadar, "radar0", 10.0});
  CHECK(cfg.SelectScaleMode() == ScaleMode::kVelocity);
  cfg.sensors.push_back(MakeCamera("cam0", 15.0));
  CHECK(cfg.SelectScaleMode() == ScaleMode::kTranslation);
}
