#include <cmath>

#include "doctest.h"
#include "sical/init_pipeline.hpp"
#include "sical/sim.hpp"

using namespace sical;

namespace {

constexpr double kDeg = M_PI / 180.0;

RigConfig FullRig() {
  RigConfig cfg;
  cfg.reference_imu = "imu0";
  cfg.seed = 21;
  cfg.sim.duration = 12.0;
  cfg.sim.offset_range = 0.0;  // keep the radar clock aligned for alignment
  SensorConfig cam{SensorKind::kCamera, "cam0", 15.0};
  cam.camera_intrinsics.fx = 450.0;
  cam.camera_intrinsics.fy = 450.0;
  cam.camera_intrinsics.cx = 320.0;
  cam.camera_intrinsics.cy = 240.0;
  cam.camera_intrinsics.width = 640;
  cam.camera_intrinsics.height = 480;
  cfg.sensors = {SensorConfig{SensorKind::kImu, "imu0", 200.0},
                 SensorConfig{SensorKind::kImu, "imu1", 200.0},
                 SensorConfig{SensorKind::kRadar, "radar0", 10.0},
                 SensorConfig{SensorKind::kLidar, "lidar0", 10.0}, cam};
  return cfg;
}

bool HasStage(const InitializationResult &res, const std::string &name) {
  for (const auto &stage : res.stages) {
    if (stage.name.rfind(name, 0) == 0) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("full-rig initialization lands on the true calibration") {
  const auto cfg = FullRig();
  const auto sc = MakeScenario(cfg);
  const auto data = SynthesizeAll(sc);
  const auto res = RunInitialization(cfg, data);
  const auto &st = res.state;

  CHECK(st.scale_mode == ScaleMode::kTranslation);
  CHECK(HasStage(res, "rotation"));
  CHECK(HasStage(res, "radar-ego"));
  CHECK(HasStage(res, "hand-eye"));
  CHECK(HasStage(res, "alignment"));
  CHECK(HasStage(res, "scale"));

  const double gravity_angle = std::acos(std::clamp(
      st.gravity.normalized().dot(sc.gravity.normalized()), -1.0, 1.0));
  CHECK(gravity_angle < 0.1 * kDeg);

  for (const auto &name : {"imu1", "radar0", "lidar0", "cam0"}) {
    const auto &est = st.sensors.at(name);
    const auto &tru = sc.true_poses.at(name);
    CAPTURE(name);
    CHECK(RotationDistance(est.rotation, tru.rotation) < 0.2 * kDeg);
    CHECK(std::abs(est.time_offset - tru.time_offset) < 2e-3);
  }
  CHECK((st.sensors.at("imu1").translation - sc.true_poses.at("imu1").translation).norm() < 2e-3);
  CHECK((st.sensors.at("radar0").translation - sc.true_poses.at("radar0").translation).norm() <
        2e-3);
  CHECK(std::abs(st.sensors.at("cam0").scale - sc.true_poses.at("cam0").scale) /
            sc.true_poses.at("cam0").scale <
        0.01);

  // Rotation spline against truth inside the data span.
  double worst_rot = 0.0, worst_vel = 0.0;
  for (double t = 0.5; t < cfg.sim.duration - 0.5; t += 0.03) {
    worst_rot = std::max(worst_rot,
                         RotationDistance(st.rot_spline.Evaluate(t), sc.rot_spline.Evaluate(t)));
    worst_vel = std::max(
        worst_vel, (st.scale_spline.Evaluate(t, 1) - sc.pos_spline.Evaluate(t, 1)).norm());
  }
  CHECK(worst_rot < 0.05 * kDeg);
  CHECK(worst_vel < 2e-3);

  REQUIRE(res.radar_inliers.count("radar0") == 1);
  CHECK(res.radar_inliers.at("radar0").size() == data.radar.at("radar0").size());
}

TEST_CASE("IMU-only initialization skips the aided stages") {
  RigConfig cfg;
  cfg.reference_imu = "imu0";
  cfg.seed = 4;
  cfg.sim.duration = 10.0;
  cfg.sensors = {SensorConfig{SensorKind::kImu, "imu0", 200.0},
                 SensorConfig{SensorKind::kImu, "imu1", 200.0}};
  const auto sc = MakeScenario(cfg);
  const auto res = RunInitialization(cfg, SynthesizeAll(sc));
  CHECK(res.state.scale_mode == ScaleMode::kAcceleration);
  CHECK_FALSE(HasStage(res, "radar-ego"));
  CHECK_FALSE(HasStage(res, "hand-eye"));
  CHECK(res.radar_inliers.empty());
  CHECK(RotationDistance(res.state.sensors.at("imu1").rotation,
                         sc.true_poses.at("imu1").rotation) < 0.05 * kDeg);
  CHECK(std::abs(res.state.sensors.at("imu1").time_offset -
                 sc.true_poses.at("imu1").time_offset) < 2e-4);
}

TEST_CASE("disjoint IMU spans fail in the span stage") {
  RigConfig cfg;
  cfg.reference_imu = "imu0";
  cfg.seed = 4;
  cfg.sim.duration = 10.0;
  cfg.sensors = {SensorConfig{SensorKind::kImu, "imu0", 200.0},
                 SensorConfig{SensorKind::kImu, "imu1", 200.0}};
  const auto sc = MakeScenario(cfg);
  auto data = SynthesizeAll(sc);
  for (auto &m : data.imu.at("imu1")) m.t += 100.0;
  try {
    RunInitialization(cfg, data);
    FAIL("expected StageError");
  } catch (const StageError &e) {
    CHECK(e.stage == "span");
  }
}
