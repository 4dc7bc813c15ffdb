#include "sical/init_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sical/alignment.hpp"
#include "sical/errors.hpp"
#include "sical/hand_eye.hpp"
#include "sical/radar_ego.hpp"
#include "sical/rotation_recovery.hpp"
#include "sical/scale_recovery.hpp"

namespace sical {

namespace {

nlohmann::json ToJson(const Vec3 &v) { return {v.x(), v.y(), v.z()}; }

nlohmann::json ToJson(const Mat3 &r) {
  const Quat q(r);
  return {{"qw", q.w()}, {"qx", q.x()}, {"qy", q.y()}, {"qz", q.z()}};
}

template <typename Fn>
auto Stage(const std::string &tag, Fn &&fn) {
  try {
    return fn();
  } catch (const StageError &) {
    throw;
  } catch (const std::exception &e) {
    throw StageError(tag, e.what());
  }
}

}  // namespace

InitializationResult RunInitialization(const RigConfig &rig, const MeasurementSet &data) {
  rig.Validate();
  InitializationResult result;

  // Common data span in the reference clock: intersection of the IMU streams.
  double t_begin = -std::numeric_limits<double>::max();
  double t_end = std::numeric_limits<double>::max();
  for (const auto &[name, stream] : data.imu) {
    if (stream.empty()) throw StageError("span", "IMU stream '" + name + "' is empty");
    t_begin = std::max(t_begin, stream.front().t);
    t_end = std::min(t_end, stream.back().t);
  }
  if (data.imu.empty()) throw StageError("span", "no IMU streams in the measurement set");
  if (t_end - t_begin < 8 * rig.rot_spline_dt) {
    throw StageError("span", "IMU streams overlap too little for spline recovery");
  }

  // ---- stage 1: rotation spline + inertial rotations/offsets -------------
  const KnotGrid rot_grid = KnotGrid::Covering(t_begin, t_end, rig.rot_spline_dt);
  std::vector<GyroStream> gyro_streams;
  for (const auto &sensor : rig.sensors) {
    if (sensor.kind != SensorKind::kImu) continue;
    gyro_streams.push_back({sensor.name, &data.imu.at(sensor.name), sensor.imu_intrinsics,
                            sensor.name == rig.reference_imu});
  }
  RotationRecoveryConfig rot_config;
  rot_config.max_offset = rig.max_offset;
  rot_config.sigma_gyro = std::max(rig.noise.sigma_gyro, 1e-4);
  const auto rotation = Stage("rotation-spline", [&] {
    return RecoverRotationSpline(gyro_streams, rot_grid, rot_config);
  });
  {
    StageReport report{"rotation-spline", rotation.final_cost, rotation.iterations, {},
                       rotation.warnings};
    for (const auto &[name, r] : rotation.rotations) {
      report.estimates[name] = {{"rotation", ToJson(r)}, {"offset", rotation.offsets.at(name)}};
    }
    result.stages.push_back(std::move(report));
  }

  // ---- stage 2: radar ego-velocity front-end ------------------------------
  std::map<std::string, std::vector<std::pair<double, Vec3>>> ego_velocities;
  for (const auto &[name, scans] : data.radar) {
    RadarEgoConfig ego_config;
    ego_config.seed = rig.seed;
    ego_config.inlier_threshold = std::max(0.15, 3.0 * rig.noise.sigma_doppler);
    auto &series = ego_velocities[name];
    auto &masks = result.radar_inliers[name];
    int rejected = 0;
    for (const auto &scan : scans) {
      const auto estimate = EstimateRadarEgoVelocity(scan, ego_config);
      if (!estimate || scan.empty()) {
        masks.emplace_back(scan.size(), false);
        ++rejected;
        continue;
      }
      series.emplace_back(scan.front().t, estimate->velocity);
      masks.emplace_back(estimate->inliers.begin(), estimate->inliers.end());
    }
    StageReport report{"radar-ego/" + name, 0.0, 0, {}, {}};
    report.estimates = {{"scans", scans.size()}, {"rejected", rejected}};
    if (series.size() < 2) {
      throw StageError("radar-ego/" + name, "fewer than two usable radar scans");
    }
    result.stages.push_back(std::move(report));
  }

  // ---- stage 3: rotation-only hand-eye per LiDAR/camera -------------------
  std::map<std::string, HandEyeResult> hand_eye;
  for (const auto &sensor : rig.sensors) {
    if (sensor.kind != SensorKind::kLidar && sensor.kind != SensorKind::kCamera) continue;
    HandEyeConfig he_config;
    he_config.max_offset = rig.max_offset;
    const auto he = Stage("hand-eye/" + sensor.name, [&] {
      return RotationHandEye(data.odometry.at(sensor.name), rotation.spline, he_config);
    });
    hand_eye[sensor.name] = he;
    StageReport report{"hand-eye/" + sensor.name, he.final_cost, he.iterations, {}, {}};
    report.estimates = {{"rotation", ToJson(he.rotation)}, {"offset", he.offset}};
    result.stages.push_back(std::move(report));
  }

  // ---- stage 4: one-shot sensor-inertial alignment ------------------------
  std::vector<AlignmentImu> align_imus;
  for (const auto &stream : gyro_streams) {
    align_imus.push_back({stream.name, stream.data, stream.intrinsics,
                          rotation.rotations.at(stream.name), rotation.offsets.at(stream.name),
                          stream.is_reference});
  }
  std::vector<AlignmentRadar> align_radars;
  for (const auto &[name, series] : ego_velocities) {
    align_radars.push_back({name, series, 0.0});
  }
  std::vector<AlignmentOdometry> align_odoms;
  for (const auto &sensor : rig.sensors) {
    if (sensor.kind != SensorKind::kLidar && sensor.kind != SensorKind::kCamera) continue;
    align_odoms.push_back({sensor.name, sensor.kind, &data.odometry.at(sensor.name),
                           hand_eye.at(sensor.name).rotation, hand_eye.at(sensor.name).offset});
  }
  AlignmentConfig align_config;
  align_config.timepiece = rig.timepiece;
  align_config.gravity_magnitude = rig.gravity_magnitude;
  const auto alignment = Stage("alignment", [&] {
    return OneShotAlignment(rotation.spline, align_imus, align_radars, align_odoms, t_begin,
                            t_end, align_config);
  });
  {
    StageReport report{"alignment", alignment.final_cost, alignment.iterations, {},
                       alignment.warnings};
    report.estimates["gravity"] = ToJson(alignment.gravity);
    for (const auto &[name, p] : alignment.translations) {
      report.estimates["translations"][name] = ToJson(p);
    }
    for (const auto &[name, r] : alignment.radar_rotations) {
      report.estimates["radar_rotations"][name] = ToJson(r);
    }
    for (const auto &[name, beta] : alignment.scales) report.estimates["scales"][name] = beta;
    result.stages.push_back(std::move(report));
  }

  // ---- stage 5: linear scale spline (+ radar offsets) ---------------------
  const ScaleMode mode = rig.SelectScaleMode();
  std::vector<RadarScaleInput> scale_radars;
  for (const auto &[name, scans] : data.radar) {
    scale_radars.push_back({name, &scans, result.radar_inliers.at(name),
                            alignment.radar_rotations.at(name), alignment.translations.at(name),
                            0.0});
  }
  std::vector<OdomScaleInput> scale_odoms;
  for (const auto &odom : align_odoms) {
    if (odom.kind == SensorKind::kCamera && !alignment.scales.count(odom.name)) continue;
    const double beta = odom.kind == SensorKind::kCamera ? alignment.scales.at(odom.name) : 1.0;
    scale_odoms.push_back({odom.name, odom.poses, odom.rotation,
                           alignment.translations.at(odom.name), odom.offset, beta});
  }
  const KnotGrid scale_grid = KnotGrid::Covering(t_begin, t_end, rig.scale_spline_dt);
  ScaleRecoveryConfig scale_config;
  scale_config.max_offset = rig.max_offset;
  const auto scale = Stage("scale-spline", [&] {
    return RecoverLinearScaleSpline(mode, rotation.spline, align_imus, scale_radars, scale_odoms,
                                    alignment.gravity, alignment.translations, scale_grid,
                                    scale_config);
  });
  {
    StageReport report{"scale-spline", scale.final_cost, scale.iterations, {}, {}};
    report.estimates["mode"] = ScaleModeName(mode);
    for (const auto &[name, tau] : scale.radar_offsets) {
      report.estimates["radar_offsets"][name] = tau;
    }
    result.stages.push_back(std::move(report));
  }

  // ---- assemble the state --------------------------------------------------
  CalibrationState &state = result.state;
  state.rot_spline = rotation.spline;
  state.scale_spline = scale.spline;
  state.scale_mode = mode;
  state.gravity = alignment.gravity;
  for (const auto &sensor : rig.sensors) {
    SensorPose pose;
    pose.translation = alignment.translations.at(sensor.name);
    switch (sensor.kind) {
      case SensorKind::kImu:
        pose.rotation = rotation.rotations.at(sensor.name);
        pose.time_offset = rotation.offsets.at(sensor.name);
        state.imu_intrinsics[sensor.name] = sensor.imu_intrinsics;
        break;
      case SensorKind::kRadar:
        pose.rotation = alignment.radar_rotations.at(sensor.name);
        if (scale.radar_offsets.count(sensor.name)) {
          pose.time_offset = scale.radar_offsets.at(sensor.name);
        }
        break;
      case SensorKind::kLidar:
        pose.rotation = hand_eye.at(sensor.name).rotation;
        pose.time_offset = hand_eye.at(sensor.name).offset;
        break;
      case SensorKind::kCamera:
        pose.rotation = hand_eye.at(sensor.name).rotation;
        pose.time_offset = hand_eye.at(sensor.name).offset;
        if (alignment.scales.count(sensor.name)) pose.scale = alignment.scales.at(sensor.name);
        break;
    }
    state.sensors[sensor.name] = pose;
  }
  return result;
}

}  // namespace sical
