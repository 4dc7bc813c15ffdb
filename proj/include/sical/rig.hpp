#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sical/sensor_models.hpp"
#include "sical/spline.hpp"

namespace sical {

enum class SensorKind { kImu, kRadar, kLidar, kCamera };

std::string KindName(SensorKind kind);
SensorKind KindFromName(const std::string &name);

struct NoiseSpec {
  double sigma_accel = 0.0;      // m/s^2
  double sigma_gyro = 0.0;       // rad/s
  double sigma_doppler = 0.0;    // m/s
  double sigma_radar_pos = 0.0;  // m
  double sigma_lidar = 0.0;      // m
  double sigma_pixel = 0.0;      // px
  double sigma_odom_rot = 0.0;   // rad
  double sigma_odom_pos = 0.0;   // m
  double outlier_fraction = 0.0;

  void Validate() const;
};

struct SensorConfig {
  SensorKind kind = SensorKind::kImu;
  std::string name;
  double rate = 100.0;  // Hz (frames or scans per second for non-IMUs)
  int targets_per_scan = 30;   // radar
  int points_per_scan = 1500;  // lidar
  ImuIntrinsics imu_intrinsics;
  CameraIntrinsics camera_intrinsics;
};

struct SimOptions {
  double duration = 30.0;          // s
  double angular_amplitude = 0.6;  // rad
  double linear_amplitude = 0.8;   // m
  double base_frequency = 0.5;     // Hz
  double offset_range = 0.05;      // true offsets drawn uniformly in +-range, s
  double readout_time = 0.03;      // true RS readout, s
  int landmark_count = 600;
};

/// Per-sensor spatiotemporal parameters relative to the reference IMU body
/// frame. Rotation maps sensor-frame vectors into the reference frame.
struct SensorPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double time_offset = 0.0;   // s, sensor clock + offset = reference clock
  double readout_time = 0.0;  // s, cameras only
  double scale = 1.0;         // visual scale beta, cameras only
};

enum class ScaleMode { kAcceleration, kVelocity, kTranslation };

std::string ScaleModeName(ScaleMode mode);

struct CalibrationState {
  std::map<std::string, SensorPose> sensors;
  Vec3 gravity = Vec3(0, 0, -9.81);
  So3Spline rot_spline;
  R3Spline scale_spline;
  ScaleMode scale_mode = ScaleMode::kAcceleration;
  std::map<std::string, ImuIntrinsics> imu_intrinsics;
  std::map<std::int64_t, double> inverse_depths;  // per landmark, 1/m
};

struct RigConfig {
  std::vector<SensorConfig> sensors;
  std::string reference_imu;
  double gravity_magnitude = 9.81;
  double rot_spline_dt = 0.05;    // s
  double scale_spline_dt = 0.05;  // s
  double timepiece = 0.25;        // alignment window length, s
  double max_offset = 0.1;        // box bound on time offsets, s
  std::uint64_t seed = 0;
  NoiseSpec noise;
  SimOptions sim;
  bool estimate_imu_intrinsics = false;

  int CountKind(SensorKind kind) const;
  const SensorConfig &Sensor(const std::string &name) const;
  std::vector<std::string> NamesOfKind(SensorKind kind) const;

  /// Throws ConfigError listing every violation: a designated reference IMU
  /// must exist, names must be unique, the suite needs at least one IMU and
  /// two sensors total, and all rates/sigmas must be valid.
  void Validate() const;

  /// Scale-spline mode implied by the sensor census: acceleration with IMUs
  /// only, velocity when radars are the only aiding sensors, translation as
  /// soon as any LiDAR or camera is present.
  ScaleMode SelectScaleMode() const;
};

RigConfig RigConfigFromJsonFile(const std::string &path);
RigConfig RigConfigFromJsonText(const std::string &text);
std::string RigConfigToJsonText(const RigConfig &config);

}  // namespace sical
