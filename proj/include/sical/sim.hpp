#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sical/measurements.hpp"
#include "sical/rig.hpp"

namespace sical {

/// World plane n^T p + d = 0 with a bounded patch for point sampling.
struct PlanePatch {
  Vec3 normal = Vec3::UnitZ();
  double d = 0.0;
  Vec3 center = Vec3::Zero();
  Vec3 axis_u = Vec3::UnitX();
  Vec3 axis_v = Vec3::UnitY();
  double half_u = 1.0;
  double half_v = 1.0;
};

struct Excitation {
  double angular_amplitude = 0.6;  // rad
  double linear_amplitude = 0.8;   // m
  double base_frequency = 0.5;     // Hz
};

/// Ground truth: reference-IMU trajectory splines, gravity, true rig
/// parameters, and a static environment. The world frame is the reference
/// IMU's body frame at time zero, so R(0) = I and p(0) = 0.
struct GroundTruthScenario {
  RigConfig config;
  So3Spline rot_spline;
  R3Spline pos_spline;
  Vec3 gravity = Vec3::Zero();
  std::map<std::string, SensorPose> true_poses;
  std::map<std::string, ImuIntrinsics> true_imu_intrinsics;
  std::map<std::string, Mat3> map_rotation;     // per odometry sensor, map-to-world
  std::map<std::string, Vec3> map_translation;  // per odometry sensor
  std::vector<PlanePatch> planes;
  std::vector<Vec3> landmarks;
  std::uint64_t seed = 0;

  /// Reference-body pose/kinematics at world time t.
  struct Kinematics {
    Mat3 rot;       // world from body
    Vec3 pos, vel, accel;
    Vec3 w_world, w_body, alpha_world;
  };
  Kinematics At(double t) const;

  /// World pose of a sensor at world time t.
  void SensorPoseAt(const std::string &name, double t, Mat3 *rot, Vec3 *pos) const;
  /// World-frame linear velocity of a sensor's origin at world time t.
  Vec3 SensorVelocityAt(const std::string &name, double t) const;
  /// World-frame linear acceleration of a sensor's origin at world time t.
  Vec3 SensorAccelerationAt(const std::string &name, double t) const;

  /// Sensor-clock interval [begin, end] that stays inside spline support for
  /// every offset up to the configured bound.
  double DataBegin() const;
  double DataEnd() const;
};

/// Deterministic sinusoidal knot trajectories with all axes excited.
std::pair<So3Spline, R3Spline> GenerateTrajectory(std::uint64_t seed, double duration,
                                                  const Excitation &excitation, double dt);

/// Builds scenario truth from the config: trajectory, gravity direction, true
/// extrinsics/offsets/readout per sensor, box-room environment, landmarks.
GroundTruthScenario MakeScenario(const RigConfig &config);

/// Re-anchors the odometry map frames at the (possibly overridden) true
/// poses; call after editing `true_poses` in a scenario.
void RebuildMapAnchors(GroundTruthScenario *scenario);

std::vector<ImuMeasurement> SynthesizeImu(const GroundTruthScenario &scenario,
                                          const std::string &name, double rate,
                                          const NoiseSpec &noise);

struct RadarScanTruth {
  std::vector<RadarTarget> targets;
  std::vector<bool> is_outlier;
};
std::vector<RadarScanTruth> SynthesizeRadar(const GroundTruthScenario &scenario,
                                            const std::string &name, double rate,
                                            int targets_per_scan, const NoiseSpec &noise);

std::vector<LidarPoint> SynthesizeLidar(const GroundTruthScenario &scenario,
                                        const std::string &name, double scan_rate,
                                        int points_per_scan, const NoiseSpec &noise);

struct CameraSimResult {
  std::vector<FeatureObservation> observations;
  int dropped_nonconverged = 0;
};
CameraSimResult SynthesizeCamera(const GroundTruthScenario &scenario, const std::string &name,
                                 double frame_rate, const NoiseSpec &noise);

/// Map-biased pose stream for a LiDAR or camera (front-end stand-in). Camera
/// positions are divided by the true visual scale.
std::vector<OdomPose> SynthesizeOdometry(const GroundTruthScenario &scenario,
                                         const std::string &name, const NoiseSpec &noise);

/// Up-to-scale landmark positions in the camera's map frame (SfM stand-in).
std::map<std::int64_t, Vec3> SynthesizeSfmLandmarks(const GroundTruthScenario &scenario,
                                                    const std::string &name);

/// Every stream the rig declares, in one call.
MeasurementSet SynthesizeAll(const GroundTruthScenario &scenario);

/// True calibration parameters in estimator form (splines included).
CalibrationState TrueState(const GroundTruthScenario &scenario);

/// Stationary IMU segment at a fixed attitude, for the static intrinsic
/// calibrator: a~ = M_a(-R^T g) + b_a plus noise, w~ = M_w R_aw 0 + b_w.
std::vector<ImuMeasurement> SimulateStationaryImu(const Mat3 &world_from_body, double duration,
                                                  double rate, const ImuIntrinsics &intrinsics,
                                                  const Vec3 &gravity, double sigma_accel,
                                                  double sigma_gyro, std::uint64_t seed,
                                                  int piece_index);

void WriteGroundTruth(const std::string &path, const GroundTruthScenario &scenario);

}  // namespace sical
