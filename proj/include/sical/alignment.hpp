#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sical/rig.hpp"
#include "sical/sensor_models.hpp"
#include "sical/spline.hpp"

namespace sical {

// Inputs to the one-shot sensor-inertial alignment. The rotation spline and
// all rotations/offsets are already recovered; measurement stamps map to the
// reference clock as t_ref = t_sensor + offset.

struct AlignmentImu {
  std::string name;
  const std::vector<ImuMeasurement> *data = nullptr;
  ImuIntrinsics intrinsics;
  Mat3 rotation = Mat3::Identity();
  double offset = 0.0;
  bool is_reference = false;
};

struct AlignmentRadar {
  std::string name;
  // Per-scan ego velocities in the radar frame, radar clock.
  std::vector<std::pair<double, Vec3>> ego_velocities;
  double offset = 0.0;  // best guess; refined later with the scale spline
};

struct AlignmentOdometry {
  std::string name;
  SensorKind kind = SensorKind::kLidar;
  const std::vector<OdomPose> *poses = nullptr;
  Mat3 rotation = Mat3::Identity();  // sensor -> reference body, from hand-eye
  double offset = 0.0;
};

struct AlignmentConfig {
  double timepiece = 0.25;        // s, inertial window length
  double gravity_magnitude = 9.81;
  double weight_velocity = 10.0;  // on velocity-change rows (1 / (m/s))
  double weight_position = 100.0; // on position-change rows (1 / m)
  int max_iterations = 100;
};

struct AlignmentResult {
  Vec3 gravity = Vec3::Zero();
  std::map<std::string, Vec3> translations;       // sensor -> reference body, all sensors
  std::map<std::string, Mat3> radar_rotations;
  std::map<std::string, double> scales;           // visual scale per camera
  // Reference-body world velocities: at the global timepiece boundaries
  // (inertial family) and at the odometry stamps of each LiDAR/camera.
  std::vector<std::pair<double, Vec3>> reference_velocities;
  std::map<std::string, std::vector<std::pair<double, Vec3>>> window_velocities;
  double final_cost = 0.0;
  int iterations = 0;
  std::vector<std::string> warnings;
};

/// Joint linear-scale alignment: velocity-change constraints from the
/// integrated accelerometers against free window velocities (inertial),
/// substituted radar ego velocities (radar), and odometry-derived position
/// changes (LiDAR/camera, with an unknown scale for cameras). Gravity lives
/// on the sphere of the configured magnitude.
AlignmentResult OneShotAlignment(const So3Spline &rot_spline,
                                 const std::vector<AlignmentImu> &imus,
                                 const std::vector<AlignmentRadar> &radars,
                                 const std::vector<AlignmentOdometry> &odometries,
                                 double t_begin, double t_end, const AlignmentConfig &config);

}  // namespace sical
