#pragma once

#include <map>
#include <string>
#include <vector>

#include "sical/sensor_models.hpp"
#include "sical/spline.hpp"

namespace sical {

struct GyroStream {
  std::string name;
  const std::vector<ImuMeasurement> *data = nullptr;
  ImuIntrinsics intrinsics;
  bool is_reference = false;
};

struct RotationRecoveryConfig {
  double max_offset = 0.1;        // s, box bound on inter-IMU offsets
  double offset_grid_step = 0.005;
  double sigma_gyro = 0.002;      // rad/s, residual weighting
  double min_excitation = 0.05;   // rad/s STD below which a warning is emitted
  int max_iterations = 50;
};

struct RotationRecoveryResult {
  So3Spline spline;                       // world = reference body at support begin
  std::map<std::string, Mat3> rotations;  // IMU frame -> reference body frame
  std::map<std::string, double> offsets;  // reference clock = IMU clock + offset
  double final_cost = 0.0;
  int iterations = 0;
  std::vector<std::string> warnings;
};

/// Recovers the reference-body rotation spline from all gyroscope streams,
/// together with the inter-IMU rotations and time offsets. Knots are seeded
/// by dead-reckoning the reference gyro; the reference IMU is pinned to
/// identity rotation and zero offset, and after the solve the spline is
/// re-gauged so the rotation at support begin is the identity.
RotationRecoveryResult RecoverRotationSpline(const std::vector<GyroStream> &imus,
                                             const KnotGrid &grid,
                                             const RotationRecoveryConfig &config);

}  // namespace sical
