#pragma once

#include <string>
#include <vector>

#include "sical/sensor_models.hpp"

namespace sical {

struct StationaryCalibConfig {
  double gravity_magnitude = 9.81;
  /// Per-axis sample standard deviation above which a piece is rejected as
  /// non-stationary.
  double max_accel_stddev = 0.2;   // m/s^2
  double max_gyro_stddev = 0.05;   // rad/s
  double min_direction_spread = 0.05;  // smallest singular value of stacked unit gravities
  int max_iterations = 50;
};

struct StationaryCalibResult {
  ImuIntrinsics intrinsics;            // accel mapping + bias, gyro bias; gyro mapping untouched
  std::vector<Vec3> piece_gravities;   // body-frame specific force per accepted piece
  std::vector<int> rejected_pieces;    // indices into the input, non-stationary
  bool gyro_scale_unobservable = true;
  double final_cost = 0.0;
};

/// Joint least squares over the accelerometer intrinsics (upper-triangular
/// mapping + bias) and one sphere-constrained specific-force vector per
/// stationary piece; the gyroscope contributes only its bias (sample mean).
/// Non-stationary pieces are rejected first; fewer than six surviving pieces
/// throws UnderConstrainedError, near-coplanar gravity directions throw
/// DegeneracyError.
StationaryCalibResult CalibrateImuIntrinsicsStationary(
    const std::vector<std::vector<ImuMeasurement>> &pieces,
    const StationaryCalibConfig &config = {});

}  // namespace sical
