#pragma once

#include <optional>
#include <vector>

#include "sical/sensor_models.hpp"
#include "sical/spline.hpp"

namespace sical {

// Accelerometer integrals over an alignment window [t_begin, t_end] in the
// reference clock. With them the velocity/position constraints read
//   v(t_end) - v(t_begin) = c - A * p_i + g * dt
//   p(t_end) - p(t_begin) = d - B * p_i + v(t_begin) * dt + g * dt^2 / 2
// where p_i is the IMU extrinsic translation and g the gravity vector.
struct IntegrationTerms {
  Vec3 c = Vec3::Zero();  // m/s
  Vec3 d = Vec3::Zero();  // m
  Mat3 a = Mat3::Zero();  // 1/s^2 (times p_i gives m/s)
  Mat3 b = Mat3::Zero();  // 1/s   (times p_i gives m)
  double t_begin = 0.0;
  double t_end = 0.0;

  double Span() const { return t_end - t_begin; }
};

/// Trapezoidal integration of the measured specific force (intrinsics
/// inverted) and the rotational terms; d and B use a nested trapezoid over
/// the running inner integral. Measurement stamps live in the IMU clock and
/// map to the reference clock through `offset`; the window is skipped
/// (nullopt) when it is not bracketed by at least two samples.
std::optional<IntegrationTerms> ComputeIntegrationTerms(
    const std::vector<ImuMeasurement> &imu, const So3Spline &rot_spline, const Mat3 &rotation,
    double offset, const ImuIntrinsics &intrinsics, double t_begin, double t_end);

}  // namespace sical
