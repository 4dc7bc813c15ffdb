#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sical/sensor_models.hpp"

namespace sical {

struct RadarEgoConfig {
  double inlier_threshold = 0.3;  // m/s on the Doppler residual
  int ransac_iterations = 100;
  double min_direction_sv = 1e-3;  // smallest singular value of the direction matrix
  std::uint64_t seed = 0;
};

struct RadarEgoEstimate {
  Vec3 velocity = Vec3::Zero();  // radar velocity in the radar frame (v_hat of the
                                 // Doppler constraint p^T v_hat = -doppler * |p|)
  std::vector<bool> inliers;
  double rms = 0.0;  // Doppler residual RMS over inliers
};

/// RANSAC over minimal three-target solves of the linear Doppler system,
/// followed by a least-squares refit on the consensus set. Returns nullopt
/// when fewer than three inliers survive or the consensus directions are
/// degenerate (all targets near one ray).
std::optional<RadarEgoEstimate> EstimateRadarEgoVelocity(const std::vector<RadarTarget> &scan,
                                                         const RadarEgoConfig &config);

}  // namespace sical
