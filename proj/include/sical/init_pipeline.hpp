#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sical/measurements.hpp"
#include "sical/rig.hpp"

namespace sical {

struct StageReport {
  std::string name;
  double cost = 0.0;
  int iterations = 0;
  nlohmann::json estimates;
  std::vector<std::string> warnings;
};

struct InitializationResult {
  CalibrationState state;
  std::vector<StageReport> stages;
  // Per radar, per scan: inlier mask from the ego-velocity front-end,
  // consumed later by the refinement's Doppler residuals.
  std::map<std::string, std::vector<std::vector<bool>>> radar_inliers;
};

/// Dynamic initialization: rotation spline and inertial rotations/offsets,
/// radar ego-velocity front-end, rotation-only hand-eye per LiDAR/camera,
/// one-shot sensor-inertial alignment, and the mode-matched linear scale
/// spline (with radar offsets where applicable). Stage failures propagate as
/// StageError with the stage tag.
InitializationResult RunInitialization(const RigConfig &rig, const MeasurementSet &data);

}  // namespace sical
