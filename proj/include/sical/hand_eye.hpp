#pragma once

#include <string>
#include <vector>

#include "sical/sensor_models.hpp"
#include "sical/spline.hpp"

namespace sical {

struct HandEyeConfig {
  double max_offset = 0.1;         // s, box bound on the time offset
  double offset_grid_step = 0.005;
  double min_pair_angle = 0.005;   // rad, relative rotations below this are skipped
  int min_pairs = 10;
  double min_axis_spread = 0.01;   // second eigenvalue of the axis scatter
  int max_iterations = 50;
};

struct HandEyeResult {
  Mat3 rotation = Mat3::Identity();  // sensor frame -> reference body frame
  double offset = 0.0;               // reference clock = sensor clock + offset
  double final_cost = 0.0;
  int iterations = 0;
};

/// Rotation-only hand-eye alignment between a pose stream (any map frame,
/// sensor clock) and the reference rotation spline. The offset is seeded by
/// a coarse grid search on the rotation-rate magnitudes and refined jointly
/// with the rotation. Throws DegeneracyError when the relative rotations
/// share a single axis, UnderConstrainedError when too few pairs survive.
HandEyeResult RotationHandEye(const std::vector<OdomPose> &poses, const So3Spline &rot_spline,
                              const HandEyeConfig &config);

}  // namespace sical
