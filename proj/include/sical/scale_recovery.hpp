#pragma once

#include <map>
#include <string>
#include <vector>

#include "sical/alignment.hpp"
#include "sical/rig.hpp"
#include "sical/sensor_models.hpp"
#include "sical/spline.hpp"

namespace sical {

struct RadarScaleInput {
  std::string name;
  const std::vector<std::vector<RadarTarget>> *scans = nullptr;
  std::vector<std::vector<bool>> inliers;  // per scan, from the ego-velocity front-end
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double offset_seed = 0.0;
};

struct OdomScaleInput {
  std::string name;
  const std::vector<OdomPose> *poses = nullptr;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double offset = 0.0;
  double scale = 1.0;  // visual scale for cameras, 1 for LiDARs
};

struct ScaleRecoveryConfig {
  double max_offset = 0.1;
  double weight_doppler = 10.0;
  double weight_accel = 1.0;
  double weight_position = 100.0;
  int max_iterations = 100;
};

struct ScaleRecoveryResult {
  R3Spline spline;  // mode semantics: acceleration, velocity, or position of the
                    // reference body in the world frame
  std::map<std::string, double> radar_offsets;
  double final_cost = 0.0;
  int iterations = 0;
};

/// Recovers the linear scale spline for the given mode. Acceleration mode is
/// a direct linear fit to the corrected accelerometer samples; velocity mode
/// solves Doppler + accelerometer residuals jointly with the radar time
/// offsets; translation mode fits the world-frame odometry positions (with
/// per-sensor map translations as nuisance unknowns), then recovers radar
/// offsets against the spline derivative with the knots held fixed.
ScaleRecoveryResult RecoverLinearScaleSpline(ScaleMode mode, const So3Spline &rot_spline,
                                             const std::vector<AlignmentImu> &imus,
                                             const std::vector<RadarScaleInput> &radars,
                                             const std::vector<OdomScaleInput> &odoms,
                                             const Vec3 &gravity,
                                             const std::map<std::string, Vec3> &translations,
                                             const KnotGrid &grid,
                                             const ScaleRecoveryConfig &config);

}  // namespace sical
