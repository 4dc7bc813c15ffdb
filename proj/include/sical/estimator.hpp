#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <ceres/ceres.h>

#include "sical/assoc.hpp"
#include "sical/measurements.hpp"
#include "sical/rig.hpp"

namespace sical {

struct EstimatorConfig {
  // Cauchy loss scales, native units per family.
  double cauchy_gyro = 0.1;     // rad/s
  double cauchy_accel = 0.5;    // m/s^2
  double cauchy_doppler = 0.5;  // m/s
  double cauchy_surfel = 0.05;  // m
  double cauchy_reproj = 2.0;   // px
  // Whitening sigmas; the rig's configured noise overrides these floors
  // when larger, so zero-noise runs stay well conditioned.
  double sigma_gyro = 2e-3;     // rad/s
  double sigma_accel = 2e-2;    // m/s^2
  double sigma_doppler = 2e-2;  // m/s
  double sigma_surfel = 2e-2;   // m
  double sigma_pixel = 1.0;     // px
  int max_iterations = 100;
  AssociationConfig assoc;
};

struct BatchReport {
  int index = 0;
  std::string label;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  std::vector<double> cost_trace;  // cost after each accepted/attempted step
  int deactivated = 0;             // measurements outside spline support
  bool rebuilt_associations = false;
  std::vector<std::string> notes;
};

/// Batch refinement over the full state: five residual families (gyroscope,
/// accelerometer, Doppler, point-to-surfel, visual reprojection), Cauchy
/// robust losses, diagonal 1/sigma^2 whitening, quaternion and fixed-norm
/// sphere parameterizations, box bounds on time offsets. The reference IMU's
/// spatiotemporal parameters stay pinned throughout.
class Estimator {
 public:
  Estimator(const RigConfig &rig, const MeasurementSet &data, const EstimatorConfig &config,
            std::map<std::string, std::vector<std::vector<bool>>> radar_inliers = {});

  struct Freeze {
    bool imu_spatiotemporal = false;
    bool imu_intrinsics = true;
  };

  /// One batch solve in place. Throws NumericalError on solver failure and
  /// ConfigError when no residual family is active.
  BatchReport Solve(CalibrationState *state, const Freeze &freeze, int batch_index = 1);

  /// The refinement schedule: batch 1 with IMU spatiotemporal parameters
  /// frozen, batch 2 with them freed (plus IMU intrinsics when the rig asks
  /// for them), and, when any LiDAR is present, an association rebuild from
  /// the batch-2 state followed by batch 3. Associations are also built
  /// before batch 1, so a LiDAR rig rebuilds exactly twice.
  std::vector<BatchReport> MultiBatchRefine(CalibrationState *state);

  /// Rebuilds the surfel map / correspondences and the visual reprojection
  /// pairs from the given state; seeds missing inverse depths.
  void RebuildAssociations(CalibrationState *state);

  const std::vector<PointToSurfelCorr> &surfel_corrs() const { return surfel_corrs_; }
  const std::vector<VisualReprojCorr> &reproj_corrs() const { return reproj_corrs_; }

 private:
  RigConfig rig_;
  const MeasurementSet &data_;
  EstimatorConfig config_;
  std::map<std::string, std::vector<std::vector<bool>>> radar_inliers_;
  std::vector<PointToSurfelCorr> surfel_corrs_;
  std::vector<VisualReprojCorr> reproj_corrs_;
};

// ---------------------------------------------------------------------------
// Residual probes: a single cost function plus its parameter values at the
// given state, for finite-difference cross-checks and unit tests.

struct ResidualProbe {
  std::shared_ptr<ceres::CostFunction> cost;
  std::vector<std::vector<double>> values;

  /// Evaluates the residual at the stored (optionally overridden) values.
  std::vector<double> Evaluate() const;
};

ResidualProbe ProbeGyro(const CalibrationState &state, const RigConfig &rig,
                        const std::string &imu, const ImuMeasurement &meas,
                        const EstimatorConfig &config);
ResidualProbe ProbeAccel(const CalibrationState &state, const RigConfig &rig,
                         const std::string &imu, const ImuMeasurement &meas,
                         const EstimatorConfig &config);
ResidualProbe ProbeDoppler(const CalibrationState &state, const RigConfig &rig,
                           const std::string &radar, const RadarTarget &target,
                           const EstimatorConfig &config);
ResidualProbe ProbeSurfel(const CalibrationState &state, const RigConfig &rig,
                          const PointToSurfelCorr &corr, const EstimatorConfig &config);
ResidualProbe ProbeReproj(const CalibrationState &state, const RigConfig &rig,
                          const VisualReprojCorr &corr, const EstimatorConfig &config);

}  // namespace sical
