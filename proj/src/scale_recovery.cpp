#include "sical/scale_recovery.hpp"

#include <ceres/ceres.h>

#include <cmath>

#include "sical/ceres_spline.hpp"
#include "sical/errors.hpp"

namespace sical {

namespace {

/// World-frame acceleration of the reference body implied by one IMU sample.
Vec3 BodyAcceleration(const So3Spline &rot, const AlignmentImu &imu, const Vec3 &p_i,
                      const Vec3 &gravity, const ImuMeasurement &m) {
  const double t = m.t + imu.offset;
  const Mat3 r = rot.Evaluate(t);
  Vec3 w_world;
  rot.AngularVelocity(t, &w_world, nullptr);
  const Vec3 alpha = rot.AngularAcceleration(t);
  return r * (imu.rotation * imu.intrinsics.InvertAccel(m.accel)) + gravity -
         (Hat(alpha) + Hat(w_world) * Hat(w_world)) * (r * p_i);
}

// r = spline^(order)(t) - a_br, pinning the scale spline's derivative of the
// proper order to the accelerometer-implied body acceleration.
struct ScaleAccelResidual {
  SplineWindow window;
  double stamp;
  int order;
  Vec3 accel;
  double weight;

  template <typename T>
  bool operator()(T const *const *params, T *residual) const {
    Eigen::Map<Eigen::Matrix<T, 3, 1>> r(residual);
    r = T(weight) * (EvalR3Window(params, window, T(stamp), order) - accel.cast<T>());
    return true;
  }
};

// r = doppler + (R(t) R_r dir) . (v_br(t) + w_w x (R(t) p_r)), with t shifted
// by the unknown radar offset. Parameter layout: rotation knots (constant),
// scale knots, offset.
struct DopplerResidual {
  SplineWindow rot_window;
  SplineWindow scale_window;
  double stamp;
  Vec3 dir;  // unit target direction in the radar frame
  double doppler;
  Mat3 r_radar;
  Vec3 p_radar;
  int velocity_order;  // 0: spline value is velocity; 1: derivative of position
  double weight;

  template <typename T>
  bool operator()(T const *const *params, T *residual) const {
    const T t = T(stamp) + params[rot_window.count + scale_window.count][0];
    const auto kin = EvalSo3Window(params, rot_window, t, true);
    const Eigen::Matrix<T, 3, 1> v_body =
        EvalR3Window(params + rot_window.count, scale_window, t, velocity_order);
    const Eigen::Matrix<T, 3, 1> w_world = kin.q * kin.w_body;
    const Eigen::Matrix<T, 3, 1> v_radar_w =
        v_body + w_world.cross(kin.q * p_radar.cast<T>());
    const Eigen::Matrix<T, 3, 1> dir_w = kin.q * (r_radar * dir).cast<T>();
    residual[0] = T(weight) * (T(doppler) + dir_w.dot(v_radar_w));
    return true;
  }
};

// r = spline(t) - (scale R_wm p_odom - R(t) p_s) - p_wm.
struct OdomPositionResidual {
  SplineWindow window;
  double stamp;
  Vec3 target;  // scale R_wm p_odom - R(t) p_s, map translation excluded
  double weight;

  template <typename T>
  bool operator()(T const *const *params, T *residual) const {
    Eigen::Map<const Eigen::Matrix<T, 3, 1>> p_wm(params[window.count]);
    Eigen::Map<Eigen::Matrix<T, 3, 1>> r(residual);
    r = T(weight) * (EvalR3Window(params, window, T(stamp), 0) - target.cast<T>() - p_wm);
    return true;
  }
};

void SolveOrThrow(ceres::Problem *problem, int max_iterations, const char *what,
                  ScaleRecoveryResult *result) {
  ceres::Solver::Options options;
  options.linear_solver_type = ceres::SPARSE_NORMAL_CHOLESKY;
  options.max_num_iterations = max_iterations;
  options.num_threads = 1;
  ceres::Solver::Summary summary;
  ceres::Solve(options, problem, &summary);
  if (!summary.IsSolutionUsable()) {
    throw NumericalError(std::string(what) + " diverged: " + summary.BriefReport());
  }
  result->final_cost = summary.final_cost;
  result->iterations += static_cast<int>(summary.iterations.size());
}

}  // namespace

ScaleRecoveryResult RecoverLinearScaleSpline(ScaleMode mode, const So3Spline &rot_spline,
                                             const std::vector<AlignmentImu> &imus,
                                             const std::vector<RadarScaleInput> &radars,
                                             const std::vector<OdomScaleInput> &odoms,
                                             const Vec3 &gravity,
                                             const std::map<std::string, Vec3> &translations,
                                             const KnotGrid &grid,
                                             const ScaleRecoveryConfig &config) {
  const bool has_radar = !radars.empty();
  const bool has_odom = !odoms.empty();
  switch (mode) {
    case ScaleMode::kAcceleration:
      if (has_radar || has_odom) {
        throw ConfigError("acceleration mode requires an IMU-only rig");
      }
      break;
    case ScaleMode::kVelocity:
      if (!has_radar || has_odom) {
        throw ConfigError("velocity mode requires radars and no LiDAR/camera odometry");
      }
      break;
    case ScaleMode::kTranslation:
      if (!has_odom) throw ConfigError("translation mode requires LiDAR/camera odometry");
      break;
  }
  if (imus.empty()) throw ConfigError("scale recovery needs at least one IMU");

  ScaleRecoveryResult result;
  const int accel_order = mode == ScaleMode::kAcceleration ? 0
                          : mode == ScaleMode::kVelocity   ? 1
                                                           : 2;

  if (mode == ScaleMode::kAcceleration) {
    std::vector<std::pair<double, Vec3>> samples;
    for (const auto &imu : imus) {
      const Vec3 p_i = translations.at(imu.name);
      for (const auto &m : *imu.data) {
        const double t = m.t + imu.offset;
        if (!grid.InSupport(t) || !rot_spline.grid().InSupport(t)) continue;
        samples.emplace_back(t, BodyAcceleration(rot_spline, imu, p_i, gravity, m));
      }
    }
    const auto fit = FitR3(samples, grid, 0);
    result.spline = fit.spline;
    result.final_cost = fit.rms;
    return result;
  }

  // Velocity and translation modes share the ceres skeleton: knots plus
  // accelerometer rows, then mode-specific measurement rows.
  R3Spline spline(grid, std::vector<Vec3>(grid.count, Vec3::Zero()));
  ceres::Problem problem;
  auto rot_copy = rot_spline;  // constant parameter blocks for time-offset autodiff

  for (const auto &imu : imus) {
    const Vec3 p_i = translations.at(imu.name);
    for (const auto &m : *imu.data) {
      const double t = m.t + imu.offset;
      if (!grid.InSupport(t) || !rot_spline.grid().InSupport(t)) continue;
      auto *functor = new ScaleAccelResidual{SplineWindow::Cover(grid, t, t), t, accel_order,
                                             BodyAcceleration(rot_spline, imu, p_i, gravity, m),
                                             config.weight_accel};
      auto *cost = new ceres::DynamicAutoDiffCostFunction<ScaleAccelResidual>(functor);
      for (int i = 0; i < functor->window.count; ++i) cost->AddParameterBlock(3);
      cost->SetNumResiduals(3);
      problem.AddResidualBlock(cost, nullptr, WindowBlocks(spline, functor->window));
    }
  }

  std::map<std::string, double> radar_offsets;
  std::map<std::string, Vec3> map_translations;

  const auto add_doppler_rows = [&](const RadarScaleInput &radar, int velocity_order,
                                    double *tau) {
    const KnotGrid &rot_grid = rot_spline.grid();
    for (size_t s = 0; s < radar.scans->size(); ++s) {
      const auto &scan = (*radar.scans)[s];
      for (size_t i = 0; i < scan.size(); ++i) {
        if (s < radar.inliers.size() && i < radar.inliers[s].size() && !radar.inliers[s][i]) {
          continue;
        }
        const double norm = scan[i].position.norm();
        if (norm < 1e-9) continue;
        const double t = scan[i].t;
        if (t - config.max_offset < std::max(grid.SupportBegin(), rot_grid.SupportBegin()) ||
            t + config.max_offset >= std::min(grid.SupportEnd(), rot_grid.SupportEnd())) {
          continue;
        }
        auto *functor = new DopplerResidual{
            SplineWindow::Cover(rot_grid, t - config.max_offset, t + config.max_offset),
            SplineWindow::Cover(grid, t - config.max_offset, t + config.max_offset),
            t,
            scan[i].position / norm,
            scan[i].doppler,
            radar.rotation,
            radar.translation,
            velocity_order,
            config.weight_doppler};
        auto *cost = new ceres::DynamicAutoDiffCostFunction<DopplerResidual>(functor);
        std::vector<double *> blocks = WindowBlocks(rot_copy, functor->rot_window);
        for (int i2 = 0; i2 < functor->rot_window.count; ++i2) cost->AddParameterBlock(4);
        const auto scale_blocks = WindowBlocks(spline, functor->scale_window);
        blocks.insert(blocks.end(), scale_blocks.begin(), scale_blocks.end());
        for (int i2 = 0; i2 < functor->scale_window.count; ++i2) cost->AddParameterBlock(3);
        blocks.push_back(tau);
        cost->AddParameterBlock(1);
        cost->SetNumResiduals(1);
        problem.AddResidualBlock(cost, nullptr, blocks);
      }
    }
    problem.SetParameterLowerBound(tau, 0, radar.offset_seed - config.max_offset);
    problem.SetParameterUpperBound(tau, 0, radar.offset_seed + config.max_offset);
  };

  if (mode == ScaleMode::kVelocity) {
    for (const auto &radar : radars) {
      radar_offsets[radar.name] = radar.offset_seed;
      add_doppler_rows(radar, 0, &radar_offsets[radar.name]);
    }
  } else {
    for (const auto &odom : odoms) {
      const auto &poses = *odom.poses;
      if (poses.size() < 2) throw UnderConstrainedError("odometry for '" + odom.name +
                                                        "' has too few poses");
      size_t anchor = 0;
      while (anchor < poses.size() &&
             (!grid.InSupport(poses[anchor].t + odom.offset) ||
              !rot_spline.grid().InSupport(poses[anchor].t + odom.offset))) {
        ++anchor;
      }
      if (anchor == poses.size()) {
        throw UnderConstrainedError("odometry for '" + odom.name +
                                    "' has no poses inside the spline support");
      }
      const double t0 = poses[anchor].t + odom.offset;
      const Mat3 r_wm = rot_spline.Evaluate(t0) * odom.rotation *
                        poses[anchor].q.toRotationMatrix().transpose();
      const Vec3 p_s = translations.at(odom.name);
      map_translations[odom.name] = Vec3::Zero();
      double *p_wm = map_translations[odom.name].data();
      for (const auto &pose : poses) {
        const double t = pose.t + odom.offset;
        if (!grid.InSupport(t) || !rot_spline.grid().InSupport(t)) continue;
        const Vec3 target =
            odom.scale * (r_wm * pose.p) - rot_spline.Evaluate(t) * p_s;
        auto *functor = new OdomPositionResidual{SplineWindow::Cover(grid, t, t), t, target,
                                                 config.weight_position};
        auto *cost = new ceres::DynamicAutoDiffCostFunction<OdomPositionResidual>(functor);
        std::vector<double *> blocks = WindowBlocks(spline, functor->window);
        for (int i = 0; i < functor->window.count; ++i) cost->AddParameterBlock(3);
        blocks.push_back(p_wm);
        cost->AddParameterBlock(3);
        cost->SetNumResiduals(3);
        problem.AddResidualBlock(cost, nullptr, blocks);
      }
    }
    // Absolute position is unobservable (a shared shift of the spline and
    // every map translation is cost-neutral); gauge-fix the first map origin.
    if (!map_translations.empty()) {
      problem.SetParameterBlockConstant(map_translations.begin()->second.data());
    }
  }

  // Rotation knots are context, not unknowns, in this stage.
  for (auto &knot : rot_copy.knots()) {
    if (problem.HasParameterBlock(knot.coeffs().data())) {
      problem.SetParameterBlockConstant(knot.coeffs().data());
    }
  }

  if (mode == ScaleMode::kVelocity) {
    // Two-stage solve: the knots are linear at fixed offsets; freeing the
    // offsets afterwards keeps them in the convergence basin.
    for (auto &[name, tau] : radar_offsets) problem.SetParameterBlockConstant(&tau);
    SolveOrThrow(&problem, config.max_iterations, "velocity-mode scale recovery", &result);
    for (auto &[name, tau] : radar_offsets) problem.SetParameterBlockVariable(&tau);
    SolveOrThrow(&problem, config.max_iterations, "velocity-mode scale recovery", &result);
  } else {
    SolveOrThrow(&problem, config.max_iterations, "translation-mode scale recovery", &result);
  }
  result.spline = spline;

  // Translation rigs still carrying radars: offsets against the fixed spline.
  if (mode == ScaleMode::kTranslation && has_radar) {
    for (auto &knot : spline.knots()) {
      if (problem.HasParameterBlock(knot.data())) problem.SetParameterBlockConstant(knot.data());
    }
    for (auto &[name, p_wm] : map_translations) problem.SetParameterBlockConstant(p_wm.data());
    for (const auto &radar : radars) {
      radar_offsets[radar.name] = radar.offset_seed;
      add_doppler_rows(radar, 1, &radar_offsets[radar.name]);
    }
    SolveOrThrow(&problem, config.max_iterations, "radar offset recovery", &result);
    result.spline = spline;
  }

  result.radar_offsets = radar_offsets;
  return result;
}

}  // namespace sical
