#include "sical/alignment.hpp"

#include <ceres/ceres.h>

#include <Eigen/QR>
#include <cmath>

#include "sical/errors.hpp"
#include "sical/integration.hpp"
#include "sical/manifolds.hpp"

namespace sical {

namespace {

// r = v2 - v1 - c + A p - g dt, shared by the inertial and odometry families.
struct VelocityChangeResidual {
  Vec3 c;
  Mat3 a;
  double dtau;
  double weight;

  template <typename T>
  bool operator()(const T *v1_raw, const T *v2_raw, const T *g_raw, const T *p_raw,
                  T *residual) const {
    Eigen::Map<const Eigen::Matrix<T, 3, 1>> v1(v1_raw), v2(v2_raw), g(g_raw), p(p_raw);
    Eigen::Map<Eigen::Matrix<T, 3, 1>> r(residual);
    r = T(weight) * (v2 - v1 - c.cast<T>() + a.cast<T>() * p - g * T(dtau));
    return true;
  }
};

// Radar windows substitute the measured ego velocities for the body velocity:
// v_br(t) = R(t) R_r v_meas - hat(w_w) R(t) p_r.
struct RadarVelocityChangeResidual {
  Mat3 r1, r2;        // R(t1), R(t2)
  Mat3 hw_r1, hw_r2;  // hat(w_w(t)) R(t)
  Vec3 v1_meas, v2_meas;
  Vec3 c;
  Mat3 a;
  double dtau;
  double weight;

  template <typename T>
  bool operator()(const T *q_raw, const T *p_r_raw, const T *g_raw, const T *p_i_raw,
                  T *residual) const {
    Eigen::Map<const Eigen::Quaternion<T>> q(q_raw);
    Eigen::Map<const Eigen::Matrix<T, 3, 1>> p_r(p_r_raw), g(g_raw), p_i(p_i_raw);
    const Eigen::Matrix<T, 3, 1> vb1 = r1.cast<T>() * (q * v1_meas.cast<T>()) - hw_r1.cast<T>() * p_r;
    const Eigen::Matrix<T, 3, 1> vb2 = r2.cast<T>() * (q * v2_meas.cast<T>()) - hw_r2.cast<T>() * p_r;
    Eigen::Map<Eigen::Matrix<T, 3, 1>> r(residual);
    r = T(weight) * (vb2 - vb1 - c.cast<T>() + a.cast<T>() * p_i - g * T(dtau));
    return true;
  }
};

// Position change over an odometry interval. The map translation cancels in
// the difference; the map rotation is composed in dp_map beforehand.
// r = beta dp_map - (R2 - R1) p_s - d + B p_i - v1 dt - g dt^2 / 2.
struct PositionChangeResidual {
  Vec3 dp_map;  // R_mw (p_m(t2) - p_m(t1))
  Mat3 dr;      // R(t2) - R(t1)
  Vec3 d;
  Mat3 b;
  double dtau;
  double weight;

  template <typename T>
  bool operator()(const T *v1_raw, const T *p_s_raw, const T *g_raw, const T *p_i_raw,
                  const T *beta_raw, T *residual) const {
    Eigen::Map<const Eigen::Matrix<T, 3, 1>> v1(v1_raw), p_s(p_s_raw), g(g_raw), p_i(p_i_raw);
    Eigen::Map<Eigen::Matrix<T, 3, 1>> r(residual);
    r = T(weight) * (beta_raw[0] * dp_map.cast<T>() - dr.cast<T>() * p_s - d.cast<T>() +
                     b.cast<T>() * p_i - v1 * T(dtau) - g * T(0.5 * dtau * dtau));
    return true;
  }
};

struct SplineSample {
  Mat3 rot;
  Vec3 w_world;
};

SplineSample SampleSpline(const So3Spline &spline, double t) {
  SplineSample s;
  s.rot = spline.Evaluate(t);
  spline.AngularVelocity(t, &s.w_world, nullptr);
  return s;
}

/// Linear seed for one radar: solves the velocity-change system of the
/// reference IMU for the unscaled rotation entries, the lever arm, and
/// gravity, then projects the 3x3 block to SO(3).
bool SeedRadar(const AlignmentRadar &radar, const So3Spline &spline, const AlignmentImu &ref,
               double t_begin, double t_end, Quat *q_seed, Vec3 *p_seed, Vec3 *g_seed) {
  std::vector<Eigen::Matrix<double, 3, 15>> rows;
  std::vector<Vec3> rhs;
  for (size_t k = 0; k + 1 < radar.ego_velocities.size(); ++k) {
    const double t1 = radar.ego_velocities[k].first + radar.offset;
    const double t2 = radar.ego_velocities[k + 1].first + radar.offset;
    if (t1 < t_begin || t2 > t_end) continue;
    const auto terms = ComputeIntegrationTerms(*ref.data, spline, ref.rotation, ref.offset,
                                               ref.intrinsics, t1, t2);
    if (!terms) continue;
    const SplineSample s1 = SampleSpline(spline, t1);
    const SplineSample s2 = SampleSpline(spline, t2);
    Eigen::Matrix<double, 3, 15> row = Eigen::Matrix<double, 3, 15>::Zero();
    // vec(M) column-major: R M v = (v^T kron R) vec(M).
    for (int j = 0; j < 3; ++j) {
      row.block<3, 3>(0, 3 * j) = radar.ego_velocities[k + 1].second(j) * s2.rot -
                                  radar.ego_velocities[k].second(j) * s1.rot;
    }
    row.block<3, 3>(0, 9) = -(Hat(s2.w_world) * s2.rot - Hat(s1.w_world) * s1.rot);
    row.block<3, 3>(0, 12) = -(t2 - t1) * Mat3::Identity();
    rows.push_back(row);
    rhs.push_back(terms->c);
  }
  if (rows.size() < 8) return false;

  Eigen::MatrixXd a(3 * rows.size(), 15);
  Eigen::VectorXd b(3 * rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    a.middleRows<3>(3 * i) = rows[i];
    b.segment<3>(3 * i) = rhs[i];
  }
  const Eigen::VectorXd x = a.colPivHouseholderQr().solve(b);
  Mat3 m;
  m << x(0), x(3), x(6), x(1), x(4), x(7), x(2), x(5), x(8);
  *q_seed = Quat(ProjectToSo3(m));
  *p_seed = x.segment<3>(9);
  *g_seed = x.segment<3>(12);
  return true;
}

}  // namespace

AlignmentResult OneShotAlignment(const So3Spline &rot_spline, const std::vector<AlignmentImu> &imus,
                                 const std::vector<AlignmentRadar> &radars,
                                 const std::vector<AlignmentOdometry> &odometries,
                                 double t_begin, double t_end, const AlignmentConfig &config) {
  const AlignmentImu *reference = nullptr;
  for (const auto &imu : imus) {
    if (imu.is_reference) reference = &imu;
  }
  if (!reference) throw ConfigError("one-shot alignment needs a reference IMU");
  t_begin = std::max(t_begin, rot_spline.grid().SupportBegin());
  t_end = std::min(t_end, std::nextafter(rot_spline.grid().SupportEnd(), 0.0));

  const bool inertial_family = imus.size() >= 2;
  if (!inertial_family && radars.empty() && odometries.empty()) {
    throw DegeneracyError(
        "a single IMU admits no alignment constraints: gravity and velocities unobservable");
  }

  AlignmentResult result;

  // --- unknown storage -------------------------------------------------
  Vec3 gravity = Vec3::Zero();
  std::map<std::string, Vec3> translations;
  for (const auto &imu : imus) translations[imu.name] = Vec3::Zero();
  for (const auto &radar : radars) translations[radar.name] = Vec3::Zero();
  for (const auto &odom : odometries) translations[odom.name] = Vec3::Zero();
  std::map<std::string, Quat> radar_quats;
  std::vector<Vec3> ref_velocities;
  std::vector<double> ref_stamps;
  std::map<std::string, std::vector<Vec3>> odom_velocities;
  std::map<std::string, std::vector<double>> odom_stamps;

  // Gravity seed: the time average of R R_i a projects to -g for bounded
  // velocity; radar seeding below may overwrite it.
  {
    Vec3 sum = Vec3::Zero();
    int n = 0;
    for (const auto &m : *reference->data) {
      const double t = m.t + reference->offset;
      if (t < t_begin || t > t_end) continue;
      sum += rot_spline.Evaluate(t) * (reference->rotation *
                                       reference->intrinsics.InvertAccel(m.accel));
      ++n;
    }
    if (n == 0) throw UnderConstrainedError("reference IMU has no samples in the alignment span");
    gravity = -sum / n;
  }
  for (const auto &radar : radars) {
    Quat q = Quat::Identity();
    Vec3 p = Vec3::Zero(), g = Vec3::Zero();
    if (SeedRadar(radar, rot_spline, *reference, t_begin, t_end, &q, &p, &g)) {
      radar_quats[radar.name] = q;
      translations[radar.name] = p;
      gravity = g;
    } else {
      radar_quats[radar.name] = Quat::Identity();
      result.warnings.push_back("radar '" + radar.name +
                                "' rotation seed skipped: too few usable scan pairs");
    }
  }
  if (gravity.norm() < 1e-9) gravity = -Vec3::UnitZ();
  gravity *= config.gravity_magnitude / gravity.norm();

  ceres::Problem problem;
  problem.AddParameterBlock(gravity.data(), 3, NewSphereParameterization());

  const auto translation_block = [&](const std::string &name) { return translations[name].data(); };
  for (auto &[name, p] : translations) problem.AddParameterBlock(p.data(), 3);
  problem.SetParameterBlockConstant(translation_block(reference->name));

  int families = 0;

  // --- inertial family --------------------------------------------------
  if (inertial_family) {
    const int windows = static_cast<int>(std::floor((t_end - t_begin) / config.timepiece));
    if (windows >= 1) {
      ref_velocities.assign(windows + 1, Vec3::Zero());
      ref_stamps.resize(windows + 1);
      for (int n = 0; n <= windows; ++n) ref_stamps[n] = t_begin + n * config.timepiece;
      bool any = false;
      for (int n = 0; n < windows; ++n) {
        for (const auto &imu : imus) {
          const auto terms =
              ComputeIntegrationTerms(*imu.data, rot_spline, imu.rotation, imu.offset,
                                      imu.intrinsics, ref_stamps[n], ref_stamps[n + 1]);
          if (!terms) continue;
          auto *cost =
              new ceres::AutoDiffCostFunction<VelocityChangeResidual, 3, 3, 3, 3, 3>(
                  new VelocityChangeResidual{terms->c, terms->a, terms->Span(),
                                             config.weight_velocity});
          problem.AddResidualBlock(cost, nullptr, ref_velocities[n].data(),
                                   ref_velocities[n + 1].data(), gravity.data(),
                                   translation_block(imu.name));
          any = true;
        }
      }
      if (any) ++families;
    }
    if (radars.empty() && odometries.empty() && !ref_velocities.empty() &&
        problem.HasParameterBlock(ref_velocities.front().data())) {
      // Only velocity differences are constrained: fix the first boundary
      // velocity to remove the translation gauge of the chain. The drift
      // direction coupled with gravity stays weak; flag it.
      problem.SetParameterBlockConstant(ref_velocities.front().data());
      result.warnings.push_back(
          "inertial-only alignment: gravity direction is weakly observable (velocity drift "
          "gauge); results rely on the solver staying near the seed");
    }
  }

  // --- radar family -----------------------------------------------------
  for (const auto &radar : radars) {
    if (radar.ego_velocities.size() < 2) {
      result.warnings.push_back("radar '" + radar.name + "' has too few scans for alignment");
      continue;
    }
    problem.AddParameterBlock(radar_quats[radar.name].coeffs().data(), 4,
                              NewQuaternionParameterization());
    bool any = false;
    for (size_t k = 0; k + 1 < radar.ego_velocities.size(); ++k) {
      const double t1 = radar.ego_velocities[k].first + radar.offset;
      const double t2 = radar.ego_velocities[k + 1].first + radar.offset;
      if (t1 < t_begin || t2 > t_end) continue;
      const SplineSample s1 = SampleSpline(rot_spline, t1);
      const SplineSample s2 = SampleSpline(rot_spline, t2);
      for (const auto &imu : imus) {
        const auto terms = ComputeIntegrationTerms(*imu.data, rot_spline, imu.rotation,
                                                   imu.offset, imu.intrinsics, t1, t2);
        if (!terms) continue;
        auto *cost =
            new ceres::AutoDiffCostFunction<RadarVelocityChangeResidual, 3, 4, 3, 3, 3>(
                new RadarVelocityChangeResidual{
                    s1.rot, s2.rot, Hat(s1.w_world) * s1.rot, Hat(s2.w_world) * s2.rot,
                    radar.ego_velocities[k].second, radar.ego_velocities[k + 1].second,
                    terms->c, terms->a, terms->Span(), config.weight_velocity});
        problem.AddResidualBlock(cost, nullptr, radar_quats[radar.name].coeffs().data(),
                                 translation_block(radar.name), gravity.data(),
                                 translation_block(imu.name));
        any = true;
      }
    }
    if (any) ++families;
  }

  // --- odometry families (LiDAR scaled by 1, camera by beta) -------------
  std::map<std::string, double> beta_storage;
  for (const auto &odom : odometries) {
    const auto &poses = *odom.poses;
    if (poses.size() < 2) {
      result.warnings.push_back("odometry for '" + odom.name + "' has too few poses");
      continue;
    }
    // Map rotation from the first in-span pose: R_mw = R(t0) R_s R_ms(t0)^T.
    // (The estimated offset can push leading poses just outside the span.)
    size_t anchor = 0;
    while (anchor < poses.size() && (poses[anchor].t + odom.offset < t_begin ||
                                     poses[anchor].t + odom.offset > t_end)) {
      ++anchor;
    }
    if (anchor == poses.size()) {
      result.warnings.push_back("odometry for '" + odom.name + "' has no poses inside the span");
      continue;
    }
    const double t0 = poses[anchor].t + odom.offset;
    const Mat3 r_wm = rot_spline.Evaluate(t0) * odom.rotation *
                      poses[anchor].q.toRotationMatrix().transpose();

    auto &velocities = odom_velocities[odom.name];
    auto &stamps = odom_stamps[odom.name];
    velocities.assign(poses.size(), Vec3::Zero());
    stamps.resize(poses.size());
    for (size_t k = 0; k < poses.size(); ++k) stamps[k] = poses[k].t + odom.offset;

    double &beta = beta_storage[odom.name];
    beta = 1.0;
    problem.AddParameterBlock(&beta, 1);
    if (odom.kind == SensorKind::kCamera) {
      problem.SetParameterLowerBound(&beta, 0, 1e-3);
    } else {
      problem.SetParameterBlockConstant(&beta);
    }

    bool any = false;
    for (size_t k = 0; k + 1 < poses.size(); ++k) {
      const double t1 = stamps[k], t2 = stamps[k + 1];
      if (t1 < t_begin || t2 > t_end) continue;
      const Mat3 r1 = rot_spline.Evaluate(t1);
      const Mat3 r2 = rot_spline.Evaluate(t2);
      const Vec3 dp_map = r_wm * (poses[k + 1].p - poses[k].p);
      for (const auto &imu : imus) {
        const auto terms = ComputeIntegrationTerms(*imu.data, rot_spline, imu.rotation,
                                                   imu.offset, imu.intrinsics, t1, t2);
        if (!terms) continue;
        auto *vel_cost =
            new ceres::AutoDiffCostFunction<VelocityChangeResidual, 3, 3, 3, 3, 3>(
                new VelocityChangeResidual{terms->c, terms->a, terms->Span(),
                                           config.weight_velocity});
        problem.AddResidualBlock(vel_cost, nullptr, velocities[k].data(),
                                 velocities[k + 1].data(), gravity.data(),
                                 translation_block(imu.name));
        auto *pos_cost =
            new ceres::AutoDiffCostFunction<PositionChangeResidual, 3, 3, 3, 3, 3, 1>(
                new PositionChangeResidual{dp_map, r2 - r1, terms->d, terms->b, terms->Span(),
                                           config.weight_position});
        problem.AddResidualBlock(pos_cost, nullptr, velocities[k].data(),
                                 translation_block(odom.name), gravity.data(),
                                 translation_block(imu.name), &beta);
        any = true;
      }
    }
    if (any) ++families;
  }

  if (families == 0) {
    throw ConfigError("one-shot alignment: no usable constraint family in the data span");
  }

  ceres::Solver::Options options;
  options.linear_solver_type = ceres::SPARSE_NORMAL_CHOLESKY;
  options.max_num_iterations = config.max_iterations;
  options.num_threads = 1;
  ceres::Solver::Summary summary;
  ceres::Solve(options, &problem, &summary);
  if (!summary.IsSolutionUsable()) {
    throw NumericalError("one-shot alignment diverged: " + summary.BriefReport());
  }

  result.gravity = gravity;
  result.translations = translations;
  for (const auto &[name, q] : radar_quats) result.radar_rotations[name] = q.toRotationMatrix();
  for (const auto &odom : odometries) {
    if (odom.kind == SensorKind::kCamera && beta_storage.count(odom.name)) {
      result.scales[odom.name] = beta_storage[odom.name];
    }
  }
  for (size_t n = 0; n < ref_velocities.size(); ++n) {
    result.reference_velocities.emplace_back(ref_stamps[n], ref_velocities[n]);
  }
  for (const auto &[name, vel] : odom_velocities) {
    auto &out = result.window_velocities[name];
    for (size_t k = 0; k < vel.size(); ++k) out.emplace_back(odom_stamps[name][k], vel[k]);
  }
  result.final_cost = summary.final_cost;
  result.iterations = static_cast<int>(summary.iterations.size());
  return result;
}

}  // namespace sical
