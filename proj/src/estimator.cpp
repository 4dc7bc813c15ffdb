#include "sical/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sical/errors.hpp"

#include "sical/ceres_spline.hpp"
#include "sical/manifolds.hpp"

namespace sical {

namespace {

template <typename T>
using Vec3T = Eigen::Matrix<T, 3, 1>;

template <typename T>
Eigen::Quaternion<T> MapQuat(const T *p) {
  return Eigen::Map<const Eigen::Quaternion<T>>(p);
}

// ---------------------------------------------------------------------------
// residual functors; parameter layout is documented at each assembly site

struct GyroRes {
  SplineWindow rot_window;
  double stamp = 0.0;
  Vec3 meas = Vec3::Zero();
  ImuIntrinsics intr;
  bool est_intrinsics = false;
  double inv_sigma = 1.0;

  template <typename T>
  bool operator()(T const *const *p, T *r) const {
    const int n = rot_window.count;
    const T t = T(stamp) + p[n + 1][0];
    const auto kin = EvalSo3Window(p, rot_window, t);
    const Eigen::Quaternion<T> q_i = MapQuat(p[n]);
    const Vec3T<T> w_i = q_i.conjugate() * kin.w_body;
    Vec3T<T> pred =
        intr.gyro_mapping.cast<T>() * (intr.accel_from_gyro.cast<T>() * w_i);
    pred += est_intrinsics ? Vec3T<T>(Eigen::Map<const Vec3T<T>>(p[n + 2]))
                           : Vec3T<T>(intr.gyro_bias.cast<T>());
    Eigen::Map<Vec3T<T>> out(r);
    out = T(inv_sigma) * (pred - meas.cast<T>());
    return true;
  }
};

struct AccelRes {
  SplineWindow rot_window;
  SplineWindow scale_window;
  int accel_order = 0;  // scale-spline derivative giving world acceleration
  double stamp = 0.0;
  Vec3 meas = Vec3::Zero();
  ImuIntrinsics intr;
  bool est_intrinsics = false;
  double inv_sigma = 1.0;

  template <typename T>
  bool operator()(T const *const *p, T *r) const {
    const int n = rot_window.count;
    const int m = scale_window.count;
    // p: [rot knots][scale knots][q_i][p_i][tau][g]([M_a 6][b_a 3])
    const T t = T(stamp) + p[n + m + 2][0];
    const auto kin = EvalSo3Window(p, rot_window, t);
    const Vec3T<T> a_w = EvalR3Window(p + n, scale_window, t, accel_order);
    const Eigen::Quaternion<T> q_i = MapQuat(p[n + m]);
    const Vec3T<T> p_i = Eigen::Map<const Vec3T<T>>(p[n + m + 1]);
    const Vec3T<T> g = Eigen::Map<const Vec3T<T>>(p[n + m + 3]);
    const Vec3T<T> w_w = kin.q * kin.w_body;
    const Vec3T<T> alpha_w = kin.q * kin.alpha_body;
    const Vec3T<T> a_point =
        a_w + alpha_w.cross(kin.q * p_i) + w_w.cross(w_w.cross(kin.q * p_i));
    const Vec3T<T> f_body = (kin.q * q_i).conjugate() * (a_point - g);
    Vec3T<T> pred;
    if (est_intrinsics) {
      const T *ma = p[n + m + 4];
      Eigen::Matrix<T, 3, 3> m_a;
      m_a << ma[0], ma[1], ma[2], T(0), ma[3], ma[4], T(0), T(0), ma[5];
      pred = m_a * f_body + Eigen::Map<const Vec3T<T>>(p[n + m + 5]);
    } else {
      pred = intr.accel_mapping.cast<T>() * f_body + intr.accel_bias.cast<T>();
    }
    Eigen::Map<Vec3T<T>> out(r);
    out = T(inv_sigma) * (pred - meas.cast<T>());
    return true;
  }
};

struct DopplerRes {
  SplineWindow rot_window;
  SplineWindow scale_window;
  int velocity_order = 0;  // scale-spline derivative giving world velocity
  double stamp = 0.0;
  Vec3 direction = Vec3::UnitX();  // unit, radar frame
  double doppler = 0.0;
  double inv_sigma = 1.0;

  template <typename T>
  bool operator()(T const *const *p, T *r) const {
    const int n = rot_window.count;
    const int m = scale_window.count;
    // p: [rot knots][scale knots][q_r][p_r][tau]
    const T t = T(stamp) + p[n + m + 2][0];
    const auto kin = EvalSo3Window(p, rot_window, t);
    const Vec3T<T> v_w = EvalR3Window(p + n, scale_window, t, velocity_order);
    const Eigen::Quaternion<T> q_r = MapQuat(p[n + m]);
    const Vec3T<T> p_r = Eigen::Map<const Vec3T<T>>(p[n + m + 1]);
    const Vec3T<T> w_w = kin.q * kin.w_body;
    const Vec3T<T> v_radar_w = v_w + w_w.cross(kin.q * p_r);
    const Vec3T<T> v_rr = (kin.q * q_r).conjugate() * v_radar_w;
    r[0] = T(inv_sigma) * (T(doppler) + direction.cast<T>().dot(v_rr));
    return true;
  }
};

struct SurfelRes {
  SplineWindow rot_window;
  SplineWindow scale_window;
  double stamp = 0.0;
  Vec3 point = Vec3::Zero();  // LiDAR frame
  Vec3 normal = Vec3::UnitZ();
  double d = 0.0;
  double inv_sigma = 1.0;

  template <typename T>
  bool operator()(T const *const *p, T *r) const {
    const int n = rot_window.count;
    const int m = scale_window.count;
    // p: [rot knots][scale knots][q_l][p_l][tau]
    const T t = T(stamp) + p[n + m + 2][0];
    const auto kin = EvalSo3Window(p, rot_window, t, false);
    const Vec3T<T> pos = EvalR3Window(p + n, scale_window, t, 0);
    const Eigen::Quaternion<T> q_l = MapQuat(p[n + m]);
    const Vec3T<T> p_l = Eigen::Map<const Vec3T<T>>(p[n + m + 1]);
    const Vec3T<T> p_w = kin.q * (q_l * point.cast<T>() + p_l) + pos;
    r[0] = T(inv_sigma) * (normal.cast<T>().dot(p_w) + T(d));
    return true;
  }
};

struct ReprojRes {
  SplineWindow rot_window;   // covers both observation times
  SplineWindow scale_window;
  double anchor_time = 0.0;
  double later_time = 0.0;
  Vec3 anchor_ray = Vec3::UnitZ();  // undistorted, unit depth
  double anchor_row = 0.0;
  double later_row = 0.0;
  Vec2 later_pixel = Vec2::Zero();
  CameraIntrinsics intr;
  double inv_sigma = 1.0;

  template <typename T>
  bool operator()(T const *const *p, T *r) const {
    const int n = rot_window.count;
    const int m = scale_window.count;
    // p: [rot knots][scale knots][q_c][p_c][tau][readout][beta][lambda]
    const T &tau = p[n + m + 2][0];
    const T &readout = p[n + m + 3][0];
    const T &beta = p[n + m + 4][0];
    const T &lambda = p[n + m + 5][0];
    const double h = intr.height;
    const T t_n = T(anchor_time) + tau + (T(anchor_row / h) - T(0.5)) * readout;
    const T t_s = T(later_time) + tau + (T(later_row / h) - T(0.5)) * readout;
    const Eigen::Quaternion<T> q_c = MapQuat(p[n + m]);
    const Vec3T<T> p_c = Eigen::Map<const Vec3T<T>>(p[n + m + 1]);

    const auto kin_n = EvalSo3Window(p, rot_window, t_n, false);
    const auto kin_s = EvalSo3Window(p, rot_window, t_s, false);
    const Eigen::Quaternion<T> q_wn = kin_n.q * q_c;
    const Eigen::Quaternion<T> q_ws = kin_s.q * q_c;
    const Vec3T<T> p_wn = EvalR3Window(p + n, scale_window, t_n, 0) + kin_n.q * p_c;
    const Vec3T<T> p_ws = EvalR3Window(p + n, scale_window, t_s, 0) + kin_s.q * p_c;

    const Vec3T<T> x_anchor = (beta / lambda) * anchor_ray.cast<T>();
    const Vec3T<T> x_later = q_ws.conjugate() * (q_wn * x_anchor + p_wn - p_ws);
    if (ScalarPart(x_later.z()) <= 1e-6) return false;
    Eigen::Map<Eigen::Matrix<T, 2, 1>> out(r);
    out = T(inv_sigma) * (intr.ProjectT(x_later) - later_pixel.cast<T>());
    return true;
  }
};

// ---------------------------------------------------------------------------
// shared assembly helpers

/// Per-sensor mutable parameter storage for one solve.
struct SensorParams {
  Eigen::Quaterniond q = Quat::Identity();
  Vec3 p = Vec3::Zero();
  double tau = 0.0;
  double readout = 0.0;
  double beta = 1.0;
};

struct ImuIntrinsicParams {
  double mapping[6] = {1, 0, 0, 1, 0, 1};  // upper-triangular M_a, row major
  Vec3 accel_bias = Vec3::Zero();
  Vec3 gyro_bias = Vec3::Zero();
};

double SigmaFloor(double rig_sigma, double floor) { return std::max(rig_sigma, floor); }

int AccelOrder(ScaleMode mode) {
  switch (mode) {
    case ScaleMode::kAcceleration: return 0;
    case ScaleMode::kVelocity: return 1;
    case ScaleMode::kTranslation: return 2;
  }
  return 2;
}

template <typename Functor>
ceres::DynamicAutoDiffCostFunction<Functor> *MakeCost(Functor *functor,
                                                      const std::vector<int> &sizes,
                                                      int num_residuals) {
  auto *cost = new ceres::DynamicAutoDiffCostFunction<Functor>(functor);
  for (int s : sizes) cost->AddParameterBlock(s);
  cost->SetNumResiduals(num_residuals);
  return cost;
}

}  // namespace

// ---------------------------------------------------------------------------

Estimator::Estimator(const RigConfig &rig, const MeasurementSet &data,
                     const EstimatorConfig &config,
                     std::map<std::string, std::vector<std::vector<bool>>> radar_inliers)
    : rig_(rig), data_(data), config_(config), radar_inliers_(std::move(radar_inliers)) {
  rig_.Validate();
}

void Estimator::RebuildAssociations(CalibrationState *state) {
  surfel_corrs_.clear();
  reproj_corrs_.clear();

  const auto world_point = [state](const SensorPose &sp, const LidarPoint &pt) -> Vec3 {
    const double t = pt.t + sp.time_offset;
    const Mat3 r = state->rot_spline.Evaluate(t);
    return r * (sp.rotation * pt.position + sp.translation) + state->scale_spline.Evaluate(t, 0);
  };

  if (!data_.lidar.empty()) {
    std::vector<Vec3> cloud;
    std::map<std::string, std::vector<Vec3>> per_sensor;
    for (const auto &[name, points] : data_.lidar) {
      const SensorPose &sp = state->sensors.at(name);
      auto &world = per_sensor[name];
      world.reserve(points.size());
      for (const auto &pt : points) {
        const double t = pt.t + sp.time_offset;
        if (!state->rot_spline.grid().InSupport(t) || !state->scale_spline.grid().InSupport(t)) {
          world.push_back(Vec3::Constant(std::numeric_limits<double>::quiet_NaN()));
          continue;
        }
        world.push_back(world_point(sp, pt));
        cloud.push_back(world.back());
      }
    }
    const VoxelSurfelMap map = BuildSurfelMap(cloud, config_.assoc);
    for (const auto &[name, points] : data_.lidar) {
      std::vector<LidarPoint> usable;
      std::vector<Vec3> world;
      for (size_t i = 0; i < points.size(); ++i) {
        if (per_sensor[name][i].hasNaN()) continue;
        usable.push_back(points[i]);
        world.push_back(per_sensor[name][i]);
      }
      auto corrs = AssociatePoints(map, name, usable, world);
      corrs = DownsampleCorrespondences(std::move(corrs), config_.assoc.cap_per_surfel);
      surfel_corrs_.insert(surfel_corrs_.end(), corrs.begin(), corrs.end());
    }
  }

  for (const auto &[name, observations] : data_.camera) {
    const SensorPose &sp = state->sensors.at(name);
    const auto odom = data_.odometry.find(name);
    const auto landmarks = data_.sfm_landmarks.find(name);
    if (odom == data_.odometry.end() || landmarks == data_.sfm_landmarks.end()) continue;
    const auto built = BuildReprojectionPairs(name, observations, odom->second,
                                              landmarks->second, sp.scale, config_.assoc);
    for (const auto &pair : built.pairs) {
      // State inverse depths live in the up-to-scale map frame, so the
      // residual's beta * ray / lambda reproduces the metric point.
      if (state->inverse_depths.find(pair.landmark) == state->inverse_depths.end()) {
        state->inverse_depths[pair.landmark] = pair.inverse_depth * sp.scale;
      }
      reproj_corrs_.push_back(pair);
    }
  }
}

BatchReport Estimator::Solve(CalibrationState *state, const Freeze &freeze, int batch_index) {
  BatchReport report;
  report.index = batch_index;

  const KnotGrid &rot_grid = state->rot_spline.grid();
  const KnotGrid &scale_grid = state->scale_spline.grid();
  const double slack = rig_.max_offset;
  const int accel_order = AccelOrder(state->scale_mode);
  const int velocity_order = state->scale_mode == ScaleMode::kVelocity ? 0 : 1;
  if (!surfel_corrs_.empty() && state->scale_mode != ScaleMode::kTranslation) {
    throw ConfigError("point-to-surfel residuals need a translation-mode scale spline");
  }
  if (!reproj_corrs_.empty() && state->scale_mode != ScaleMode::kTranslation) {
    throw ConfigError("reprojection residuals need a translation-mode scale spline");
  }

  std::map<std::string, SensorParams> params;
  std::map<std::string, ImuIntrinsicParams> intr_params;
  for (const auto &[name, sp] : state->sensors) {
    SensorParams sensor;
    sensor.q = Quat(sp.rotation);
    sensor.p = sp.translation;
    sensor.tau = sp.time_offset;
    sensor.readout = sp.readout_time;
    sensor.beta = sp.scale;
    params[name] = sensor;
  }
  const bool est_intr = !freeze.imu_intrinsics;
  for (const auto &[name, intr] : state->imu_intrinsics) {
    ImuIntrinsicParams ip;
    const Mat3 &m = intr.accel_mapping;
    ip.mapping[0] = m(0, 0);
    ip.mapping[1] = m(0, 1);
    ip.mapping[2] = m(0, 2);
    ip.mapping[3] = m(1, 1);
    ip.mapping[4] = m(1, 2);
    ip.mapping[5] = m(2, 2);
    ip.accel_bias = intr.accel_bias;
    ip.gyro_bias = intr.gyro_bias;
    intr_params[name] = ip;
  }

  ceres::Problem problem;
  ceres::LocalParameterization *quat_param = NewQuaternionParameterization();
  ceres::LocalParameterization *sphere_param = NewSphereParameterization();

  const auto covered = [&](const KnotGrid &grid, double lo, double hi) {
    return grid.InSupport(lo) && grid.InSupport(hi);
  };

  const auto rot_blocks = [&](const SplineWindow &w) {
    return WindowBlocks(state->rot_spline, w);
  };
  const auto scale_blocks = [&](const SplineWindow &w) {
    return WindowBlocks(state->scale_spline, w);
  };

  // --- inertial rows ---------------------------------------------------
  for (const auto &sensor : rig_.sensors) {
    if (sensor.kind != SensorKind::kImu) continue;
    const auto found = data_.imu.find(sensor.name);
    if (found == data_.imu.end()) {
      throw ConfigError("no inertial measurements for sensor '" + sensor.name + "'");
    }
    const auto &stream = found->second;
    SensorParams &sp = params.at(sensor.name);
    const ImuIntrinsics &intr = state->imu_intrinsics.count(sensor.name)
                                    ? state->imu_intrinsics.at(sensor.name)
                                    : ImuIntrinsics{};
    const double sigma_w = SigmaFloor(rig_.noise.sigma_gyro, config_.sigma_gyro);
    const double sigma_a = SigmaFloor(rig_.noise.sigma_accel, config_.sigma_accel);
    for (const auto &meas : stream) {
      const double t0 = meas.t + sp.tau;
      if (!covered(rot_grid, t0 - slack, t0 + slack) ||
          !covered(scale_grid, t0 - slack, t0 + slack)) {
        ++report.deactivated;
        continue;
      }
      const SplineWindow rw = SplineWindow::Cover(rot_grid, t0 - slack, t0 + slack);
      const SplineWindow sw = SplineWindow::Cover(scale_grid, t0 - slack, t0 + slack);

      auto *gyro = new GyroRes{rw, meas.t, meas.gyro, intr, est_intr, 1.0 / sigma_w};
      std::vector<double *> gyro_blocks = rot_blocks(rw);
      std::vector<int> gyro_sizes(rw.count, 4);
      gyro_blocks.insert(gyro_blocks.end(), {sp.q.coeffs().data(), &sp.tau});
      gyro_sizes.insert(gyro_sizes.end(), {4, 1});
      if (est_intr) {
        gyro_blocks.push_back(intr_params.at(sensor.name).gyro_bias.data());
        gyro_sizes.push_back(3);
      }
      problem.AddResidualBlock(MakeCost(gyro, gyro_sizes, 3),
                               new ceres::CauchyLoss(config_.cauchy_gyro / sigma_w),
                               gyro_blocks);

      auto *accel = new AccelRes{rw,   sw,       accel_order, meas.t, meas.accel,
                                 intr, est_intr, 1.0 / sigma_a};
      std::vector<double *> accel_blocks = rot_blocks(rw);
      std::vector<int> accel_sizes(rw.count, 4);
      const auto sb = scale_blocks(sw);
      accel_blocks.insert(accel_blocks.end(), sb.begin(), sb.end());
      accel_sizes.insert(accel_sizes.end(), sw.count, 3);
      accel_blocks.insert(accel_blocks.end(),
                          {sp.q.coeffs().data(), sp.p.data(), &sp.tau, state->gravity.data()});
      accel_sizes.insert(accel_sizes.end(), {4, 3, 1, 3});
      if (est_intr) {
        accel_blocks.push_back(intr_params.at(sensor.name).mapping);
        accel_blocks.push_back(intr_params.at(sensor.name).accel_bias.data());
        accel_sizes.insert(accel_sizes.end(), {6, 3});
      }
      problem.AddResidualBlock(MakeCost(accel, accel_sizes, 3),
                               new ceres::CauchyLoss(config_.cauchy_accel / sigma_a),
                               accel_blocks);
    }
  }

  // --- Doppler rows -----------------------------------------------------
  const double sigma_d = SigmaFloor(rig_.noise.sigma_doppler, config_.sigma_doppler);
  for (const auto &[name, scans] : data_.radar) {
    SensorParams &sp = params.at(name);
    const auto inliers = radar_inliers_.find(name);
    for (size_t s = 0; s < scans.size(); ++s) {
      for (size_t k = 0; k < scans[s].size(); ++k) {
        if (inliers != radar_inliers_.end() && !inliers->second[s][k]) continue;
        const auto &target = scans[s][k];
        const double t0 = target.t + sp.tau;
        if (!covered(rot_grid, t0 - slack, t0 + slack) ||
            !covered(scale_grid, t0 - slack, t0 + slack)) {
          ++report.deactivated;
          continue;
        }
        const SplineWindow rw = SplineWindow::Cover(rot_grid, t0 - slack, t0 + slack);
        const SplineWindow sw = SplineWindow::Cover(scale_grid, t0 - slack, t0 + slack);
        auto *doppler = new DopplerRes{rw,
                                       sw,
                                       velocity_order,
                                       target.t,
                                       target.position.normalized(),
                                       target.doppler,
                                       1.0 / sigma_d};
        std::vector<double *> blocks = rot_blocks(rw);
        std::vector<int> sizes(rw.count, 4);
        const auto sb = scale_blocks(sw);
        blocks.insert(blocks.end(), sb.begin(), sb.end());
        sizes.insert(sizes.end(), sw.count, 3);
        blocks.insert(blocks.end(), {sp.q.coeffs().data(), sp.p.data(), &sp.tau});
        sizes.insert(sizes.end(), {4, 3, 1});
        problem.AddResidualBlock(MakeCost(doppler, sizes, 1),
                                 new ceres::CauchyLoss(config_.cauchy_doppler / sigma_d), blocks);
      }
    }
  }

  // --- point-to-surfel rows ----------------------------------------------
  const double sigma_s = SigmaFloor(rig_.noise.sigma_lidar, config_.sigma_surfel);
  for (const auto &corr : surfel_corrs_) {
    SensorParams &sp = params.at(corr.sensor);
    const double t0 = corr.stamp + sp.tau;
    if (!covered(rot_grid, t0 - slack, t0 + slack) ||
        !covered(scale_grid, t0 - slack, t0 + slack)) {
      ++report.deactivated;
      continue;
    }
    const SplineWindow rw = SplineWindow::Cover(rot_grid, t0 - slack, t0 + slack);
    const SplineWindow sw = SplineWindow::Cover(scale_grid, t0 - slack, t0 + slack);
    auto *surfel =
        new SurfelRes{rw, sw, corr.stamp, corr.point, corr.normal, corr.d, 1.0 / sigma_s};
    std::vector<double *> blocks = rot_blocks(rw);
    std::vector<int> sizes(rw.count, 4);
    const auto sb = scale_blocks(sw);
    blocks.insert(blocks.end(), sb.begin(), sb.end());
    sizes.insert(sizes.end(), sw.count, 3);
    blocks.insert(blocks.end(), {sp.q.coeffs().data(), sp.p.data(), &sp.tau});
    sizes.insert(sizes.end(), {4, 3, 1});
    problem.AddResidualBlock(MakeCost(surfel, sizes, 1),
                             new ceres::CauchyLoss(config_.cauchy_surfel / sigma_s), blocks);
  }

  // --- reprojection rows ---------------------------------------------------
  const double sigma_px = SigmaFloor(rig_.noise.sigma_pixel, config_.sigma_pixel);
  std::vector<double *> depth_blocks;
  for (const auto &corr : reproj_corrs_) {
    SensorParams &sp = params.at(corr.camera);
    const CameraIntrinsics &intr = rig_.Sensor(corr.camera).camera_intrinsics;
    const double lo = std::min(corr.anchor_time, corr.time) + sp.tau;
    const double hi = std::max(corr.anchor_time, corr.time) + sp.tau;
    const double rs = intr.height > 0 ? 0.5 * std::abs(sp.readout) + 0.05 : 0.0;
    if (!covered(rot_grid, lo - slack - rs, hi + slack + rs) ||
        !covered(scale_grid, lo - slack - rs, hi + slack + rs)) {
      ++report.deactivated;
      continue;
    }
    const SplineWindow rw = SplineWindow::Cover(rot_grid, lo - slack - rs, hi + slack + rs);
    const SplineWindow sw = SplineWindow::Cover(scale_grid, lo - slack - rs, hi + slack + rs);
    auto *reproj = new ReprojRes{rw,
                                 sw,
                                 corr.anchor_time,
                                 corr.time,
                                 UnprojectRay(corr.anchor_pixel, intr),
                                 corr.anchor_pixel.y(),
                                 corr.pixel.y(),
                                 corr.pixel,
                                 intr,
                                 1.0 / sigma_px};
    std::vector<double *> blocks = rot_blocks(rw);
    std::vector<int> sizes(rw.count, 4);
    const auto sb = scale_blocks(sw);
    blocks.insert(blocks.end(), sb.begin(), sb.end());
    sizes.insert(sizes.end(), sw.count, 3);
    double *lambda = &state->inverse_depths.at(corr.landmark);
    blocks.insert(blocks.end(),
                  {sp.q.coeffs().data(), sp.p.data(), &sp.tau, &sp.readout, &sp.beta, lambda});
    sizes.insert(sizes.end(), {4, 3, 1, 1, 1, 1});
    problem.AddResidualBlock(MakeCost(reproj, sizes, 2),
                             new ceres::CauchyLoss(config_.cauchy_reproj / sigma_px), blocks);
    depth_blocks.push_back(lambda);
  }

  if (problem.NumResidualBlocks() == 0) {
    throw ConfigError("batch optimization has no active residual blocks");
  }

  // --- parameterizations, bounds, freezes ---------------------------------
  for (auto &knot : state->rot_spline.knots()) {
    if (problem.HasParameterBlock(knot.coeffs().data())) {
      problem.SetParameterization(knot.coeffs().data(), quat_param);
    }
  }
  if (problem.HasParameterBlock(state->gravity.data())) {
    problem.SetParameterization(state->gravity.data(), sphere_param);
  }
  for (const auto &sensor : rig_.sensors) {
    SensorParams &sp = params.at(sensor.name);
    if (!problem.HasParameterBlock(sp.q.coeffs().data())) continue;
    problem.SetParameterization(sp.q.coeffs().data(), quat_param);
    problem.SetParameterLowerBound(&sp.tau, 0, sp.tau == 0.0 ? -rig_.max_offset
                                                             : sp.tau - rig_.max_offset);
    problem.SetParameterUpperBound(&sp.tau, 0, sp.tau == 0.0 ? rig_.max_offset
                                                             : sp.tau + rig_.max_offset);
    const bool is_reference = sensor.name == rig_.reference_imu;
    const bool frozen_imu =
        sensor.kind == SensorKind::kImu && (is_reference || freeze.imu_spatiotemporal);
    if (frozen_imu) {
      problem.SetParameterBlockConstant(sp.q.coeffs().data());
      problem.SetParameterBlockConstant(&sp.tau);
      if (problem.HasParameterBlock(sp.p.data())) problem.SetParameterBlockConstant(sp.p.data());
    }
    if (sensor.kind == SensorKind::kCamera && problem.HasParameterBlock(&sp.readout)) {
      problem.SetParameterLowerBound(&sp.readout, 0, 0.0);
      problem.SetParameterUpperBound(&sp.readout, 0, 0.1);
      problem.SetParameterLowerBound(&sp.beta, 0, 1e-3);
    }
  }
  for (double *lambda : depth_blocks) problem.SetParameterLowerBound(lambda, 0, 1e-4);

  ceres::Solver::Options options;
  options.max_num_iterations = config_.max_iterations;
  options.function_tolerance = 1e-8;
  options.gradient_tolerance = 1e-10;
  options.num_threads = 1;
  if (!depth_blocks.empty()) {
    // Schur elimination of the inverse depths.
    options.linear_solver_type = ceres::SPARSE_SCHUR;
    options.linear_solver_ordering = std::make_shared<ceres::ParameterBlockOrdering>();
    for (double *lambda : depth_blocks) {
      options.linear_solver_ordering->AddElementToGroup(lambda, 0);
    }
    std::vector<double *> remaining;
    problem.GetParameterBlocks(&remaining);
    for (double *block : remaining) {
      if (!options.linear_solver_ordering->IsMember(block)) {
        options.linear_solver_ordering->AddElementToGroup(block, 1);
      }
    }
  } else {
    options.linear_solver_type = ceres::SPARSE_NORMAL_CHOLESKY;
  }

  ceres::Solver::Summary summary;
  ceres::Solve(options, &problem, &summary);
  if (!summary.IsSolutionUsable()) {
    throw NumericalError("batch " + std::to_string(batch_index) +
                         " diverged: " + summary.BriefReport());
  }

  report.initial_cost = summary.initial_cost;
  report.final_cost = summary.final_cost;
  report.iterations = static_cast<int>(summary.iterations.size());
  for (const auto &it : summary.iterations) {
    if (it.step_is_successful) report.cost_trace.push_back(it.cost);
  }

  // --- write back ----------------------------------------------------------
  for (auto &[name, sp] : params) {
    SensorPose &pose = state->sensors.at(name);
    pose.rotation = sp.q.normalized().toRotationMatrix();
    pose.translation = sp.p;
    pose.time_offset = sp.tau;
    pose.readout_time = sp.readout;
    pose.scale = sp.beta;
  }
  if (est_intr) {
    for (auto &[name, ip] : intr_params) {
      ImuIntrinsics &intr = state->imu_intrinsics.at(name);
      intr.accel_mapping << ip.mapping[0], ip.mapping[1], ip.mapping[2], 0.0, ip.mapping[3],
          ip.mapping[4], 0.0, 0.0, ip.mapping[5];
      intr.accel_bias = ip.accel_bias;
      intr.gyro_bias = ip.gyro_bias;
    }
    report.notes.push_back("gyroscope scale/misalignment not estimated (unobservable here)");
  }
  for (auto &knot : state->rot_spline.knots()) knot.normalize();
  return report;
}

std::vector<BatchReport> Estimator::MultiBatchRefine(CalibrationState *state) {
  std::vector<BatchReport> reports;
  RebuildAssociations(state);

  Freeze first;
  first.imu_spatiotemporal = true;
  reports.push_back(Solve(state, first, 1));
  reports.back().label = "imu-frozen";
  reports.back().rebuilt_associations = !data_.lidar.empty() || !data_.camera.empty();

  Freeze second;
  second.imu_intrinsics = !rig_.estimate_imu_intrinsics;
  reports.push_back(Solve(state, second, 2));
  reports.back().label = "full";

  if (!data_.lidar.empty()) {
    RebuildAssociations(state);
    reports.push_back(Solve(state, second, 3));
    reports.back().label = "full-reassociated";
    reports.back().rebuilt_associations = true;
  }
  return reports;
}

// ---------------------------------------------------------------------------
// probes

namespace {

std::vector<std::vector<double>> CollectValues(const std::vector<double *> &blocks,
                                               const std::vector<int> &sizes) {
  std::vector<std::vector<double>> values;
  for (size_t i = 0; i < blocks.size(); ++i) {
    values.emplace_back(blocks[i], blocks[i] + sizes[i]);
  }
  return values;
}

}  // namespace

std::vector<double> ResidualProbe::Evaluate() const {
  std::vector<const double *> blocks;
  for (const auto &v : values) blocks.push_back(v.data());
  std::vector<double> residuals(cost->num_residuals());
  if (!cost->Evaluate(blocks.data(), residuals.data(), nullptr)) {
    throw NumericalError("residual probe evaluation failed");
  }
  return residuals;
}

// Builds the window block values common to every probe.
#define SICAL_PROBE_COMMON(state, name)                                       \
  auto spline_copy = (state).rot_spline;                                      \
  auto scale_copy = (state).scale_spline;                                     \
  const SensorPose &pose = (state).sensors.at(name);                          \
  SensorParams sp;                                                            \
  sp.q = Quat(pose.rotation);                                                 \
  sp.p = pose.translation;                                                    \
  sp.tau = pose.time_offset;                                                  \
  sp.readout = pose.readout_time;                                             \
  sp.beta = pose.scale;

ResidualProbe ProbeGyro(const CalibrationState &state, const RigConfig &rig,
                        const std::string &imu, const ImuMeasurement &meas,
                        const EstimatorConfig &config) {
  SICAL_PROBE_COMMON(state, imu);
  const double t0 = meas.t + sp.tau;
  const SplineWindow rw = SplineWindow::Cover(state.rot_spline.grid(), t0, t0);
  const ImuIntrinsics intr = state.imu_intrinsics.count(imu) ? state.imu_intrinsics.at(imu)
                                                             : ImuIntrinsics{};
  const double sigma = SigmaFloor(rig.noise.sigma_gyro, config.sigma_gyro);
  auto *functor = new GyroRes{rw, meas.t, meas.gyro, intr, false, 1.0 / sigma};
  std::vector<double *> blocks = WindowBlocks(spline_copy, rw);
  std::vector<int> sizes(rw.count, 4);
  blocks.insert(blocks.end(), {sp.q.coeffs().data(), &sp.tau});
  sizes.insert(sizes.end(), {4, 1});
  ResidualProbe probe;
  probe.cost.reset(MakeCost(functor, sizes, 3));
  probe.values = CollectValues(blocks, sizes);
  return probe;
}

ResidualProbe ProbeAccel(const CalibrationState &state, const RigConfig &rig,
                         const std::string &imu, const ImuMeasurement &meas,
                         const EstimatorConfig &config) {
  SICAL_PROBE_COMMON(state, imu);
  const double t0 = meas.t + sp.tau;
  const SplineWindow rw = SplineWindow::Cover(state.rot_spline.grid(), t0, t0);
  const SplineWindow sw = SplineWindow::Cover(state.scale_spline.grid(), t0, t0);
  const ImuIntrinsics intr = state.imu_intrinsics.count(imu) ? state.imu_intrinsics.at(imu)
                                                             : ImuIntrinsics{};
  const double sigma = SigmaFloor(rig.noise.sigma_accel, config.sigma_accel);
  auto *functor =
      new AccelRes{rw, sw, AccelOrder(state.scale_mode), meas.t, meas.accel, intr, false,
                   1.0 / sigma};
  std::vector<double *> blocks = WindowBlocks(spline_copy, rw);
  std::vector<int> sizes(rw.count, 4);
  const auto sb = WindowBlocks(scale_copy, sw);
  blocks.insert(blocks.end(), sb.begin(), sb.end());
  sizes.insert(sizes.end(), sw.count, 3);
  Vec3 gravity = state.gravity;
  blocks.insert(blocks.end(), {sp.q.coeffs().data(), sp.p.data(), &sp.tau, gravity.data()});
  sizes.insert(sizes.end(), {4, 3, 1, 3});
  ResidualProbe probe;
  probe.cost.reset(MakeCost(functor, sizes, 3));
  probe.values = CollectValues(blocks, sizes);
  return probe;
}

ResidualProbe ProbeDoppler(const CalibrationState &state, const RigConfig &rig,
                           const std::string &radar, const RadarTarget &target,
                           const EstimatorConfig &config) {
  SICAL_PROBE_COMMON(state, radar);
  const double t0 = target.t + sp.tau;
  const SplineWindow rw = SplineWindow::Cover(state.rot_spline.grid(), t0, t0);
  const SplineWindow sw = SplineWindow::Cover(state.scale_spline.grid(), t0, t0);
  const double sigma = SigmaFloor(rig.noise.sigma_doppler, config.sigma_doppler);
  auto *functor = new DopplerRes{rw,
                                 sw,
                                 state.scale_mode == ScaleMode::kVelocity ? 0 : 1,
                                 target.t,
                                 target.position.normalized(),
                                 target.doppler,
                                 1.0 / sigma};
  std::vector<double *> blocks = WindowBlocks(spline_copy, rw);
  std::vector<int> sizes(rw.count, 4);
  const auto sb = WindowBlocks(scale_copy, sw);
  blocks.insert(blocks.end(), sb.begin(), sb.end());
  sizes.insert(sizes.end(), sw.count, 3);
  blocks.insert(blocks.end(), {sp.q.coeffs().data(), sp.p.data(), &sp.tau});
  sizes.insert(sizes.end(), {4, 3, 1});
  ResidualProbe probe;
  probe.cost.reset(MakeCost(functor, sizes, 1));
  probe.values = CollectValues(blocks, sizes);
  return probe;
}

ResidualProbe ProbeSurfel(const CalibrationState &state, const RigConfig &rig,
                          const PointToSurfelCorr &corr, const EstimatorConfig &config) {
  SICAL_PROBE_COMMON(state, corr.sensor);
  const double t0 = corr.stamp + sp.tau;
  const SplineWindow rw = SplineWindow::Cover(state.rot_spline.grid(), t0, t0);
  const SplineWindow sw = SplineWindow::Cover(state.scale_spline.grid(), t0, t0);
  const double sigma = SigmaFloor(rig.noise.sigma_lidar, config.sigma_surfel);
  auto *functor =
      new SurfelRes{rw, sw, corr.stamp, corr.point, corr.normal, corr.d, 1.0 / sigma};
  std::vector<double *> blocks = WindowBlocks(spline_copy, rw);
  std::vector<int> sizes(rw.count, 4);
  const auto sb = WindowBlocks(scale_copy, sw);
  blocks.insert(blocks.end(), sb.begin(), sb.end());
  sizes.insert(sizes.end(), sw.count, 3);
  blocks.insert(blocks.end(), {sp.q.coeffs().data(), sp.p.data(), &sp.tau});
  sizes.insert(sizes.end(), {4, 3, 1});
  ResidualProbe probe;
  probe.cost.reset(MakeCost(functor, sizes, 1));
  probe.values = CollectValues(blocks, sizes);
  return probe;
}

ResidualProbe ProbeReproj(const CalibrationState &state, const RigConfig &rig,
                          const VisualReprojCorr &corr, const EstimatorConfig &config) {
  SICAL_PROBE_COMMON(state, corr.camera);
  const CameraIntrinsics &intr = rig.Sensor(corr.camera).camera_intrinsics;
  const double lo = std::min(corr.anchor_time, corr.time) + sp.tau - 0.1;
  const double hi = std::max(corr.anchor_time, corr.time) + sp.tau + 0.1;
  const SplineWindow rw = SplineWindow::Cover(state.rot_spline.grid(), lo, hi);
  const SplineWindow sw = SplineWindow::Cover(state.scale_spline.grid(), lo, hi);
  const double sigma = SigmaFloor(rig.noise.sigma_pixel, config.sigma_pixel);
  auto *functor = new ReprojRes{rw,
                                sw,
                                corr.anchor_time,
                                corr.time,
                                UnprojectRay(corr.anchor_pixel, intr),
                                corr.anchor_pixel.y(),
                                corr.pixel.y(),
                                corr.pixel,
                                intr,
                                1.0 / sigma};
  std::vector<double *> blocks = WindowBlocks(spline_copy, rw);
  std::vector<int> sizes(rw.count, 4);
  const auto sb = WindowBlocks(scale_copy, sw);
  blocks.insert(blocks.end(), sb.begin(), sb.end());
  sizes.insert(sizes.end(), sw.count, 3);
  double lambda = state.inverse_depths.at(corr.landmark);
  blocks.insert(blocks.end(),
                {sp.q.coeffs().data(), sp.p.data(), &sp.tau, &sp.readout, &sp.beta, &lambda});
  sizes.insert(sizes.end(), {4, 3, 1, 1, 1, 1});
  ResidualProbe probe;
  probe.cost.reset(MakeCost(functor, sizes, 2));
  probe.values = CollectValues(blocks, sizes);
  return probe;
}

#undef SICAL_PROBE_COMMON

}  // namespace sical
