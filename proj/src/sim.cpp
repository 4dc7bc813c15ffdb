#include "sical/sim.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "sical/rng.hpp"
#include "sical/spline_io.hpp"

namespace sical {
namespace {

using nlohmann::json;

constexpr double kTrajectoryPad = 0.3;  // s beyond the data window on each side

// Per-axis modulation so that all axes are excited but no two axes share a
// frequency (keeps the rotation non-degenerate for hand-eye and alignment).
constexpr double kRotAxisScale[3] = {1.0, 0.4, 0.25};
constexpr double kRotFreqScale[3] = {1.0, 1.31, 0.73};
constexpr double kPosAxisScale[3] = {1.0, 0.8, 0.6};
constexpr double kPosFreqScale[3] = {1.13, 0.89, 1.41};

}  // namespace

std::pair<So3Spline, R3Spline> GenerateTrajectory(std::uint64_t seed, double duration,
                                                  const Excitation &ex, double dt) {
  if (duration < 4.0 * dt) throw ConfigError("trajectory duration shorter than 4 knot spacings");
  const KnotGrid grid = KnotGrid::Covering(-kTrajectoryPad, duration + kTrajectoryPad, dt);

  StreamRng phase_rng(seed, "trajectory/phases", 0);
  double rot_phase[3], pos_phase[3];
  for (int a = 0; a < 3; ++a) rot_phase[a] = phase_rng.Uniform(0.0, 2.0 * M_PI);
  for (int a = 0; a < 3; ++a) pos_phase[a] = phase_rng.Uniform(0.0, 2.0 * M_PI);

  std::vector<Quat> rot_knots(grid.count);
  std::vector<Vec3> pos_knots(grid.count);
  for (int i = 0; i < grid.count; ++i) {
    const double tau = grid.KnotTime(i);
    Vec3 phi, pos;
    for (int a = 0; a < 3; ++a) {
      phi[a] = ex.angular_amplitude * kRotAxisScale[a] *
               std::sin(2.0 * M_PI * ex.base_frequency * kRotFreqScale[a] * tau + rot_phase[a]);
      pos[a] = ex.linear_amplitude * kPosAxisScale[a] *
               std::sin(2.0 * M_PI * ex.base_frequency * kPosFreqScale[a] * tau + pos_phase[a]);
    }
    rot_knots[i] = QuatExp<double>(phi);
    pos_knots[i] = pos;
  }
  return {So3Spline(grid, std::move(rot_knots)), R3Spline(grid, std::move(pos_knots))};
}

GroundTruthScenario::Kinematics GroundTruthScenario::At(double t) const {
  Kinematics k;
  k.rot = rot_spline.Evaluate(t);
  rot_spline.AngularVelocity(t, &k.w_world, &k.w_body);
  k.alpha_world = rot_spline.AngularAcceleration(t);
  k.pos = pos_spline.Evaluate(t, 0);
  k.vel = pos_spline.Evaluate(t, 1);
  k.accel = pos_spline.Evaluate(t, 2);
  return k;
}

void GroundTruthScenario::SensorPoseAt(const std::string &name, double t, Mat3 *rot,
                                       Vec3 *pos) const {
  const SensorPose &sp = true_poses.at(name);
  const Mat3 r_body = rot_spline.Evaluate(t);
  if (rot) *rot = r_body * sp.rotation;
  if (pos) *pos = r_body * sp.translation + pos_spline.Evaluate(t, 0);
}

Vec3 GroundTruthScenario::SensorVelocityAt(const std::string &name, double t) const {
  const SensorPose &sp = true_poses.at(name);
  const Kinematics k = At(t);
  return k.vel + k.w_world.cross(k.rot * sp.translation);
}

Vec3 GroundTruthScenario::SensorAccelerationAt(const std::string &name, double t) const {
  const SensorPose &sp = true_poses.at(name);
  const Kinematics k = At(t);
  const Vec3 lever = k.rot * sp.translation;
  return k.accel + k.alpha_world.cross(lever) + k.w_world.cross(k.w_world.cross(lever));
}

double GroundTruthScenario::DataBegin() const { return 0.0; }
double GroundTruthScenario::DataEnd() const { return config.sim.duration; }

GroundTruthScenario MakeScenario(const RigConfig &config) {
  config.Validate();
  GroundTruthScenario sc;
  sc.config = config;
  sc.seed = config.seed;

  Excitation ex{config.sim.angular_amplitude, config.sim.linear_amplitude,
                config.sim.base_frequency};
  auto [rot, pos] = GenerateTrajectory(config.seed, config.sim.duration, ex, config.rot_spline_dt);

  // Re-gauge so the world frame is the reference body frame at t = 0.
  const Mat3 r0 = rot.Evaluate(0.0);
  const Vec3 p0 = pos.Evaluate(0.0, 0);
  rot.ApplyLeftGauge(r0.transpose());
  for (Vec3 &c : pos.knots()) c = r0.transpose() * (c - p0);
  sc.rot_spline = std::move(rot);
  sc.pos_spline = std::move(pos);

  StreamRng grav_rng(config.seed, "world/gravity", 0);
  const Vec3 tilt(grav_rng.Uniform(-0.2, 0.2), grav_rng.Uniform(-0.2, 0.2), 0.0);
  sc.gravity = config.gravity_magnitude * (So3Exp(tilt) * Vec3(0.0, 0.0, -1.0));

  for (const auto &sensor : config.sensors) {
    SensorPose sp;
    if (sensor.name != config.reference_imu) {
      StreamRng rng(config.seed, "rig/" + sensor.name, 0);
      Vec3 axis = Vec3(rng.Gaussian(), rng.Gaussian(), rng.Gaussian());
      if (axis.norm() < 1e-12) axis = Vec3::UnitZ();
      axis.normalize();
      sp.rotation = So3Exp(axis * rng.Uniform(0.2, 1.2));
      sp.translation = Vec3(rng.Uniform(-0.4, 0.4), rng.Uniform(-0.4, 0.4), rng.Uniform(-0.4, 0.4));
      sp.time_offset = rng.Uniform(-config.sim.offset_range, config.sim.offset_range);
      if (sensor.kind == SensorKind::kCamera) {
        sp.readout_time = config.sim.readout_time;
        sp.scale = rng.Uniform(1.3, 2.5);
      }
    }
    sc.true_poses[sensor.name] = sp;
    if (sensor.kind == SensorKind::kImu) {
      sc.true_imu_intrinsics[sensor.name] = sensor.imu_intrinsics;
    }
  }

  // A 10 m box room plus two tilted interior planes; patches span the faces.
  auto face = [](const Vec3 &n, const Vec3 &center, const Vec3 &u, const Vec3 &, double hu,
                 double hv) {
    PlanePatch p;
    p.normal = n.normalized();
    p.center = center;
    p.d = -p.normal.dot(center);
    p.axis_u = (u - u.dot(p.normal) * p.normal).normalized();
    p.axis_v = p.normal.cross(p.axis_u);
    p.half_u = hu;
    p.half_v = hv;
    return p;
  };
  const double h = 5.0;
  sc.planes = {
      face({1, 0, 0}, {-h, 0, 0}, {0, 1, 0}, {0, 0, 1}, h, h),
      face({-1, 0, 0}, {h, 0, 0}, {0, 1, 0}, {0, 0, 1}, h, h),
      face({0, 1, 0}, {0, -h, 0}, {1, 0, 0}, {0, 0, 1}, h, h),
      face({0, -1, 0}, {0, h, 0}, {1, 0, 0}, {0, 0, 1}, h, h),
      face({0, 0, 1}, {0, 0, -h}, {1, 0, 0}, {0, 1, 0}, h, h),
      face({0, 0, -1}, {0, 0, h}, {1, 0, 0}, {0, 1, 0}, h, h),
      face({1, 1, 1}, {2.0, 1.0, 0.0}, {1, -1, 0}, {1, 1, -2}, 1.5, 1.5),
      face({1, -1, 0.5}, {-2.0, -1.0, 1.0}, {1, 1, 0}, {-0.5, 0.5, 4}, 1.5, 1.5),
  };

  StreamRng lm_rng(config.seed, "world/landmarks", 0);
  sc.landmarks.reserve(config.sim.landmark_count);
  for (int i = 0; i < config.sim.landmark_count; ++i) {
    const PlanePatch &pl = sc.planes[i % sc.planes.size()];
    sc.landmarks.push_back(pl.center +
                           lm_rng.Uniform(-pl.half_u, pl.half_u) * pl.axis_u +
                           lm_rng.Uniform(-pl.half_v, pl.half_v) * pl.axis_v);
  }

  RebuildMapAnchors(&sc);
  return sc;
}

void RebuildMapAnchors(GroundTruthScenario *sc) {
  // Map frames anchored at the first scan pose so odometry starts near
  // identity, as a real front-end would produce.
  for (const auto &sensor : sc->config.sensors) {
    if (sensor.kind != SensorKind::kLidar && sensor.kind != SensorKind::kCamera) continue;
    const double t0 = sc->DataBegin() + sc->true_poses[sensor.name].time_offset;
    Mat3 r;
    Vec3 p;
    sc->SensorPoseAt(sensor.name, t0, &r, &p);
    sc->map_rotation[sensor.name] = r;
    sc->map_translation[sensor.name] = p;
  }
}

std::vector<ImuMeasurement> SynthesizeImu(const GroundTruthScenario &sc, const std::string &name,
                                          double rate, const NoiseSpec &noise) {
  if (rate <= 0.0) throw ConfigError("imu rate must be positive");
  const SensorPose &sp = sc.true_poses.at(name);
  const ImuIntrinsics &intr = sc.true_imu_intrinsics.at(name);
  const int n = static_cast<int>(std::floor((sc.DataEnd() - sc.DataBegin()) * rate)) + 1;
  std::vector<ImuMeasurement> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k) {
    const double t = sc.DataBegin() + k / rate;
    const double tw = t + sp.time_offset;
    const auto kin = sc.At(tw);
    const Mat3 r_imu_w = (kin.rot * sp.rotation).transpose();
    const Vec3 f = r_imu_w * (sc.SensorAccelerationAt(name, tw) - sc.gravity);
    const Vec3 w = sp.rotation.transpose() * kin.w_body;
    StreamRng rng(sc.seed, "imu/" + name, static_cast<std::uint64_t>(k));
    ImuMeasurement m;
    m.t = t;
    m.accel = intr.ApplyAccel<double>(f) + rng.GaussianVec3(noise.sigma_accel);
    m.gyro = intr.ApplyGyro<double>(w) + rng.GaussianVec3(noise.sigma_gyro);
    out.push_back(m);
  }
  return out;
}

std::vector<RadarScanTruth> SynthesizeRadar(const GroundTruthScenario &sc, const std::string &name,
                                            double rate, int targets_per_scan,
                                            const NoiseSpec &noise) {
  if (rate <= 0.0 || targets_per_scan < 1) throw ConfigError("bad radar sampling parameters");
  const SensorPose &sp = sc.true_poses.at(name);
  const int scans = static_cast<int>(std::floor((sc.DataEnd() - sc.DataBegin()) * rate)) + 1;
  const int outliers = static_cast<int>(std::lround(noise.outlier_fraction * targets_per_scan));
  std::vector<RadarScanTruth> out(scans);
  for (int k = 0; k < scans; ++k) {
    const double t = sc.DataBegin() + k / rate;
    const double tw = t + sp.time_offset;
    Mat3 r_wr;
    Vec3 p_wr;
    sc.SensorPoseAt(name, tw, &r_wr, &p_wr);
    const Vec3 v_r = sc.SensorVelocityAt(name, tw);
    const Vec3 w_body_r = sp.rotation.transpose() * sc.At(tw).w_body;
    for (int j = 0; j < targets_per_scan; ++j) {
      StreamRng rng(sc.seed, "radar/" + name,
                    static_cast<std::uint64_t>(k) * targets_per_scan + j);
      const double az = rng.Uniform(-M_PI / 3.0, M_PI / 3.0);
      const double el = rng.Uniform(-M_PI / 6.0, M_PI / 6.0);
      const double range = rng.Uniform(2.0, 8.0);
      const Vec3 dir(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
      const Vec3 p_true = range * dir;
      const Vec3 v_rel = -w_body_r.cross(p_true) - r_wr.transpose() * v_r;
      RadarTarget tgt;
      tgt.t = t;
      tgt.position = p_true + rng.GaussianVec3(noise.sigma_radar_pos);
      tgt.doppler = RadarDoppler(p_true, v_rel);
      const bool dynamic = j < outliers;
      if (dynamic) tgt.doppler += rng.Uniform(-3.0, 3.0);
      tgt.doppler += noise.sigma_doppler * rng.Gaussian();
      out[k].targets.push_back(tgt);
      out[k].is_outlier.push_back(dynamic);
    }
  }
  return out;
}

std::vector<LidarPoint> SynthesizeLidar(const GroundTruthScenario &sc, const std::string &name,
                                        double scan_rate, int points_per_scan,
                                        const NoiseSpec &noise) {
  if (scan_rate <= 0.0 || points_per_scan < 1) throw ConfigError("bad lidar sampling parameters");
  if (sc.planes.size() < 4) throw ConfigError("plane environment too small for lidar synthesis");
  Mat3 normal_spread = Mat3::Zero();
  for (const auto &pl : sc.planes) normal_spread += pl.normal * pl.normal.transpose();
  if (Eigen::SelfAdjointEigenSolver<Mat3>(normal_spread).eigenvalues().minCoeff() < 1e-6) {
    throw ConfigError("plane normals do not span 3D");
  }
  const SensorPose &sp = sc.true_poses.at(name);
  // The final scan still has to end inside the data window, so scan starts
  // stop one period early.
  const int scans =
      std::max(1, static_cast<int>(std::floor((sc.DataEnd() - sc.DataBegin()) * scan_rate)));
  const double period = 1.0 / scan_rate;
  std::vector<LidarPoint> out;
  out.reserve(static_cast<size_t>(scans) * points_per_scan);
  for (int k = 0; k < scans; ++k) {
    const double t_scan = sc.DataBegin() + k * period;
    for (int j = 0; j < points_per_scan; ++j) {
      // Stamps spread across the scan period keep within-scan motion visible.
      const double t = t_scan + (j + 0.5) * period / (points_per_scan + 1);
      StreamRng rng(sc.seed, "lidar/" + name,
                    static_cast<std::uint64_t>(k) * points_per_scan + j);
      const PlanePatch &pl = sc.planes[static_cast<size_t>(rng.Uniform(0.0, 1.0) * sc.planes.size()) %
                                       sc.planes.size()];
      const Vec3 q = pl.center + rng.Uniform(-pl.half_u, pl.half_u) * pl.axis_u +
                     rng.Uniform(-pl.half_v, pl.half_v) * pl.axis_v;
      Mat3 r_wl;
      Vec3 p_wl;
      sc.SensorPoseAt(name, t + sp.time_offset, &r_wl, &p_wl);
      Vec3 p_l = r_wl.transpose() * (q - p_wl);
      const double range = p_l.norm();
      if (range < 0.2) continue;
      p_l += (noise.sigma_lidar * rng.Gaussian()) * (p_l / range);
      out.push_back({t, p_l, k});
    }
  }
  return out;
}

CameraSimResult SynthesizeCamera(const GroundTruthScenario &sc, const std::string &name,
                                 double frame_rate, const NoiseSpec &noise) {
  if (frame_rate <= 0.0) throw ConfigError("camera frame rate must be positive");
  if (sc.landmarks.empty()) throw ConfigError("no landmarks to observe");
  const SensorPose &sp = sc.true_poses.at(name);
  const CameraIntrinsics &intr = sc.config.Sensor(name).camera_intrinsics;
  const int frames = static_cast<int>(std::floor((sc.DataEnd() - sc.DataBegin()) * frame_rate)) + 1;
  CameraSimResult result;
  for (int k = 0; k < frames; ++k) {
    const double t_frame = sc.DataBegin() + k / frame_rate;
    for (size_t lm = 0; lm < sc.landmarks.size(); ++lm) {
      const Vec3 &q = sc.landmarks[lm];
      auto project_at_row = [&](double row, Vec2 *px) {
        const double t = RsRowTime(t_frame, row, intr.height, sp.readout_time) + sp.time_offset;
        Mat3 r_wc;
        Vec3 p_wc;
        sc.SensorPoseAt(name, t, &r_wc, &p_wc);
        const Vec3 p_c = r_wc.transpose() * (q - p_wc);
        if (p_c.z() <= 1e-6) return false;
        *px = intr.ProjectT<double>(p_c);
        return true;
      };
      Vec2 px;
      if (!project_at_row(intr.height / 2.0, &px)) continue;
      bool ok = true;
      if (sp.readout_time > 0.0) {
        ok = false;
        for (int it = 0; it < 40; ++it) {
          const double row = std::min(std::max(px.y(), 0.0), intr.height - 1e-6);
          Vec2 next;
          if (!project_at_row(row, &next)) break;
          const double delta = (next - px).norm();
          px = next;
          if (delta < 1e-9) {
            ok = true;
            break;
          }
        }
        if (!ok) {
          ++result.dropped_nonconverged;
          continue;
        }
      }
      StreamRng rng(sc.seed, "camera/" + name,
                    static_cast<std::uint64_t>(k) * sc.landmarks.size() + lm);
      px.x() += noise.sigma_pixel * rng.Gaussian();
      px.y() += noise.sigma_pixel * rng.Gaussian();
      if (px.x() < 0.0 || px.x() >= intr.width || px.y() < 0.0 || px.y() >= intr.height) continue;
      result.observations.push_back({t_frame, static_cast<std::int64_t>(lm), px});
    }
  }
  return result;
}

std::vector<OdomPose> SynthesizeOdometry(const GroundTruthScenario &sc, const std::string &name,
                                         const NoiseSpec &noise) {
  const SensorConfig &cfg = sc.config.Sensor(name);
  if (cfg.kind != SensorKind::kLidar && cfg.kind != SensorKind::kCamera) {
    throw ConfigError("odometry exists only for lidar and camera sensors");
  }
  const SensorPose &sp = sc.true_poses.at(name);
  const Mat3 &r_wm = sc.map_rotation.at(name);
  const Vec3 &p_wm = sc.map_translation.at(name);
  const int n = static_cast<int>(std::floor((sc.DataEnd() - sc.DataBegin()) * cfg.rate)) + 1;
  std::vector<OdomPose> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k) {
    const double t = sc.DataBegin() + k / cfg.rate;
    Mat3 r_ws;
    Vec3 p_ws;
    sc.SensorPoseAt(name, t + sp.time_offset, &r_ws, &p_ws);
    StreamRng rng(sc.seed, "odom/" + name, static_cast<std::uint64_t>(k));
    Mat3 r_ms = r_wm.transpose() * r_ws;
    Vec3 p_ms = r_wm.transpose() * (p_ws - p_wm);
    if (cfg.kind == SensorKind::kCamera) p_ms /= sp.scale;
    r_ms = r_ms * So3Exp(rng.GaussianVec3(noise.sigma_odom_rot));
    p_ms += rng.GaussianVec3(noise.sigma_odom_pos);
    OdomPose pose;
    pose.t = t;
    pose.q = Quat(r_ms);
    pose.p = p_ms;
    out.push_back(pose);
  }
  return out;
}

std::map<std::int64_t, Vec3> SynthesizeSfmLandmarks(const GroundTruthScenario &sc,
                                                    const std::string &name) {
  const SensorPose &sp = sc.true_poses.at(name);
  const Mat3 &r_wm = sc.map_rotation.at(name);
  const Vec3 &p_wm = sc.map_translation.at(name);
  std::map<std::int64_t, Vec3> out;
  for (size_t lm = 0; lm < sc.landmarks.size(); ++lm) {
    out[static_cast<std::int64_t>(lm)] =
        r_wm.transpose() * (sc.landmarks[lm] - p_wm) / sp.scale;
  }
  return out;
}

MeasurementSet SynthesizeAll(const GroundTruthScenario &sc) {
  MeasurementSet data;
  const NoiseSpec &noise = sc.config.noise;
  for (const auto &sensor : sc.config.sensors) {
    switch (sensor.kind) {
      case SensorKind::kImu:
        data.imu[sensor.name] = SynthesizeImu(sc, sensor.name, sensor.rate, noise);
        break;
      case SensorKind::kRadar: {
        auto scans = SynthesizeRadar(sc, sensor.name, sensor.rate, sensor.targets_per_scan, noise);
        auto &dst = data.radar[sensor.name];
        for (auto &scan : scans) dst.push_back(std::move(scan.targets));
        break;
      }
      case SensorKind::kLidar:
        data.lidar[sensor.name] =
            SynthesizeLidar(sc, sensor.name, sensor.rate, sensor.points_per_scan, noise);
        data.odometry[sensor.name] = SynthesizeOdometry(sc, sensor.name, noise);
        break;
      case SensorKind::kCamera:
        data.camera[sensor.name] =
            SynthesizeCamera(sc, sensor.name, sensor.rate, noise).observations;
        data.odometry[sensor.name] = SynthesizeOdometry(sc, sensor.name, noise);
        data.sfm_landmarks[sensor.name] = SynthesizeSfmLandmarks(sc, sensor.name);
        break;
    }
  }
  return data;
}

CalibrationState TrueState(const GroundTruthScenario &sc) {
  CalibrationState state;
  state.sensors = sc.true_poses;
  state.gravity = sc.gravity;
  state.rot_spline = sc.rot_spline;
  state.imu_intrinsics = sc.true_imu_intrinsics;
  state.scale_mode = sc.config.SelectScaleMode();
  switch (state.scale_mode) {
    case ScaleMode::kTranslation:
      state.scale_spline = sc.pos_spline;
      break;
    case ScaleMode::kVelocity:
    case ScaleMode::kAcceleration: {
      // The exact derivative is only C^1 (velocity) or C^0 (acceleration), so
      // the true scale spline is the least-squares fit on the same grid.
      const int order = state.scale_mode == ScaleMode::kVelocity ? 1 : 2;
      const KnotGrid &grid = sc.pos_spline.grid();
      std::vector<std::pair<double, Vec3>> samples;
      const double step = grid.dt / 8.0;
      for (double t = grid.SupportBegin(); t < grid.SupportEnd(); t += step) {
        samples.emplace_back(t, sc.pos_spline.Evaluate(t, order));
      }
      state.scale_spline = FitR3(samples, grid, 0).spline;
      break;
    }
  }
  return state;
}

std::vector<ImuMeasurement> SimulateStationaryImu(const Mat3 &world_from_body, double duration,
                                                  double rate, const ImuIntrinsics &intr,
                                                  const Vec3 &gravity, double sigma_accel,
                                                  double sigma_gyro, std::uint64_t seed,
                                                  int piece_index) {
  const Vec3 f = world_from_body.transpose() * (-gravity);
  const int n = static_cast<int>(std::floor(duration * rate)) + 1;
  std::vector<ImuMeasurement> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k) {
    StreamRng rng(seed, "stationary/" + std::to_string(piece_index),
                  static_cast<std::uint64_t>(k));
    ImuMeasurement m;
    m.t = k / rate;
    m.accel = intr.ApplyAccel<double>(f) + rng.GaussianVec3(sigma_accel);
    m.gyro = intr.ApplyGyro<double>(Vec3::Zero()) + rng.GaussianVec3(sigma_gyro);
    out.push_back(m);
  }
  return out;
}

void WriteGroundTruth(const std::string &path, const GroundTruthScenario &sc) {
  json j;
  j["gravity"] = {sc.gravity.x(), sc.gravity.y(), sc.gravity.z()};
  j["rot_spline"] = ToJson(sc.rot_spline);
  j["pos_spline"] = ToJson(sc.pos_spline);
  j["sensors"] = json::object();
  for (const auto &[name, sp] : sc.true_poses) {
    const Quat q(sp.rotation);
    j["sensors"][name] = {{"q", {q.w(), q.x(), q.y(), q.z()}},
                          {"p", {sp.translation.x(), sp.translation.y(), sp.translation.z()}},
                          {"offset", sp.time_offset},
                          {"readout", sp.readout_time},
                          {"scale", sp.scale}};
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write ground truth '" + path + "'");
  out << j.dump(2) << "\n";
}

}  // namespace sical
