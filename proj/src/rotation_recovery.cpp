#include "sical/rotation_recovery.hpp"

#include <ceres/ceres.h>

#include <Eigen/SVD>
#include <cmath>

#include "sical/ceres_spline.hpp"
#include "sical/errors.hpp"
#include "sical/manifolds.hpp"
#include "sical/offset_search.hpp"

namespace sical {

namespace {

// r = h_w(R_i^T w_body(s + tau_i)) - w_meas, with the reference IMU pinned
// (no extrinsic blocks). Parameter layout: window knots [+ q_i + tau_i].
struct GyroResidual {
  SplineWindow window;
  double stamp;
  Vec3 meas;
  const ImuIntrinsics *intrinsics;
  double weight;
  bool with_extrinsic;

  template <typename T>
  bool operator()(T const *const *params, T *residual) const {
    T t = T(stamp);
    if (with_extrinsic) t += params[window.count + 1][0];
    const auto kin = EvalSo3Window(params, window, t, true);
    Eigen::Matrix<T, 3, 1> w = kin.w_body;
    if (with_extrinsic) {
      Eigen::Map<const Eigen::Quaternion<T>> q(params[window.count]);
      w = q.conjugate() * w;
    }
    Eigen::Map<Eigen::Matrix<T, 3, 1>> r(residual);
    r = T(weight) * (intrinsics->ApplyGyro<T>(w) - meas.cast<T>());
    return true;
  }
};

/// Trapezoidal quaternion dead reckoning of one gyro stream (bias/scale
/// corrected), sampled at the knot times to seed the spline.
std::vector<Quat> SeedKnots(const std::vector<ImuMeasurement> &gyro, const ImuIntrinsics &intr,
                            const KnotGrid &grid) {
  std::vector<double> stamps;
  std::vector<Quat> poses;
  std::vector<Vec3> rates;
  stamps.reserve(gyro.size());
  poses.reserve(gyro.size());
  rates.reserve(gyro.size());
  Quat q = Quat::Identity();
  for (size_t k = 0; k < gyro.size(); ++k) {
    const Vec3 w = intr.InvertGyro(gyro[k].gyro);
    if (k > 0) {
      const double h = gyro[k].t - gyro[k - 1].t;
      q = (q * QuatExp<double>(0.5 * h * (rates.back() + w))).normalized();
    }
    stamps.push_back(gyro[k].t);
    poses.push_back(q);
    rates.push_back(w);
  }

  std::vector<Quat> knots(grid.count);
  for (int i = 0; i < grid.count; ++i) {
    const double t = grid.KnotTime(i);
    const auto hi = std::lower_bound(stamps.begin(), stamps.end(), t);
    if (hi == stamps.begin()) {
      knots[i] = poses.front() * QuatExp<double>((t - stamps.front()) * rates.front());
    } else {
      const size_t j = static_cast<size_t>(hi - stamps.begin()) - 1;
      knots[i] = poses[j] * QuatExp<double>((t - stamps[j]) * rates[j]);
    }
    knots[i].normalize();
  }
  return knots;
}

std::vector<std::pair<double, double>> RateMagnitudes(const std::vector<ImuMeasurement> &gyro,
                                                      const ImuIntrinsics &intr) {
  std::vector<std::pair<double, double>> out;
  out.reserve(gyro.size());
  for (const auto &m : gyro) out.emplace_back(m.t, intr.InvertGyro(m.gyro).norm());
  return out;
}

/// Kabsch solve of w_ref = R * w_i over matched rate pairs.
Mat3 SeedRotation(const std::vector<ImuMeasurement> &gyro, const ImuIntrinsics &intr,
                  double offset, const So3Spline &spline) {
  Mat3 cross = Mat3::Zero();
  for (const auto &m : gyro) {
    const double t = m.t + offset;
    if (!spline.grid().InSupport(t)) continue;
    Vec3 w_ref;
    spline.AngularVelocity(t, nullptr, &w_ref);
    cross += w_ref * intr.InvertGyro(m.gyro).transpose();
  }
  const Eigen::JacobiSVD<Mat3> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1.0;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return r;
}

}  // namespace

RotationRecoveryResult RecoverRotationSpline(const std::vector<GyroStream> &imus,
                                             const KnotGrid &grid,
                                             const RotationRecoveryConfig &config) {
  const GyroStream *reference = nullptr;
  for (const auto &s : imus) {
    if (s.is_reference) reference = &s;
    if (!s.data || s.data->size() < 2) {
      throw UnderConstrainedError("gyro stream '" + s.name + "' has fewer than two samples");
    }
  }
  if (!reference) throw ConfigError("no reference IMU among the gyro streams");

  RotationRecoveryResult result;
  result.spline = So3Spline(grid, SeedKnots(*reference->data, reference->intrinsics, grid));

  // Excitation probe: a near-constant rate leaves the knots (and any
  // inter-IMU offset) weakly constrained.
  {
    double mean = 0.0, sq = 0.0;
    for (const auto &m : *reference->data) {
      const double v = reference->intrinsics.InvertGyro(m.gyro).norm();
      mean += v;
      sq += v * v;
    }
    const double n = static_cast<double>(reference->data->size());
    const double var = sq / n - (mean / n) * (mean / n);
    if (std::sqrt(std::max(0.0, var)) < config.min_excitation) {
      result.warnings.push_back("near-constant angular rate: rotation recovery is weakly excited");
    }
  }

  const auto ref_mags = RateMagnitudes(*reference->data, reference->intrinsics);
  struct Extrinsic {
    Quat q;
    double tau;
  };
  std::map<std::string, Extrinsic> extrinsics;
  for (const auto &s : imus) {
    if (s.is_reference) continue;
    const double tau = SearchOffset(RateMagnitudes(*s.data, s.intrinsics), ref_mags,
                                    config.max_offset, config.offset_grid_step);
    extrinsics[s.name] = {Quat(SeedRotation(*s.data, s.intrinsics, tau, result.spline)), tau};
  }

  ceres::Problem problem;
  ceres::LocalParameterization *quat_param = NewQuaternionParameterization();
  for (auto &knot : result.spline.knots()) {
    problem.AddParameterBlock(knot.coeffs().data(), 4, quat_param);
  }
  problem.SetParameterBlockConstant(result.spline.knots().front().coeffs().data());

  const double weight = 1.0 / config.sigma_gyro;
  for (const auto &s : imus) {
    Extrinsic *ext = s.is_reference ? nullptr : &extrinsics[s.name];
    for (const auto &m : *s.data) {
      const double slack = s.is_reference ? 0.0 : config.max_offset;
      if (m.t - slack < grid.SupportBegin() || m.t + slack >= grid.SupportEnd()) continue;
      auto *functor = new GyroResidual{SplineWindow::Cover(grid, m.t - slack, m.t + slack),
                                       m.t,
                                       m.gyro,
                                       &s.intrinsics,
                                       weight,
                                       !s.is_reference};
      auto *cost = new ceres::DynamicAutoDiffCostFunction<GyroResidual>(functor);
      std::vector<double *> blocks = WindowBlocks(result.spline, functor->window);
      for (int i = 0; i < functor->window.count; ++i) cost->AddParameterBlock(4);
      if (ext) {
        blocks.push_back(ext->q.coeffs().data());
        blocks.push_back(&ext->tau);
        cost->AddParameterBlock(4);
        cost->AddParameterBlock(1);
      }
      cost->SetNumResiduals(3);
      problem.AddResidualBlock(cost, nullptr, blocks);
    }
  }
  for (auto &[name, ext] : extrinsics) {
    problem.SetParameterization(ext.q.coeffs().data(), quat_param);
    problem.SetParameterLowerBound(&ext.tau, 0, -config.max_offset);
    problem.SetParameterUpperBound(&ext.tau, 0, config.max_offset);
  }

  ceres::Solver::Options options;
  options.linear_solver_type = ceres::SPARSE_NORMAL_CHOLESKY;
  options.max_num_iterations = config.max_iterations;
  options.num_threads = 1;
  ceres::Solver::Summary summary;
  ceres::Solve(options, &problem, &summary);
  if (!summary.IsSolutionUsable()) {
    throw NumericalError("rotation recovery diverged: " + summary.BriefReport());
  }
  result.final_cost = summary.final_cost;
  result.iterations = static_cast<int>(summary.iterations.size());

  // Gauge: world frame = reference body at support begin.
  result.spline.ApplyLeftGauge(result.spline.Evaluate(grid.SupportBegin()).transpose());

  result.rotations[reference->name] = Mat3::Identity();
  result.offsets[reference->name] = 0.0;
  for (const auto &[name, ext] : extrinsics) {
    result.rotations[name] = ext.q.toRotationMatrix();
    result.offsets[name] = ext.tau;
  }
  return result;
}

}  // namespace sical
