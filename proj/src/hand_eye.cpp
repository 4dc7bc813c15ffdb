#include "sical/hand_eye.hpp"

#include <ceres/ceres.h>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <sstream>

#include "sical/ceres_spline.hpp"
#include "sical/errors.hpp"
#include "sical/manifolds.hpp"
#include "sical/offset_search.hpp"

namespace sical {

namespace {

struct RotationPair {
  double t1, t2;  // sensor clock
  Quat delta;     // R_s(t1)^T R_s(t2)
  double angle;
  Vec3 axis;  // unit, sensor frame
};

// r = Log( q_hat * dq_sensor * q_hat^-1 * dq_body(tau)^-1 ); parameters are
// the spline knot window followed by q_hat and tau.
struct HandEyeResidual {
  SplineWindow window;
  RotationPair pair;
  double weight;

  template <typename T>
  bool operator()(T const *const *params, T *residual) const {
    Eigen::Map<const Eigen::Quaternion<T>> q_hat(params[window.count]);
    const T tau = params[window.count + 1][0];
    const Eigen::Quaternion<T> body1 = EvalSo3Window(params, window, T(pair.t1) + tau, false).q;
    const Eigen::Quaternion<T> body2 = EvalSo3Window(params, window, T(pair.t2) + tau, false).q;
    const Eigen::Quaternion<T> delta_body = body1.conjugate() * body2;
    const Eigen::Quaternion<T> err =
        q_hat * pair.delta.cast<T>() * q_hat.conjugate() * delta_body.conjugate();
    Eigen::Map<Eigen::Matrix<T, 3, 1>> r(residual);
    r = T(weight) * QuatLog<T>(err.normalized());
    return true;
  }
};

}  // namespace

HandEyeResult RotationHandEye(const std::vector<OdomPose> &poses, const So3Spline &rot_spline,
                              const HandEyeConfig &config) {
  std::vector<RotationPair> pairs;
  for (size_t k = 0; k + 1 < poses.size(); ++k) {
    RotationPair p;
    p.t1 = poses[k].t;
    p.t2 = poses[k + 1].t;
    p.delta = (poses[k].q.conjugate() * poses[k + 1].q).normalized();
    const Vec3 log = QuatLog<double>(p.delta);
    p.angle = log.norm();
    if (p.angle < config.min_pair_angle) continue;
    p.axis = log / p.angle;
    pairs.push_back(p);
  }
  if (static_cast<int>(pairs.size()) < config.min_pairs) {
    throw UnderConstrainedError("hand-eye alignment needs at least " +
                                std::to_string(config.min_pairs) + " relative rotations, got " +
                                std::to_string(pairs.size()));
  }

  // Axis scatter: a single shared rotation axis leaves the extrinsic
  // rotation unobservable about that axis.
  Mat3 scatter = Mat3::Zero();
  for (const auto &p : pairs) scatter += p.axis * p.axis.transpose();
  scatter /= static_cast<double>(pairs.size());
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter);
  if (eig.eigenvalues()(1) < config.min_axis_spread) {
    const Vec3 dominant = eig.eigenvectors().col(2);
    std::ostringstream msg;
    msg << "hand-eye rotations share a single axis [" << dominant.transpose()
        << "]; extrinsic rotation unobservable about it";
    throw DegeneracyError(msg.str());
  }

  const KnotGrid &grid = rot_spline.grid();
  const auto in_support = [&](const RotationPair &p, double slack) {
    return p.t1 - slack >= grid.SupportBegin() && p.t2 + slack < grid.SupportEnd();
  };

  // Offset seed from rotation-rate magnitude correlation.
  std::vector<std::pair<double, double>> sensor_rate;
  for (const auto &p : pairs) {
    sensor_rate.emplace_back(0.5 * (p.t1 + p.t2), p.angle / (p.t2 - p.t1));
  }
  std::vector<std::pair<double, double>> body_rate;
  const double dt_probe = 0.01;
  for (double t = grid.SupportBegin(); t < grid.SupportEnd(); t += dt_probe) {
    Vec3 w;
    rot_spline.AngularVelocity(t, nullptr, &w);
    body_rate.emplace_back(t, w.norm());
  }
  double tau = SearchOffset(sensor_rate, body_rate, config.max_offset, config.offset_grid_step);

  // Kabsch seed for the rotation: axis_body = R * axis_sensor, angle-weighted.
  Mat3 cross = Mat3::Zero();
  for (const auto &p : pairs) {
    if (!in_support(p, 0.0) || !grid.InSupport(p.t1 + tau) || !grid.InSupport(p.t2 + tau)) {
      continue;
    }
    const Mat3 delta_body = rot_spline.Evaluate(p.t1 + tau).transpose() *
                            rot_spline.Evaluate(p.t2 + tau);
    const Vec3 log_body = So3Log(delta_body);
    if (log_body.norm() < 1e-12) continue;
    cross += p.angle * log_body.normalized() * p.axis.transpose();
  }
  const Eigen::JacobiSVD<Mat3> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 seed = svd.matrixU() * svd.matrixV().transpose();
  if (seed.determinant() < 0.0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1.0;
    seed = svd.matrixU() * flip * svd.matrixV().transpose();
  }

  Quat q_hat(seed);
  ceres::Problem problem;
  auto spline = rot_spline;  // knots are parameters to ceres but held constant
  int used = 0;
  for (const auto &p : pairs) {
    if (!in_support(p, config.max_offset)) continue;
    auto *functor = new HandEyeResidual{
        SplineWindow::Cover(grid, p.t1 - config.max_offset, p.t2 + config.max_offset), p, 1.0};
    auto *cost = new ceres::DynamicAutoDiffCostFunction<HandEyeResidual>(functor);
    std::vector<double *> blocks = WindowBlocks(spline, functor->window);
    for (int i = 0; i < functor->window.count; ++i) cost->AddParameterBlock(4);
    blocks.push_back(q_hat.coeffs().data());
    blocks.push_back(&tau);
    cost->AddParameterBlock(4);
    cost->AddParameterBlock(1);
    cost->SetNumResiduals(3);
    problem.AddResidualBlock(cost, nullptr, blocks);
    ++used;
  }
  if (used < config.min_pairs) {
    throw UnderConstrainedError("hand-eye: only " + std::to_string(used) +
                                " rotation pairs inside the spline support");
  }
  for (auto &knot : spline.knots()) {
    if (problem.HasParameterBlock(knot.coeffs().data())) {
      problem.SetParameterBlockConstant(knot.coeffs().data());
    }
  }
  problem.SetParameterization(q_hat.coeffs().data(), NewQuaternionParameterization());
  problem.SetParameterLowerBound(&tau, 0, -config.max_offset);
  problem.SetParameterUpperBound(&tau, 0, config.max_offset);

  ceres::Solver::Options options;
  options.linear_solver_type = ceres::DENSE_QR;
  options.max_num_iterations = config.max_iterations;
  options.num_threads = 1;
  ceres::Solver::Summary summary;
  ceres::Solve(options, &problem, &summary);
  if (!summary.IsSolutionUsable()) {
    throw NumericalError("hand-eye alignment diverged: " + summary.BriefReport());
  }

  HandEyeResult result;
  result.rotation = q_hat.toRotationMatrix();
  result.offset = tau;
  result.final_cost = summary.final_cost;
  result.iterations = static_cast<int>(summary.iterations.size());
  return result;
}

}  // namespace sical
