#include "sical/spline.hpp"

#include <Eigen/Sparse>
#include <cmath>
#include <sstream>

#include "sical/spline_eval.hpp"

namespace sical {

int KnotGrid::SegmentIndex(double t) const {
  if (!InSupport(t)) throw OutOfSupportError(t, SupportBegin(), SupportEnd());
  int i = static_cast<int>(std::floor((t - start_time) / dt));
  if (i < 1) i = 1;
  if (i > count - 3) i = count - 3;
  return i;
}

std::pair<int, double> KnotGrid::Locate(double t) const {
  const int i = SegmentIndex(t);
  double u = (t - start_time) / dt - i;
  if (u < 0.0) u = 0.0;
  if (u >= 1.0) u = std::nextafter(1.0, 0.0);
  return {i, u};
}

KnotGrid KnotGrid::Covering(double t_min, double t_max, double dt) {
  if (dt <= 0.0) throw ConfigError("knot spacing must be positive");
  if (t_max < t_min) throw ConfigError("empty time span for knot grid");
  KnotGrid grid;
  grid.dt = dt;
  grid.start_time = t_min - dt;
  grid.count = static_cast<int>(std::ceil((t_max - grid.start_time) / dt)) + 3;
  if (grid.count < 4) grid.count = 4;
  return grid;
}

Vec4 CumulativeBasis(double u, int derivative_order, double dt) {
  if (u < 0.0 || u >= 1.0) throw DomainError("normalized time u must lie in [0, 1)");
  return CumulativeBasisT(u, derivative_order, dt);
}

R3Spline::R3Spline(KnotGrid grid, std::vector<Vec3> knots)
    : grid_(grid), knots_(std::move(knots)) {
  if (static_cast<int>(knots_.size()) != grid_.count)
    throw ConfigError("R3Spline: knot count does not match grid");
}

Vec3 R3Spline::Evaluate(double t, int order) const {
  const auto [i, u] = grid_.Locate(t);
  const Vec3 window[4] = {knots_[i - 1], knots_[i], knots_[i + 1], knots_[i + 2]};
  return EvalR3Segment<double>(window, u, grid_.dt, order);
}

So3Spline::So3Spline(KnotGrid grid, std::vector<Quat> knots)
    : grid_(grid), knots_(std::move(knots)) {
  if (static_cast<int>(knots_.size()) != grid_.count)
    throw ConfigError("So3Spline: knot count does not match grid");
}

Quat So3Spline::EvaluateQuat(double t) const {
  const auto [i, u] = grid_.Locate(t);
  const Quat window[4] = {knots_[i - 1], knots_[i], knots_[i + 1], knots_[i + 2]};
  return EvalSo3Segment<double>(window, u, grid_.dt, false).q.normalized();
}

Mat3 So3Spline::Evaluate(double t) const { return EvaluateQuat(t).toRotationMatrix(); }

void So3Spline::AngularVelocity(double t, Vec3 *w_world, Vec3 *w_body) const {
  const auto [i, u] = grid_.Locate(t);
  const Quat window[4] = {knots_[i - 1], knots_[i], knots_[i + 1], knots_[i + 2]};
  const auto kin = EvalSo3Segment<double>(window, u, grid_.dt, true);
  if (w_body) *w_body = kin.w_body;
  if (w_world) *w_world = kin.q * kin.w_body;
}

Vec3 So3Spline::AngularAcceleration(double t) const {
  const auto [i, u] = grid_.Locate(t);
  const Quat window[4] = {knots_[i - 1], knots_[i], knots_[i + 1], knots_[i + 2]};
  const auto kin = EvalSo3Segment<double>(window, u, grid_.dt, true);
  return kin.q * kin.alpha_body;
}

void So3Spline::ApplyLeftGauge(const Mat3 &g) {
  const Quat gq(g);
  for (auto &k : knots_) k = (gq * k).normalized();
}

FitResult FitR3(const std::vector<std::pair<double, Vec3>> &samples, const KnotGrid &grid,
                int order) {
  const int n = static_cast<int>(samples.size());
  if (n < grid.count)
    throw UnderConstrainedError("FitR3: fewer samples than knots (" + std::to_string(n) + " < " +
                                std::to_string(grid.count) + ")");

  std::vector<int> hits(grid.count, 0);
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(4 * n);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, 3);
  for (int row = 0; row < n; ++row) {
    const auto &[t, value] = samples[row];
    const auto [i, u] = grid.Locate(t);
    const Vec4 lambda = CumulativeBasis(u, order, grid.dt);
    // value = k_{i-1}*(c0) + ... expressed directly in knot coefficients
    double coeff[4];
    coeff[0] = (order == 0 ? 1.0 : 0.0) - lambda[1];
    coeff[1] = lambda[1] - lambda[2];
    coeff[2] = lambda[2] - lambda[3];
    coeff[3] = lambda[3];
    for (int j = 0; j < 4; ++j) {
      triplets.emplace_back(row, i - 1 + j, coeff[j]);
      ++hits[i - 1 + j];
    }
    rhs.row(row) = value.transpose();
  }

  std::ostringstream empty;
  bool any_empty = false;
  for (int k = 0; k < grid.count; ++k) {
    if (hits[k] == 0) {
      empty << (any_empty ? ", " : "") << k;
      any_empty = true;
    }
  }
  if (any_empty)
    throw UnderConstrainedError("FitR3: knot windows without samples: " + empty.str());

  // A knot near the grid boundary can be "hit" only through near-zero basis
  // weights (samples at the far end of its last segment), which leaves its
  // column numerically empty. Tie such knots to their neighbours with a
  // second-difference row: linear extrapolation of the control polygon.
  Eigen::VectorXd col_sq = Eigen::VectorXd::Zero(grid.count);
  for (const auto &tr : triplets) col_sq[tr.col()] += tr.value() * tr.value();
  int extra = 0;
  const double weak = 1e-8 * col_sq.maxCoeff();
  for (int k = 0; k < grid.count; ++k) {
    if (col_sq[k] > weak) continue;
    const int base = std::clamp(k, 1, grid.count - 2);
    triplets.emplace_back(n + extra, base - 1, 1.0);
    triplets.emplace_back(n + extra, base, -2.0);
    triplets.emplace_back(n + extra, base + 1, 1.0);
    ++extra;
  }
  rhs.conservativeResize(n + extra, 3);
  rhs.bottomRows(extra).setZero();

  Eigen::SparseMatrix<double> a(n + extra, grid.count);
  a.setFromTriplets(triplets.begin(), triplets.end());
  Eigen::SparseMatrix<double> normal = (a.transpose() * a).pruned();
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(normal);
  if (solver.info() != Eigen::Success)
    throw UnderConstrainedError("FitR3: normal equations rank-deficient");
  Eigen::MatrixXd knots_mat = solver.solve(a.transpose() * rhs);

  std::vector<Vec3> knots(grid.count);
  for (int k = 0; k < grid.count; ++k) knots[k] = knots_mat.row(k).transpose();

  FitResult out{R3Spline(grid, std::move(knots)), 0.0};
  double sq_sum = 0.0;
  for (const auto &[t, value] : samples) {
    sq_sum += (out.spline.Evaluate(t, order) - value).squaredNorm();
  }
  out.rms = std::sqrt(sq_sum / n);
  return out;
}

}  // namespace sical
