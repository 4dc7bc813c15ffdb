#pragma once

#include <utility>
#include <vector>

#include "sical/errors.hpp"
#include "sical/lie.hpp"

namespace sical {

// Uniform cubic (k=4) cumulative B-splines. A query at t uses the four knots
// around the segment [tau_i, tau_i+1), so the queryable support is
// [start_time + dt, start_time + (count-2)*dt).

struct KnotGrid {
  double start_time = 0.0;
  double dt = 0.05;
  int count = 0;

  double SupportBegin() const { return start_time + dt; }
  double SupportEnd() const { return start_time + (count - 2) * dt; }
  bool InSupport(double t) const { return t >= SupportBegin() && t < SupportEnd(); }
  double KnotTime(int i) const { return start_time + i * dt; }

  // Segment index i such that t in [tau_i, tau_i+1); knots used are i-1..i+2.
  int SegmentIndex(double t) const;
  // Segment index plus normalized time u in [0, 1).
  std::pair<int, double> Locate(double t) const;

  /// Smallest grid with the given dt whose support covers [t_min, t_max].
  static KnotGrid Covering(double t_min, double t_max, double dt);
};

/// Cumulative basis lambda(u) = N4 * [1, u, u^2, u^3]^T; derivative orders
/// differentiate the monomial vector and divide by dt^order.
Vec4 CumulativeBasis(double u, int derivative_order, double dt);

class R3Spline {
 public:
  R3Spline() = default;
  R3Spline(KnotGrid grid, std::vector<Vec3> knots);

  const KnotGrid &grid() const { return grid_; }
  const std::vector<Vec3> &knots() const { return knots_; }
  std::vector<Vec3> &knots() { return knots_; }

  Vec3 Evaluate(double t, int order = 0) const;

 private:
  KnotGrid grid_;
  std::vector<Vec3> knots_;
};

class So3Spline {
 public:
  So3Spline() = default;
  So3Spline(KnotGrid grid, std::vector<Quat> knots);

  const KnotGrid &grid() const { return grid_; }
  const std::vector<Quat> &knots() const { return knots_; }
  std::vector<Quat> &knots() { return knots_; }

  Mat3 Evaluate(double t) const;
  Quat EvaluateQuat(double t) const;

  /// Angular velocity; hat(w_world) = Rdot * R^T and w_body = R^T * w_world.
  void AngularVelocity(double t, Vec3 *w_world, Vec3 *w_body) const;
  /// World-frame angular acceleration d/dt w_world.
  Vec3 AngularAcceleration(double t) const;

  /// Left-multiplies every knot by g (world-frame re-gauging).
  void ApplyLeftGauge(const Mat3 &g);

 private:
  KnotGrid grid_;
  std::vector<Quat> knots_;
};

struct FitResult {
  R3Spline spline;
  double rms = 0.0;
};

/// Linear least-squares fit of an R^3 spline to samples of the given
/// derivative order. Throws UnderConstrainedError when a knot window holds
/// no samples.
FitResult FitR3(const std::vector<std::pair<double, Vec3>> &samples, const KnotGrid &grid,
                int order = 0);

}  // namespace sical
