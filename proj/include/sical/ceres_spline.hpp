#pragma once

#include <cmath>
#include <vector>

#include "sical/sensor_models.hpp"
#include "sical/spline.hpp"
#include "sical/spline_eval.hpp"

namespace sical {

// A contiguous run of spline knots handed to a ceres cost function as
// individual parameter blocks. Query times may themselves be Jets (time
// offsets are unknowns), so segment lookup happens inside the functor; the
// window must be built with enough slack to cover the whole offset search box.

struct SplineWindow {
  double first_time = 0.0;  // time of the first knot in the window
  double dt = 0.05;
  int first_index = 0;  // index of that knot in the owning grid
  int count = 0;

  /// Window of knots able to answer queries anywhere in [t_min, t_max].
  /// Times beyond the grid support clamp to the boundary segments.
  static SplineWindow Cover(const KnotGrid &grid, double t_min, double t_max) {
    const auto seg = [&grid](double t) {
      int i = static_cast<int>(std::floor((t - grid.start_time) / grid.dt));
      if (i < 1) i = 1;
      if (i > grid.count - 3) i = grid.count - 3;
      return i;
    };
    const int lo = seg(t_min) - 1;
    const int hi = seg(t_max) + 2;
    return {grid.KnotTime(lo), grid.dt, lo, hi - lo + 1};
  }

  /// Base knot (window-local) and normalized segment time for a query.
  /// Queries outside the window clamp to the nearest valid segment.
  template <typename T>
  void Locate(const T &t, int *base, T *u) const {
    const T x = (t - T(first_time)) / T(dt);
    int seg = static_cast<int>(std::floor(ScalarPart(x)));
    if (seg < 1) seg = 1;
    if (seg > count - 3) seg = count - 3;
    *base = seg - 1;
    *u = x - T(seg);
  }
};

/// Evaluates the rotation window at time t. `knots` points at the window's
/// quaternion parameter blocks (x, y, z, w storage, count of them).
template <typename T>
So3SegmentKinematics<T> EvalSo3Window(T const *const *knots, const SplineWindow &window,
                                      const T &t, bool with_kinematics = true) {
  int base;
  T u;
  window.Locate(t, &base, &u);
  Eigen::Quaternion<T> q[4];
  for (int j = 0; j < 4; ++j) {
    q[j] = Eigen::Map<const Eigen::Quaternion<T>>(knots[base + j]);
  }
  return EvalSo3Segment(q, u, window.dt, with_kinematics);
}

template <typename T>
Eigen::Matrix<T, 3, 1> EvalR3Window(T const *const *knots, const SplineWindow &window, const T &t,
                                    int order) {
  int base;
  T u;
  window.Locate(t, &base, &u);
  Eigen::Matrix<T, 3, 1> k[4];
  for (int j = 0; j < 4; ++j) {
    k[j] = Eigen::Map<const Eigen::Matrix<T, 3, 1>>(knots[base + j]);
  }
  return EvalR3Segment(k, u, window.dt, order);
}

/// Knot parameter pointers for a window (quaternion coeffs or Vec3 data).
inline std::vector<double *> WindowBlocks(So3Spline &spline, const SplineWindow &window) {
  std::vector<double *> blocks;
  blocks.reserve(window.count);
  for (int i = 0; i < window.count; ++i) {
    blocks.push_back(spline.knots()[window.first_index + i].coeffs().data());
  }
  return blocks;
}

inline std::vector<double *> WindowBlocks(R3Spline &spline, const SplineWindow &window) {
  std::vector<double *> blocks;
  blocks.reserve(window.count);
  for (int i = 0; i < window.count; ++i) {
    blocks.push_back(spline.knots()[window.first_index + i].data());
  }
  return blocks;
}

}  // namespace sical
