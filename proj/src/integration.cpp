#include "sical/integration.hpp"

#include <algorithm>
#include <cmath>

namespace sical {

namespace {

struct Sample {
  double t;     // reference clock
  Vec3 force;   // R(t) * R_i * a_i(t), world frame
  Mat3 omega;   // (hat(alpha_w) + hat(w_w)^2) * R(t)
};

Sample EvalAt(const So3Spline &rot, const Mat3 &r_i, double t, const Vec3 &accel) {
  Sample s;
  s.t = t;
  const Mat3 r = rot.Evaluate(t);
  Vec3 w_world;
  rot.AngularVelocity(t, &w_world, nullptr);
  const Vec3 alpha = rot.AngularAcceleration(t);
  s.force = r * (r_i * accel);
  s.omega = (Hat(alpha) + Hat(w_world) * Hat(w_world)) * r;
  return s;
}

}  // namespace

std::optional<IntegrationTerms> ComputeIntegrationTerms(const std::vector<ImuMeasurement> &imu,
                                                        const So3Spline &rot_spline,
                                                        const Mat3 &rotation, double offset,
                                                        const ImuIntrinsics &intrinsics,
                                                        double t_begin, double t_end) {
  if (t_end <= t_begin) return std::nullopt;

  // First sample at or after t_begin in the reference clock.
  const auto lower = std::lower_bound(
      imu.begin(), imu.end(), t_begin,
      [offset](const ImuMeasurement &m, double t) { return m.t + offset < t; });
  const auto upper = std::lower_bound(
      lower, imu.end(), t_end,
      [offset](const ImuMeasurement &m, double t) { return m.t + offset < t; });
  // The window endpoints need bracketing (or coinciding) samples.
  if (lower == imu.end() || upper == imu.end()) return std::nullopt;
  const bool exact_begin = std::abs(lower->t + offset - t_begin) < 1e-12;
  if (lower == imu.begin() && !exact_begin) return std::nullopt;
  if (std::distance(lower, upper) < 2) return std::nullopt;

  const auto corrected = [&](const ImuMeasurement &m) { return intrinsics.InvertAccel(m.accel); };
  const auto interpolated = [&](double t) {
    auto hi = std::lower_bound(
        imu.begin(), imu.end(), t,
        [offset](const ImuMeasurement &m, double tq) { return m.t + offset < tq; });
    if (std::abs(hi->t + offset - t) < 1e-12) return corrected(*hi);
    const auto lo = hi - 1;
    const double u = (t - (lo->t + offset)) / (hi->t - lo->t);
    return Vec3(corrected(*lo) + u * (corrected(*hi) - corrected(*lo)));
  };

  std::vector<Sample> samples;
  samples.reserve(static_cast<size_t>(std::distance(lower, upper)) + 2);
  samples.push_back(EvalAt(rot_spline, rotation, t_begin, interpolated(t_begin)));
  for (auto it = lower; it != upper; ++it) {
    const double t = it->t + offset;
    if (t <= samples.back().t) continue;
    samples.push_back(EvalAt(rot_spline, rotation, t, corrected(*it)));
  }
  if (t_end > samples.back().t) {
    samples.push_back(EvalAt(rot_spline, rotation, t_end, interpolated(t_end)));
  }
  if (samples.size() < 2) return std::nullopt;

  IntegrationTerms terms;
  terms.t_begin = t_begin;
  terms.t_end = t_end;
  // Running inner integrals feed the nested trapezoid for d and B.
  Vec3 c_prev = Vec3::Zero();
  Mat3 a_prev = Mat3::Zero();
  for (size_t k = 1; k < samples.size(); ++k) {
    const double h = samples[k].t - samples[k - 1].t;
    const Vec3 c_next = terms.c + 0.5 * h * (samples[k - 1].force + samples[k].force);
    const Mat3 a_next = terms.a + 0.5 * h * (samples[k - 1].omega + samples[k].omega);
    terms.d += 0.5 * h * (c_prev + c_next);
    terms.b += 0.5 * h * (a_prev + a_next);
    terms.c = c_next;
    terms.a = a_next;
    c_prev = c_next;
    a_prev = a_next;
  }
  return terms;
}

}  // namespace sical
