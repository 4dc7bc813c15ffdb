#include "sical/offset_search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sical {

double SearchOffset(const std::vector<std::pair<double, double>> &probe,
                    const std::vector<std::pair<double, double>> &base, double max_offset,
                    double step) {
  if (probe.empty() || base.size() < 2 || step <= 0.0) return 0.0;

  const auto interpolate = [&base](double t, double *value) {
    if (t < base.front().first || t > base.back().first) return false;
    const auto hi = std::lower_bound(base.begin(), base.end(), t,
                                     [](const auto &s, double tq) { return s.first < tq; });
    if (hi == base.begin()) {
      *value = base.front().second;
      return true;
    }
    const auto lo = hi - 1;
    const double u = (t - lo->first) / (hi->first - lo->first);
    *value = lo->second + u * (hi->second - lo->second);
    return true;
  };

  double best_tau = 0.0;
  double best_score = std::numeric_limits<double>::max();
  const int half = static_cast<int>(std::floor(max_offset / step));
  for (int i = -half; i <= half; ++i) {
    const double tau = i * step;
    double score = 0.0;
    int hits = 0;
    for (const auto &[t, v] : probe) {
      double ref;
      if (!interpolate(t + tau, &ref)) continue;
      score += (v - ref) * (v - ref);
      ++hits;
    }
    if (hits == 0) continue;
    score /= hits;
    if (score < best_score) {
      best_score = score;
      best_tau = tau;
    }
  }
  return best_tau;
}

}  // namespace sical
