#include "sical/radar_ego.hpp"

#include <Eigen/SVD>
#include <cmath>

#include "sical/rng.hpp"

namespace sical {

namespace {

/// Least-squares velocity from the rows p_hat^T v = -doppler over `subset`.
std::optional<Vec3> SolveSubset(const std::vector<RadarTarget> &scan,
                                const std::vector<int> &subset, double min_sv) {
  Eigen::MatrixXd rows(subset.size(), 3);
  Eigen::VectorXd rhs(subset.size());
  for (size_t i = 0; i < subset.size(); ++i) {
    const RadarTarget &tgt = scan[subset[i]];
    const double norm = tgt.position.norm();
    if (norm < 1e-9) return std::nullopt;
    rows.row(i) = tgt.position.transpose() / norm;
    rhs(i) = -tgt.doppler;
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(rows, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.singularValues()(2) < min_sv) return std::nullopt;
  return Vec3(svd.solve(rhs));
}

double Residual(const RadarTarget &tgt, const Vec3 &v) {
  const double norm = tgt.position.norm();
  return norm < 1e-9 ? 0.0 : tgt.position.dot(v) / norm + tgt.doppler;
}

}  // namespace

std::optional<RadarEgoEstimate> EstimateRadarEgoVelocity(const std::vector<RadarTarget> &scan,
                                                         const RadarEgoConfig &config) {
  const int n = static_cast<int>(scan.size());
  if (n < 3) return std::nullopt;

  std::vector<int> best_consensus;
  for (int iter = 0; iter < config.ransac_iterations; ++iter) {
    StreamRng rng(config.seed, "radar_ego", static_cast<std::uint64_t>(iter));
    std::vector<int> subset(3);
    subset[0] = static_cast<int>(rng.Uniform(0.0, 1.0) * n) % n;
    do {
      subset[1] = static_cast<int>(rng.Uniform(0.0, 1.0) * n) % n;
    } while (subset[1] == subset[0]);
    do {
      subset[2] = static_cast<int>(rng.Uniform(0.0, 1.0) * n) % n;
    } while (subset[2] == subset[0] || subset[2] == subset[1]);

    const auto v = SolveSubset(scan, subset, config.min_direction_sv);
    if (!v) continue;
    std::vector<int> consensus;
    for (int i = 0; i < n; ++i) {
      if (std::abs(Residual(scan[i], *v)) <= config.inlier_threshold) consensus.push_back(i);
    }
    if (consensus.size() > best_consensus.size()) best_consensus = std::move(consensus);
  }
  if (static_cast<int>(best_consensus.size()) < 3) return std::nullopt;

  const auto refined = SolveSubset(scan, best_consensus, config.min_direction_sv);
  if (!refined) return std::nullopt;  // consensus directions degenerate

  RadarEgoEstimate out;
  out.velocity = *refined;
  out.inliers.assign(n, false);
  double sq_sum = 0.0;
  int inlier_count = 0;
  for (int i = 0; i < n; ++i) {
    const double r = Residual(scan[i], out.velocity);
    if (std::abs(r) <= config.inlier_threshold) {
      out.inliers[i] = true;
      sq_sum += r * r;
      ++inlier_count;
    }
  }
  if (inlier_count < 3) return std::nullopt;
  out.rms = std::sqrt(sq_sum / inlier_count);
  return out;
}

}  // namespace sical
