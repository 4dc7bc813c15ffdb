#include "sical/assoc.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "sical/errors.hpp"

namespace sical {

namespace {

// 21 bits per axis around a 2^20 offset: injective for |index| < 2^20,
// i.e. world coordinates within ~260 km at the finest 0.25 m level.
std::uint64_t VoxelKey(const Vec3 &p, double size) {
  constexpr std::int64_t kOffset = 1 << 20;
  constexpr std::uint64_t kMask = (1ull << 21) - 1;
  std::uint64_t key = 0;
  for (int a = 0; a < 3; ++a) {
    const auto idx = static_cast<std::int64_t>(std::floor(p[a] / size)) + kOffset;
    key = (key << 21) | (static_cast<std::uint64_t>(idx) & kMask);
  }
  return key;
}

}  // namespace

VoxelSurfelMap::VoxelSurfelMap(const AssociationConfig &config) : config_(config) {
  if (config_.voxel_sizes.empty()) throw ConfigError("surfel map needs at least one voxel level");
  for (double s : config_.voxel_sizes) {
    if (s <= 0.0) throw ConfigError("voxel sizes must be positive");
  }
  levels_.resize(config_.voxel_sizes.size());
}

void VoxelSurfelMap::Insert(const Vec3 &p) {
  finalized_ = false;
  for (size_t level = 0; level < levels_.size(); ++level) {
    Voxel &v = levels_[level][VoxelKey(p, config_.voxel_sizes[level])];
    // Welford update of the mean and the deviation outer-product sum.
    ++v.count;
    const Vec3 delta = p - v.mean;
    v.mean += delta / v.count;
    v.m2 += delta * (p - v.mean).transpose();
  }
}

void VoxelSurfelMap::Finalize() {
  for (size_t level = 0; level < levels_.size(); ++level) {
    for (auto &[key, v] : levels_[level]) {
      v.valid = v.count >= 3;
      if (!v.valid) continue;
      const Mat3 cov = 0.5 * (v.m2 + v.m2.transpose()) / v.count;
      Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
      const Vec3 l = eig.eigenvalues();  // ascending
      Surfel &s = v.surfel;
      s.level = static_cast<int>(level);
      s.key = key;
      s.count = v.count;
      s.mean = v.mean;
      s.covariance = cov;
      s.planarity = l[2] > 0.0 ? std::clamp((l[1] - l[0]) / l[2], 0.0, 1.0) : 0.0;
      s.normal = eig.eigenvectors().col(0);
      s.d = -s.normal.dot(s.mean);
      if (s.d < 0.0) {
        s.normal = -s.normal;
        s.d = -s.d;
      }
    }
  }
  finalized_ = true;
}

const Surfel *VoxelSurfelMap::Associate(const Vec3 &p) const {
  if (!finalized_) throw ConfigError("surfel map not finalized before association");
  const Surfel *best = nullptr;
  for (size_t level = 0; level < levels_.size(); ++level) {
    const auto it = levels_[level].find(VoxelKey(p, config_.voxel_sizes[level]));
    if (it == levels_[level].end() || !it->second.valid) continue;
    const Surfel &s = it->second.surfel;
    if (s.count < config_.min_points) continue;
    if (s.planarity < config_.min_planarity) continue;
    if (std::abs(s.normal.dot(p) + s.d) > config_.max_distance) continue;
    if (best == nullptr || s.planarity > best->planarity ||
        (s.planarity == best->planarity &&
         (s.level > best->level || (s.level == best->level && s.key < best->key)))) {
      best = &s;
    }
  }
  return best;
}

std::vector<const Surfel *> VoxelSurfelMap::Surfels() const {
  std::vector<const Surfel *> out;
  for (const auto &level : levels_) {
    for (const auto &[key, v] : level) {
      if (v.valid) out.push_back(&v.surfel);
    }
  }
  return out;
}

VoxelSurfelMap BuildSurfelMap(const std::vector<Vec3> &world_points,
                              const AssociationConfig &config) {
  VoxelSurfelMap map(config);
  for (const Vec3 &p : world_points) map.Insert(p);
  map.Finalize();
  return map;
}

std::vector<PointToSurfelCorr> AssociatePoints(const VoxelSurfelMap &map,
                                               const std::string &sensor,
                                               const std::vector<LidarPoint> &points,
                                               const std::vector<Vec3> &world_points) {
  if (points.size() != world_points.size()) {
    throw ConfigError("AssociatePoints: point/world-point size mismatch");
  }
  std::vector<PointToSurfelCorr> corrs;
  for (size_t i = 0; i < points.size(); ++i) {
    const Surfel *s = map.Associate(world_points[i]);
    if (s == nullptr) continue;
    corrs.push_back({sensor, points[i].t, points[i].position, s->normal, s->d, s->level, s->key});
  }
  return corrs;
}

std::vector<PointToSurfelCorr> DownsampleCorrespondences(std::vector<PointToSurfelCorr> corrs,
                                                         int cap_per_surfel) {
  if (cap_per_surfel < 1) throw ConfigError("cap_per_surfel must be at least 1");
  std::stable_sort(corrs.begin(), corrs.end(),
                   [](const PointToSurfelCorr &a, const PointToSurfelCorr &b) {
                     if (a.level != b.level) return a.level < b.level;
                     if (a.key != b.key) return a.key < b.key;
                     return a.stamp < b.stamp;
                   });
  std::vector<PointToSurfelCorr> out;
  size_t begin = 0;
  while (begin < corrs.size()) {
    size_t end = begin;
    while (end < corrs.size() && corrs[end].level == corrs[begin].level &&
           corrs[end].key == corrs[begin].key) {
      ++end;
    }
    const size_t n = end - begin;
    if (n <= static_cast<size_t>(cap_per_surfel)) {
      out.insert(out.end(), corrs.begin() + begin, corrs.begin() + end);
    } else {
      for (int i = 0; i < cap_per_surfel; ++i) {
        out.push_back(corrs[begin + i * n / cap_per_surfel]);
      }
    }
    begin = end;
  }
  return out;
}

ReprojBuildResult BuildReprojectionPairs(const std::string &camera,
                                         const std::vector<FeatureObservation> &observations,
                                         const std::vector<OdomPose> &poses,
                                         const std::map<std::int64_t, Vec3> &landmarks,
                                         double scale, const AssociationConfig &config) {
  std::map<std::int64_t, std::vector<const FeatureObservation *>> tracks;
  for (const auto &obs : observations) tracks[obs.landmark_id].push_back(&obs);

  const auto pose_at = [&poses](double t) -> const OdomPose * {
    const auto it = std::lower_bound(
        poses.begin(), poses.end(), t,
        [](const OdomPose &pose, double tq) { return pose.t < tq - 1e-9; });
    if (it == poses.end() || std::abs(it->t - t) > 1e-9) return nullptr;
    return &*it;
  };

  ReprojBuildResult result;
  for (auto &[id, track] : tracks) {
    if (track.size() < static_cast<size_t>(config.min_track_length)) continue;
    std::stable_sort(track.begin(), track.end(),
                     [](const FeatureObservation *a, const FeatureObservation *b) {
                       return a->t_frame < b->t_frame;
                     });
    const FeatureObservation &anchor = *track.front();
    const auto lm = landmarks.find(id);
    const OdomPose *pose = pose_at(anchor.t_frame);
    if (lm == landmarks.end() || pose == nullptr) {
      ++result.skipped_missing_pose;
      continue;
    }
    // Landmark and camera position share the up-to-scale map frame; both
    // stretch by the visual scale, so the metric depth is scale * map depth.
    const double depth =
        scale * (pose->q.toRotationMatrix().transpose() * (lm->second - pose->p)).z();
    if (depth <= 0.0) {
      ++result.skipped_nonpositive_depth;
      continue;
    }
    std::vector<const FeatureObservation *> later(track.begin() + 1, track.end());
    later.erase(std::remove_if(later.begin(), later.end(),
                               [&anchor](const FeatureObservation *o) {
                                 return o->t_frame == anchor.t_frame;
                               }),
                later.end());
    const size_t n = later.size();
    const size_t cap = static_cast<size_t>(config.cap_per_landmark);
    for (size_t i = 0; i < std::min(n, cap); ++i) {
      const FeatureObservation &obs = *later[n <= cap ? i : i * n / cap];
      result.pairs.push_back({camera, id, anchor.t_frame, anchor.pixel, 1.0 / depth,
                              obs.t_frame, obs.pixel});
    }
  }
  return result;
}

}  // namespace sical
