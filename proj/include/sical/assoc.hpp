#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sical/sensor_models.hpp"

namespace sical {

struct AssociationConfig {
  std::vector<double> voxel_sizes = {1.0, 0.5, 0.25};  // coarse to fine, m
  int min_points = 20;          // per voxel, to be usable for association
  double min_planarity = 0.6;
  double max_distance = 0.10;   // m, point-to-surfel
  int cap_per_surfel = 10;
  int min_track_length = 2;     // frames per landmark
  int cap_per_landmark = 10;    // reprojection pairs
};

/// Per-voxel plane statistics. The normal is the smallest-eigenvalue
/// direction of the point covariance, oriented so that d = -n^T mean >= 0;
/// planarity is (l2 - l3) / l1 for eigenvalues l1 >= l2 >= l3, in [0, 1].
struct Surfel {
  int level = 0;  // index into voxel_sizes (deeper = finer)
  std::uint64_t key = 0;
  int count = 0;
  Vec3 mean = Vec3::Zero();
  Mat3 covariance = Mat3::Zero();
  double planarity = 0.0;
  Vec3 normal = Vec3::UnitZ();
  double d = 0.0;
};

struct PointToSurfelCorr {
  std::string sensor;
  double stamp = 0.0;        // sensor clock
  Vec3 point = Vec3::Zero(); // LiDAR frame
  Vec3 normal = Vec3::UnitZ();  // world frame, unit
  double d = 0.0;               // plane offset, n^T p + d = 0 on the plane
  int level = 0;                // owning surfel, for downsampling
  std::uint64_t key = 0;
};

struct VisualReprojCorr {
  std::string camera;
  std::int64_t landmark = 0;
  double anchor_time = 0.0;  // frame stamp, sensor clock
  Vec2 anchor_pixel = Vec2::Zero();
  double inverse_depth = 0.0;  // 1/m in the anchor camera frame, metric
  double time = 0.0;           // later frame stamp, sensor clock
  Vec2 pixel = Vec2::Zero();
};

/// Multi-level voxel hash over world points with streaming mean/covariance
/// per voxel. Finalize() computes the eigen statistics once after insertion;
/// voxels with fewer than three points never yield a surfel.
class VoxelSurfelMap {
 public:
  explicit VoxelSurfelMap(const AssociationConfig &config);

  void Insert(const Vec3 &world_point);
  void Finalize();

  /// Largest-planarity surfel among the voxels containing the point that
  /// pass the count, planarity, and distance gates; ties prefer the finer
  /// level, then the lower voxel key. Requires Finalize().
  const Surfel *Associate(const Vec3 &world_point) const;

  /// All finalized surfels (count >= 3), deterministic order.
  std::vector<const Surfel *> Surfels() const;

  const AssociationConfig &config() const { return config_; }

 private:
  struct Voxel {
    int count = 0;
    Vec3 mean = Vec3::Zero();
    Mat3 m2 = Mat3::Zero();  // sum of outer products of deviations
    Surfel surfel;
    bool valid = false;
  };

  AssociationConfig config_;
  bool finalized_ = false;
  std::vector<std::map<std::uint64_t, Voxel>> levels_;
};

VoxelSurfelMap BuildSurfelMap(const std::vector<Vec3> &world_points,
                              const AssociationConfig &config);

/// Associates each LiDAR point (paired with its world-frame position under
/// the current state) against the map. Points without a surfel are dropped.
std::vector<PointToSurfelCorr> AssociatePoints(const VoxelSurfelMap &map,
                                               const std::string &sensor,
                                               const std::vector<LidarPoint> &points,
                                               const std::vector<Vec3> &world_points);

/// Per-surfel cap by uniform temporal striding; deterministic.
std::vector<PointToSurfelCorr> DownsampleCorrespondences(std::vector<PointToSurfelCorr> corrs,
                                                         int cap_per_surfel);

struct ReprojBuildResult {
  std::vector<VisualReprojCorr> pairs;
  int skipped_nonpositive_depth = 0;
  int skipped_missing_pose = 0;
};

/// Anchors every landmark track at its earliest frame, computes the metric
/// inverse depth there from the up-to-scale map landmark and camera pose
/// (both multiplied by `scale`), and emits (anchor, later) pairs up to the
/// per-landmark cap by uniform striding.
ReprojBuildResult BuildReprojectionPairs(const std::string &camera,
                                         const std::vector<FeatureObservation> &observations,
                                         const std::vector<OdomPose> &poses,
                                         const std::map<std::int64_t, Vec3> &landmarks,
                                         double scale, const AssociationConfig &config);

}  // namespace sical
