#pragma once

#include <map>
#include <string>
#include <vector>

#include "sical/rig.hpp"
#include "sical/sensor_models.hpp"

namespace sical {

/// All sensor streams keyed by sensor name. Radar targets are grouped into
/// scans (shared stamp); LiDAR points carry their scan id inline. Odometry
/// streams exist for LiDAR and camera sensors and stand in for the scan
/// registration and SfM front-ends. SfM landmark positions are up to scale.
struct MeasurementSet {
  std::map<std::string, std::vector<ImuMeasurement>> imu;
  std::map<std::string, std::vector<std::vector<RadarTarget>>> radar;
  std::map<std::string, std::vector<LidarPoint>> lidar;
  std::map<std::string, std::vector<FeatureObservation>> camera;
  std::map<std::string, std::vector<OdomPose>> odometry;
  std::map<std::string, std::map<std::int64_t, Vec3>> sfm_landmarks;
};

// One JSONL file per stream inside dir:
//   <name>.jsonl           imu {"t","a","w"} | radar {"t","p","v"}
//                          lidar {"t","p","scan"} | camera {"t","lm","uv"}
//   <name>_odom.jsonl      {"t","q","p"} with q = (w,x,y,z)
//   <name>_landmarks.jsonl {"id","p"} (cameras only)
void WriteMeasurements(const std::string &dir, const RigConfig &config,
                       const MeasurementSet &data);

/// Loads every stream the config declares. Throws ConfigError with the file
/// and line number on schema violations, missing files, or non-monotone
/// stamps.
MeasurementSet LoadMeasurements(const std::string &dir, const RigConfig &config);

}  // namespace sical
