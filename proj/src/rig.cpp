#include "sical/rig.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace sical {

using nlohmann::json;

std::string KindName(SensorKind kind) {
  switch (kind) {
    case SensorKind::kImu: return "imu";
    case SensorKind::kRadar: return "radar";
    case SensorKind::kLidar: return "lidar";
    case SensorKind::kCamera: return "camera";
  }
  throw DomainError("unknown sensor kind");
}

SensorKind KindFromName(const std::string &name) {
  if (name == "imu") return SensorKind::kImu;
  if (name == "radar") return SensorKind::kRadar;
  if (name == "lidar") return SensorKind::kLidar;
  if (name == "camera") return SensorKind::kCamera;
  throw ConfigError("unknown sensor kind '" + name + "'");
}

std::string ScaleModeName(ScaleMode mode) {
  switch (mode) {
    case ScaleMode::kAcceleration: return "acceleration";
    case ScaleMode::kVelocity: return "velocity";
    case ScaleMode::kTranslation: return "translation";
  }
  throw DomainError("unknown scale mode");
}

void NoiseSpec::Validate() const {
  const double sigmas[] = {sigma_accel, sigma_gyro,  sigma_doppler, sigma_radar_pos,
                           sigma_lidar, sigma_pixel, sigma_odom_rot, sigma_odom_pos};
  for (double s : sigmas) {
    if (s < 0.0) throw ConfigError("noise sigmas must be non-negative");
  }
  if (outlier_fraction < 0.0 || outlier_fraction > 1.0) {
    throw ConfigError("outlier_fraction must be in [0, 1]");
  }
}

int RigConfig::CountKind(SensorKind kind) const {
  int n = 0;
  for (const auto &s : sensors) n += s.kind == kind ? 1 : 0;
  return n;
}

const SensorConfig &RigConfig::Sensor(const std::string &name) const {
  for (const auto &s : sensors) {
    if (s.name == name) return s;
  }
  throw ConfigError("no sensor named '" + name + "'");
}

std::vector<std::string> RigConfig::NamesOfKind(SensorKind kind) const {
  std::vector<std::string> names;
  for (const auto &s : sensors) {
    if (s.kind == kind) names.push_back(s.name);
  }
  return names;
}

void RigConfig::Validate() const {
  std::vector<std::string> problems;
  std::set<std::string> seen;
  for (const auto &s : sensors) {
    if (s.name.empty()) problems.push_back("sensor with empty name");
    if (!seen.insert(s.name).second) problems.push_back("duplicate sensor name '" + s.name + "'");
    if (s.rate <= 0.0) problems.push_back("sensor '" + s.name + "' has non-positive rate");
    try {
      if (s.kind == SensorKind::kImu) s.imu_intrinsics.Validate();
      if (s.kind == SensorKind::kCamera) s.camera_intrinsics.Validate();
    } catch (const ConfigError &e) {
      problems.push_back("sensor '" + s.name + "': " + e.what());
    }
  }
  const int n_imu = CountKind(SensorKind::kImu);
  if (n_imu < 1) {
    problems.push_back("sensor suite needs at least one IMU");
  }
  if (static_cast<int>(sensors.size()) < 2) {
    problems.push_back("sensor suite needs at least two sensors in total");
  }
  if (reference_imu.empty()) {
    problems.push_back("reference_imu is not set");
  } else {
    bool found = false;
    for (const auto &s : sensors) {
      found = found || (s.name == reference_imu && s.kind == SensorKind::kImu);
    }
    if (!found) problems.push_back("reference_imu '" + reference_imu + "' is not a configured IMU");
  }
  if (gravity_magnitude <= 0.0) problems.push_back("gravity_magnitude must be positive");
  if (rot_spline_dt <= 0.0 || scale_spline_dt <= 0.0) {
    problems.push_back("spline knot spacings must be positive");
  }
  if (timepiece <= 0.0) problems.push_back("timepiece must be positive");
  if (max_offset <= 0.0) problems.push_back("max_offset must be positive");
  try {
    noise.Validate();
  } catch (const ConfigError &e) {
    problems.push_back(e.what());
  }
  if (!problems.empty()) {
    std::ostringstream msg;
    msg << "invalid rig config (" << problems.size() << " problems):";
    for (const auto &p : problems) msg << "\n  - " << p;
    throw ConfigError(msg.str());
  }
}

ScaleMode RigConfig::SelectScaleMode() const {
  if (CountKind(SensorKind::kLidar) > 0 || CountKind(SensorKind::kCamera) > 0) {
    return ScaleMode::kTranslation;
  }
  if (CountKind(SensorKind::kRadar) > 0) return ScaleMode::kVelocity;
  return ScaleMode::kAcceleration;
}

namespace {

Mat3 Mat3FromJson(const json &j) {
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = j.at(r * 3 + c).get<double>();
  return m;
}

json Mat3ToJson(const Mat3 &m) {
  json j = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) j.push_back(m(r, c));
  return j;
}

Vec3 Vec3FromJson(const json &j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

ImuIntrinsics ImuIntrinsicsFromJson(const json &j) {
  ImuIntrinsics intr;
  if (j.contains("accel_mapping")) intr.accel_mapping = Mat3FromJson(j["accel_mapping"]);
  if (j.contains("gyro_mapping")) intr.gyro_mapping = Mat3FromJson(j["gyro_mapping"]);
  if (j.contains("accel_from_gyro")) intr.accel_from_gyro = Mat3FromJson(j["accel_from_gyro"]);
  if (j.contains("accel_bias")) intr.accel_bias = Vec3FromJson(j["accel_bias"]);
  if (j.contains("gyro_bias")) intr.gyro_bias = Vec3FromJson(j["gyro_bias"]);
  return intr;
}

json ImuIntrinsicsToJson(const ImuIntrinsics &intr) {
  return {{"accel_mapping", Mat3ToJson(intr.accel_mapping)},
          {"gyro_mapping", Mat3ToJson(intr.gyro_mapping)},
          {"accel_from_gyro", Mat3ToJson(intr.accel_from_gyro)},
          {"accel_bias", {intr.accel_bias.x(), intr.accel_bias.y(), intr.accel_bias.z()}},
          {"gyro_bias", {intr.gyro_bias.x(), intr.gyro_bias.y(), intr.gyro_bias.z()}}};
}

CameraIntrinsics CameraIntrinsicsFromJson(const json &j) {
  CameraIntrinsics intr;
  intr.fx = j.at("fx").get<double>();
  intr.fy = j.at("fy").get<double>();
  intr.cx = j.at("cx").get<double>();
  intr.cy = j.at("cy").get<double>();
  intr.width = j.at("width").get<int>();
  intr.height = j.at("height").get<int>();
  const std::string model = j.value("model", "brown");
  if (model == "brown") {
    intr.model = DistortionModel::kBrown;
  } else if (model == "fisheye") {
    intr.model = DistortionModel::kFisheye;
  } else {
    throw ConfigError("unknown distortion model '" + model + "'");
  }
  if (j.contains("distortion")) intr.distortion = j["distortion"].get<std::vector<double>>();
  intr.readout_time = j.value("readout_time", 0.0);
  return intr;
}

json CameraIntrinsicsToJson(const CameraIntrinsics &intr) {
  return {{"fx", intr.fx},
          {"fy", intr.fy},
          {"cx", intr.cx},
          {"cy", intr.cy},
          {"width", intr.width},
          {"height", intr.height},
          {"model", intr.model == DistortionModel::kBrown ? "brown" : "fisheye"},
          {"distortion", intr.distortion},
          {"readout_time", intr.readout_time}};
}

}  // namespace

RigConfig RigConfigFromJsonText(const std::string &text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception &e) {
    throw ConfigError(std::string("rig config is not valid JSON: ") + e.what());
  }
  RigConfig cfg;
  try {
    cfg.reference_imu = j.at("reference_imu").get<std::string>();
    cfg.gravity_magnitude = j.value("gravity_magnitude", cfg.gravity_magnitude);
    cfg.rot_spline_dt = j.value("rot_spline_dt", cfg.rot_spline_dt);
    cfg.scale_spline_dt = j.value("scale_spline_dt", cfg.scale_spline_dt);
    cfg.timepiece = j.value("timepiece", cfg.timepiece);
    cfg.max_offset = j.value("max_offset", cfg.max_offset);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.estimate_imu_intrinsics = j.value("estimate_imu_intrinsics", false);
    if (j.contains("noise")) {
      const json &n = j["noise"];
      cfg.noise.sigma_accel = n.value("sigma_accel", 0.0);
      cfg.noise.sigma_gyro = n.value("sigma_gyro", 0.0);
      cfg.noise.sigma_doppler = n.value("sigma_doppler", 0.0);
      cfg.noise.sigma_radar_pos = n.value("sigma_radar_pos", 0.0);
      cfg.noise.sigma_lidar = n.value("sigma_lidar", 0.0);
      cfg.noise.sigma_pixel = n.value("sigma_pixel", 0.0);
      cfg.noise.sigma_odom_rot = n.value("sigma_odom_rot", 0.0);
      cfg.noise.sigma_odom_pos = n.value("sigma_odom_pos", 0.0);
      cfg.noise.outlier_fraction = n.value("outlier_fraction", 0.0);
    }
    if (j.contains("sim")) {
      const json &s = j["sim"];
      cfg.sim.duration = s.value("duration", cfg.sim.duration);
      cfg.sim.angular_amplitude = s.value("angular_amplitude", cfg.sim.angular_amplitude);
      cfg.sim.linear_amplitude = s.value("linear_amplitude", cfg.sim.linear_amplitude);
      cfg.sim.base_frequency = s.value("base_frequency", cfg.sim.base_frequency);
      cfg.sim.offset_range = s.value("offset_range", cfg.sim.offset_range);
      cfg.sim.readout_time = s.value("readout_time", cfg.sim.readout_time);
      cfg.sim.landmark_count = s.value("landmark_count", cfg.sim.landmark_count);
    }
    for (const json &sj : j.at("sensors")) {
      SensorConfig s;
      s.kind = KindFromName(sj.at("kind").get<std::string>());
      s.name = sj.at("name").get<std::string>();
      s.rate = sj.at("rate").get<double>();
      s.targets_per_scan = sj.value("targets_per_scan", s.targets_per_scan);
      s.points_per_scan = sj.value("points_per_scan", s.points_per_scan);
      if (sj.contains("intrinsics")) {
        if (s.kind == SensorKind::kImu) s.imu_intrinsics = ImuIntrinsicsFromJson(sj["intrinsics"]);
        if (s.kind == SensorKind::kCamera) {
          s.camera_intrinsics = CameraIntrinsicsFromJson(sj["intrinsics"]);
        }
      } else if (s.kind == SensorKind::kCamera) {
        throw ConfigError("camera '" + s.name + "' needs intrinsics");
      }
      cfg.sensors.push_back(std::move(s));
    }
  } catch (const json::exception &e) {
    throw ConfigError(std::string("rig config field error: ") + e.what());
  }
  cfg.Validate();
  return cfg;
}

RigConfig RigConfigFromJsonFile(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open rig config '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return RigConfigFromJsonText(buf.str());
}

std::string RigConfigToJsonText(const RigConfig &cfg) {
  json j;
  j["reference_imu"] = cfg.reference_imu;
  j["gravity_magnitude"] = cfg.gravity_magnitude;
  j["rot_spline_dt"] = cfg.rot_spline_dt;
  j["scale_spline_dt"] = cfg.scale_spline_dt;
  j["timepiece"] = cfg.timepiece;
  j["max_offset"] = cfg.max_offset;
  j["seed"] = cfg.seed;
  j["estimate_imu_intrinsics"] = cfg.estimate_imu_intrinsics;
  j["noise"] = {{"sigma_accel", cfg.noise.sigma_accel},
                {"sigma_gyro", cfg.noise.sigma_gyro},
                {"sigma_doppler", cfg.noise.sigma_doppler},
                {"sigma_radar_pos", cfg.noise.sigma_radar_pos},
                {"sigma_lidar", cfg.noise.sigma_lidar},
                {"sigma_pixel", cfg.noise.sigma_pixel},
                {"sigma_odom_rot", cfg.noise.sigma_odom_rot},
                {"sigma_odom_pos", cfg.noise.sigma_odom_pos},
                {"outlier_fraction", cfg.noise.outlier_fraction}};
  j["sim"] = {{"duration", cfg.sim.duration},
              {"angular_amplitude", cfg.sim.angular_amplitude},
              {"linear_amplitude", cfg.sim.linear_amplitude},
              {"base_frequency", cfg.sim.base_frequency},
              {"offset_range", cfg.sim.offset_range},
              {"readout_time", cfg.sim.readout_time},
              {"landmark_count", cfg.sim.landmark_count}};
  j["sensors"] = json::array();
  for (const auto &s : cfg.sensors) {
    json sj = {{"kind", KindName(s.kind)}, {"name", s.name}, {"rate", s.rate}};
    if (s.kind == SensorKind::kRadar) sj["targets_per_scan"] = s.targets_per_scan;
    if (s.kind == SensorKind::kLidar) sj["points_per_scan"] = s.points_per_scan;
    if (s.kind == SensorKind::kImu) sj["intrinsics"] = ImuIntrinsicsToJson(s.imu_intrinsics);
    if (s.kind == SensorKind::kCamera) {
      sj["intrinsics"] = CameraIntrinsicsToJson(s.camera_intrinsics);
    }
    j["sensors"].push_back(sj);
  }
  return j.dump(2);
}

}  // namespace sical
