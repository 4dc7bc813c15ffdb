#include "sical/measurements.hpp"

#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace sical {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json Vec3Json(const Vec3 &v) { return {v.x(), v.y(), v.z()}; }

Vec3 Vec3At(const json &j, const char *key) {
  const json &a = j.at(key);
  if (!a.is_array() || a.size() != 3) throw json::type_error::create(302, "expected [3] array", &a);
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

class JsonlWriter {
 public:
  explicit JsonlWriter(const fs::path &path) : out_(path) {
    if (!out_) throw ConfigError("cannot open '" + path.string() + "' for writing");
  }
  void Line(const json &j) { out_ << j.dump() << "\n"; }

 private:
  std::ofstream out_;
};

/// Parses a JSONL file line by line, reporting the 1-based line number of the
/// first malformed record.
template <typename Fn>
void ReadJsonl(const fs::path &path, Fn &&per_line) {
  std::ifstream in(path);
  if (!in) throw ConfigError("missing measurement file '" + path.string() + "'");
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      per_line(json::parse(line));
    } catch (const json::exception &e) {
      throw ConfigError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ConfigError &e) {
      throw ConfigError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void CheckMonotone(const std::vector<double> &stamps, const fs::path &path) {
  for (size_t i = 1; i < stamps.size(); ++i) {
    if (stamps[i] < stamps[i - 1]) {
      throw ConfigError(path.string() + ": non-monotone stamp at record " + std::to_string(i + 1));
    }
  }
}

}  // namespace

void WriteMeasurements(const std::string &dir, const RigConfig &config,
                       const MeasurementSet &data) {
  fs::create_directories(dir);
  for (const auto &sensor : config.sensors) {
    const fs::path base = fs::path(dir) / (sensor.name + ".jsonl");
    switch (sensor.kind) {
      case SensorKind::kImu: {
        JsonlWriter w(base);
        for (const auto &m : data.imu.at(sensor.name)) {
          w.Line({{"t", m.t}, {"a", Vec3Json(m.accel)}, {"w", Vec3Json(m.gyro)}});
        }
        break;
      }
      case SensorKind::kRadar: {
        JsonlWriter w(base);
        for (const auto &scan : data.radar.at(sensor.name)) {
          for (const auto &tgt : scan) {
            w.Line({{"t", tgt.t}, {"p", Vec3Json(tgt.position)}, {"v", tgt.doppler}});
          }
        }
        break;
      }
      case SensorKind::kLidar: {
        JsonlWriter w(base);
        for (const auto &pt : data.lidar.at(sensor.name)) {
          w.Line({{"t", pt.t}, {"p", Vec3Json(pt.position)}, {"scan", pt.scan}});
        }
        break;
      }
      case SensorKind::kCamera: {
        JsonlWriter w(base);
        for (const auto &obs : data.camera.at(sensor.name)) {
          w.Line({{"t", obs.t_frame},
                  {"lm", obs.landmark_id},
                  {"uv", {obs.pixel.x(), obs.pixel.y()}}});
        }
        JsonlWriter lw(fs::path(dir) / (sensor.name + "_landmarks.jsonl"));
        for (const auto &[id, p] : data.sfm_landmarks.at(sensor.name)) {
          lw.Line({{"id", id}, {"p", Vec3Json(p)}});
        }
        break;
      }
    }
    if (sensor.kind == SensorKind::kLidar || sensor.kind == SensorKind::kCamera) {
      JsonlWriter w(fs::path(dir) / (sensor.name + "_odom.jsonl"));
      for (const auto &pose : data.odometry.at(sensor.name)) {
        w.Line({{"t", pose.t},
                {"q", {pose.q.w(), pose.q.x(), pose.q.y(), pose.q.z()}},
                {"p", Vec3Json(pose.p)}});
      }
    }
  }
}

MeasurementSet LoadMeasurements(const std::string &dir, const RigConfig &config) {
  MeasurementSet data;
  for (const auto &sensor : config.sensors) {
    const fs::path base = fs::path(dir) / (sensor.name + ".jsonl");
    std::vector<double> stamps;
    switch (sensor.kind) {
      case SensorKind::kImu: {
        auto &stream = data.imu[sensor.name];
        ReadJsonl(base, [&](const json &j) {
          stream.push_back({j.at("t").get<double>(), Vec3At(j, "a"), Vec3At(j, "w")});
          stamps.push_back(stream.back().t);
        });
        break;
      }
      case SensorKind::kRadar: {
        auto &scans = data.radar[sensor.name];
        ReadJsonl(base, [&](const json &j) {
          RadarTarget tgt{j.at("t").get<double>(), Vec3At(j, "p"), j.at("v").get<double>()};
          if (scans.empty() || scans.back().front().t != tgt.t) scans.emplace_back();
          scans.back().push_back(tgt);
          stamps.push_back(tgt.t);
        });
        break;
      }
      case SensorKind::kLidar: {
        auto &stream = data.lidar[sensor.name];
        ReadJsonl(base, [&](const json &j) {
          stream.push_back({j.at("t").get<double>(), Vec3At(j, "p"), j.at("scan").get<int>()});
          stamps.push_back(stream.back().t);
        });
        break;
      }
      case SensorKind::kCamera: {
        auto &stream = data.camera[sensor.name];
        ReadJsonl(base, [&](const json &j) {
          const json &uv = j.at("uv");
          stream.push_back({j.at("t").get<double>(), j.at("lm").get<std::int64_t>(),
                            Vec2(uv.at(0).get<double>(), uv.at(1).get<double>())});
          stamps.push_back(stream.back().t_frame);
        });
        auto &lms = data.sfm_landmarks[sensor.name];
        ReadJsonl(fs::path(dir) / (sensor.name + "_landmarks.jsonl"), [&](const json &j) {
          lms[j.at("id").get<std::int64_t>()] = Vec3At(j, "p");
        });
        break;
      }
    }
    if (stamps.empty()) throw ConfigError("no data for configured sensor '" + sensor.name + "'");
    CheckMonotone(stamps, base);
    if (sensor.kind == SensorKind::kLidar || sensor.kind == SensorKind::kCamera) {
      const fs::path odom_path = fs::path(dir) / (sensor.name + "_odom.jsonl");
      auto &poses = data.odometry[sensor.name];
      std::vector<double> odom_stamps;
      ReadJsonl(odom_path, [&](const json &j) {
        const json &q = j.at("q");
        OdomPose pose;
        pose.t = j.at("t").get<double>();
        pose.q = Quat(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(),
                      q.at(3).get<double>());
        pose.q.normalize();
        pose.p = Vec3At(j, "p");
        poses.push_back(pose);
        odom_stamps.push_back(pose.t);
      });
      CheckMonotone(odom_stamps, odom_path);
    }
  }
  return data;
}

}  // namespace sical
