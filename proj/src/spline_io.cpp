#include "sical/spline_io.hpp"

namespace sical {

using nlohmann::json;

json ToJson(const R3Spline &spline) {
  json knots = json::array();
  for (const auto &k : spline.knots()) knots.push_back({k.x(), k.y(), k.z()});
  return {{"start_time", spline.grid().start_time},
          {"dt", spline.grid().dt},
          {"knots", std::move(knots)}};
}

json ToJson(const So3Spline &spline) {
  json knots = json::array();
  for (const auto &q : spline.knots()) knots.push_back({q.w(), q.x(), q.y(), q.z()});
  return {{"start_time", spline.grid().start_time},
          {"dt", spline.grid().dt},
          {"knots", std::move(knots)}};
}

static KnotGrid GridFromJson(const json &j) {
  KnotGrid grid;
  grid.start_time = j.at("start_time").get<double>();
  grid.dt = j.at("dt").get<double>();
  grid.count = static_cast<int>(j.at("knots").size());
  return grid;
}

R3Spline R3SplineFromJson(const json &j) {
  std::vector<Vec3> knots;
  for (const auto &k : j.at("knots")) knots.emplace_back(k[0], k[1], k[2]);
  return R3Spline(GridFromJson(j), std::move(knots));
}

So3Spline So3SplineFromJson(const json &j) {
  std::vector<Quat> knots;
  for (const auto &k : j.at("knots")) {
    Quat q(k[0], k[1], k[2], k[3]);
    knots.push_back(q.normalized());
  }
  return So3Spline(GridFromJson(j), std::move(knots));
}

}  // namespace sical
