#pragma once

#include <json.hpp>

#include "sical/spline.hpp"

namespace sical {

nlohmann::json ToJson(const R3Spline &spline);
nlohmann::json ToJson(const So3Spline &spline);

R3Spline R3SplineFromJson(const nlohmann::json &j);
So3Spline So3SplineFromJson(const nlohmann::json &j);

}  // namespace sical
