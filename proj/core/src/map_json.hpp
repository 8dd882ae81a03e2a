#pragma once

#include <nlohmann/json.hpp>

#include "tmeig/transport.hpp"

namespace tmeig::detail {

nlohmann::json map_to_json(const BlockTriangularMap& map);
BlockTriangularMap map_from_json(const nlohmann::json& j);

}  // namespace tmeig::detail
