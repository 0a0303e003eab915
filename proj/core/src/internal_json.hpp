#pragma once

// Private JSON converters shared by the core translation units; nlohmann
// types never appear in installed headers.

#include <nlohmann/json.hpp>

#include "floodcast/model.hpp"

namespace floodcast::model {

nlohmann::ordered_json arch_to_json(const ArchConfig& config);
ArchConfig arch_from_json(const nlohmann::json& doc);

nlohmann::ordered_json scaler_to_json(const features::Scaler& scaler);
features::Scaler scaler_from_json(const nlohmann::json& doc);

}  // namespace floodcast::model
