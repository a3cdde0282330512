#pragma once

#include <json.hpp>

#include "darlr/dataset.hpp"
#include "darlr/engine.hpp"
#include "darlr/world_model.hpp"

namespace darlr {

// JSON mappings. Readers start from the defaults, override the keys that
// are present and reject any key they do not know.
nlohmann::json to_json(const EngineConfig& cfg);
EngineConfig engine_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const WorldModelConfig& cfg);
WorldModelConfig world_model_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);

}  // namespace darlr
