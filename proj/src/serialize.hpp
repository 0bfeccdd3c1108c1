#pragma once

// Internal JSON conversion helpers shared by checkpoints and the CLI.

#include "json.hpp"
#include "rangecast/model_zoo.hpp"

namespace rangecast::zoo {

nlohmann::json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::json& j);

nlohmann::json train_config_to_json(const neural::TrainConfig& cfg);
neural::TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace rangecast::zoo
