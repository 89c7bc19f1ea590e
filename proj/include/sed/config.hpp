#pragma once

// JSON (de)serialisation of TrainConfig. Parsing is strict: unknown keys and
// wrongly typed values raise ConfigError naming the offending key.

#include <string>

#include <json.hpp>

#include "sed/trainer.hpp"

namespace sed {

nlohmann::json train_config_to_json(const TrainConfig& cfg);

// Missing keys keep their TrainConfig defaults. `where` prefixes error
// messages (e.g. "train").
TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& where = "train");

// Throws ConfigError if `j` is not an object or holds a key outside `allowed`.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                         const std::string& where);

}  // namespace sed
