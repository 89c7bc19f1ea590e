#include "sed/config.hpp"

#include <algorithm>
#include <cstring>

#include "sed/error.hpp"

namespace sed {

void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* k) { return key == k; });
    if (!known) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

namespace {

template <typename T>
void read_number(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
    out = v.get<T>();
  } else {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      throw ConfigError(where + "." + key + ": expected a non-negative integer");
    }
    out = v.get<T>();
  }
}

std::string read_string(const nlohmann::json& j, const char* key, const std::string& where) {
  const auto& v = j.at(key);
  if (!v.is_string()) throw ConfigError(where + "." + key + ": expected a string");
  return v.get<std::string>();
}

}  // namespace

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  nlohmann::json j;
  j["members"] = cfg.num_members;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["learning_rate"] = cfg.learning_rate;
  j["weight_decay"] = cfg.weight_decay;
  j["lambda"] = cfg.lambda;
  j["pair_subset_size"] = cfg.pair_subset_size;
  j["mode"] = to_string(cfg.mode);
  j["seed"] = cfg.seed;
  j["two_stage_threshold"] = cfg.two_stage_threshold;
  if (cfg.ood_dataset_path) j["ood_dataset_path"] = *cfg.ood_dataset_path;
  j["head"] = {{"depth", cfg.head.depth},
               {"hidden_dim", cfg.head.hidden_dim},
               {"activation", to_string(cfg.head.activation)}};
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& where) {
  reject_unknown_keys(j,
                      {"members", "epochs", "batch_size", "learning_rate", "weight_decay",
                       "lambda", "pair_subset_size", "mode", "seed", "two_stage_threshold",
                       "ood_dataset_path", "head"},
                      where);
  TrainConfig cfg;
  read_number(j, "members", cfg.num_members, where);
  read_number(j, "epochs", cfg.epochs, where);
  read_number(j, "batch_size", cfg.batch_size, where);
  read_number(j, "learning_rate", cfg.learning_rate, where);
  read_number(j, "weight_decay", cfg.weight_decay, where);
  read_number(j, "lambda", cfg.lambda, where);
  read_number(j, "pair_subset_size", cfg.pair_subset_size, where);
  read_number(j, "seed", cfg.seed, where);
  read_number(j, "two_stage_threshold", cfg.two_stage_threshold, where);
  if (j.contains("mode")) cfg.mode = train_mode_from_string(read_string(j, "mode", where));
  if (j.contains("ood_dataset_path")) {
    if (j.at("ood_dataset_path").is_null()) {
      cfg.ood_dataset_path.reset();
    } else {
      cfg.ood_dataset_path = read_string(j, "ood_dataset_path", where);
    }
  }
  if (j.contains("head")) {
    const auto& h = j.at("head");
    const std::string hw = where + ".head";
    reject_unknown_keys(h, {"depth", "hidden_dim", "activation"}, hw);
    std::uint32_t depth = static_cast<std::uint32_t>(cfg.head.depth);
    read_number(h, "depth", depth, hw);
    cfg.head.depth = static_cast<int>(depth);
    read_number(h, "hidden_dim", cfg.head.hidden_dim, hw);
    if (h.contains("activation")) {
      try {
        cfg.head.activation = activation_from_string(read_string(h, "activation", hw));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(hw + ": " + e.what());
      }
    }
  }
  cfg.validate();
  return cfg;
}

}  // namespace sed
