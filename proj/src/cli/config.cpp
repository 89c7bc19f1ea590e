#include <charconv>
#include <cstdlib>
#include <fstream>
#include <limits>

#include "sed/cli.hpp"
#include "sed/config.hpp"
#include "sed/error.hpp"

namespace sed::cli {

namespace {

constexpr const char* kTrainKeys[] = {"members",          "epochs",
                                      "batch_size",       "learning_rate",
                                      "weight_decay",     "lambda",
                                      "pair_subset_size", "mode",
                                      "seed",             "two_stage_threshold",
                                      "ood_dataset_path", "head"};

bool is_train_key(const std::string& key) {
  for (const char* k : kTrainKeys) {
    if (key == k) return true;
  }
  return false;
}

std::vector<std::string_view> split_commas(std::string_view text) {
  std::vector<std::string_view> out;
  while (true) {
    const auto comma = text.find(',');
    out.push_back(text.substr(0, comma));
    if (comma == std::string_view::npos) break;
    text = text.substr(comma + 1);
  }
  return out;
}

std::string string_at(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
  const auto& v = j.at(key);
  if (!v.is_string()) throw ConfigError(where + "." + key + ": expected a string");
  return v.get<std::string>();
}

std::vector<std::string> string_list(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_array()) throw ConfigError(std::string(key) + ": expected an array of strings");
  std::vector<std::string> out;
  for (const auto& item : v) {
    if (!item.is_string()) throw ConfigError(std::string(key) + ": expected an array of strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

}  // namespace

EvalSetSpec parse_eval_set(std::string_view text) {
  const auto first = text.find(':');
  if (first == std::string_view::npos || first == 0) {
    throw ConfigError("dataset spec '" + std::string(text) + "' must be name:tag[:path]");
  }
  EvalSetSpec spec;
  spec.name = std::string(text.substr(0, first));
  const std::string_view rest = text.substr(first + 1);
  const auto second = rest.find(':');
  spec.tag = dataset_tag_from_string(rest.substr(0, second));
  if (second != std::string_view::npos) {
    const std::string_view path = rest.substr(second + 1);
    if (path.empty()) throw ConfigError("dataset spec '" + std::string(text) + "' has an empty path");
    spec.path = std::string(path);
  }
  return spec;
}

std::vector<ScoreId> parse_score_list(std::string_view csv) {
  if (csv == "all") return all_scores();
  std::vector<ScoreId> out;
  for (auto item : split_commas(csv)) out.push_back(score_from_string(item));
  return out;
}

std::vector<Strategy> parse_strategy_list(std::string_view csv) {
  std::vector<Strategy> out;
  for (auto item : split_commas(csv)) out.push_back(strategy_from_string(item));
  return out;
}

CliConfig cli_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  nlohmann::json train = nlohmann::json::object();
  CliConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (is_train_key(key)) {
      train[key] = value;
    } else if (key == "train_data") {
      cfg.train_data = string_at(j, "train_data", "config");
    } else if (key == "out_dir") {
      cfg.out_dir = string_at(j, "out_dir", "config");
    } else if (key == "eval_datasets") {
      if (!value.is_array()) throw ConfigError("config.eval_datasets: expected an array");
      for (const auto& item : value) {
        const std::string where = "config.eval_datasets[]";
        reject_unknown_keys(item, {"name", "tag", "path"}, where);
        EvalSetSpec spec;
        spec.name = string_at(item, "name", where);
        if (spec.name.empty()) throw ConfigError(where + ".name: must not be empty");
        spec.tag = dataset_tag_from_string(string_at(item, "tag", where));
        if (item.contains("path")) spec.path = string_at(item, "path", where);
        cfg.eval_datasets.push_back(std::move(spec));
      }
    } else if (key == "scores") {
      cfg.scores.clear();
      for (const auto& s : string_list(j, "scores")) cfg.scores.push_back(score_from_string(s));
    } else if (key == "strategies") {
      cfg.strategies.clear();
      for (const auto& s : string_list(j, "strategies")) {
        cfg.strategies.push_back(strategy_from_string(s));
      }
    } else if (key == "csv_classes") {
      if (!value.is_number_integer() || value.get<std::int64_t>() < 0 ||
          value.get<std::int64_t>() > std::numeric_limits<std::uint32_t>::max()) {
        throw ConfigError("config.csv_classes: expected a non-negative integer");
      }
      cfg.csv_classes = value.get<std::uint32_t>();
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
  cfg.train = train_config_from_json(train, "config");
  return cfg;
}

nlohmann::json cli_config_to_json(const CliConfig& cfg) {
  nlohmann::json j = train_config_to_json(cfg.train);
  if (cfg.train_data) j["train_data"] = *cfg.train_data;
  if (cfg.out_dir) j["out_dir"] = *cfg.out_dir;
  j["eval_datasets"] = nlohmann::json::array();
  for (const auto& e : cfg.eval_datasets) {
    nlohmann::json item = {{"name", e.name}, {"tag", to_string(e.tag)}};
    if (e.path) item["path"] = *e.path;
    j["eval_datasets"].push_back(std::move(item));
  }
  j["scores"] = nlohmann::json::array();
  for (auto s : cfg.scores) j["scores"].push_back(to_string(s));
  j["strategies"] = nlohmann::json::array();
  for (auto s : cfg.strategies) j["strategies"].push_back(to_string(s));
  j["csv_classes"] = cfg.csv_classes;
  return j;
}

CliConfig load_cli_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return cli_config_from_json(j);
}

std::size_t default_threads() {
  const char* env = std::getenv("SED_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  const std::string_view text(env);
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || value == 0) {
    throw ConfigError("SED_THREADS must be a positive integer, got '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace sed::cli
