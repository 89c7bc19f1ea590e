#pragma once

// Command-line front end. `run_cli` is the whole program minus `main`, so
// tests can drive it in-process.
//
// Exit codes: 0 ok, 2 usage/config (including missing input files),
// 3 numerical failure, 4 I/O or parse failure.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sed/aggregate.hpp"
#include "sed/eval.hpp"
#include "sed/trainer.hpp"
#include "sed/uncertainty.hpp"

namespace sed::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitIo = 4;

struct EvalSetSpec {
  std::string name;
  DatasetTag tag = DatasetTag::id;
  // Optional only when predictions are read from a directory; then the set is
  // evaluated without labels.
  std::optional<std::string> path;

  friend bool operator==(const EvalSetSpec&, const EvalSetSpec&) = default;
};

// "name:tag" or "name:tag:path". Throws ConfigError.
EvalSetSpec parse_eval_set(std::string_view text);

// The JSON config file: every TrainConfig key at top level plus the keys
// below. Unknown keys are rejected.
//   train_data     training set path (sedf or csv)
//   out_dir        output directory
//   eval_datasets  [{"name", "tag", "path"}]
//   scores         score names, default all
//   strategies     strategy names, default prediction_ensemble + uniform_soup
//   csv_classes    class count for CSV input, 0 = infer
struct CliConfig {
  TrainConfig train;
  std::optional<std::string> train_data;
  std::optional<std::string> out_dir;
  std::vector<EvalSetSpec> eval_datasets;
  std::vector<ScoreId> scores = all_scores();
  std::vector<Strategy> strategies = {Strategy::prediction_ensemble, Strategy::uniform_soup};
  std::uint32_t csv_classes = 0;

  friend bool operator==(const CliConfig&, const CliConfig&) = default;
};

CliConfig cli_config_from_json(const nlohmann::json& j);
nlohmann::json cli_config_to_json(const CliConfig& cfg);
CliConfig load_cli_config(const std::filesystem::path& path);

std::vector<ScoreId> parse_score_list(std::string_view csv);
std::vector<Strategy> parse_strategy_list(std::string_view csv);

// Thread count from SED_THREADS, or 1 when unset. Throws ConfigError on a
// malformed value.
std::size_t default_threads();

inline constexpr std::string_view kOracleWarning =
    "WARNING: oracle selection picks the member with the best accuracy on the evaluation "
    "labels themselves; its numbers are an upper bound, not a deployable result.";

int run_cli(int argc, const char* const* argv);

}  // namespace sed::cli
