#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sed/aggregate.hpp"
#include "sed/data.hpp"
#include "sed/trainer.hpp"
#include "sed/uncertainty.hpp"

namespace sed {

double accuracy(std::span<const std::uint32_t> preds, std::span<const std::uint32_t> labels);

// Minimum accuracy over the groups that occur in `groups`.
double worst_group_accuracy(std::span<const std::uint32_t> preds,
                            std::span<const std::uint32_t> labels,
                            std::span<const std::uint32_t> groups);

struct DetectionTask {
  std::vector<double> id_scores;
  std::vector<double> ood_scores;
  Orientation orientation = Orientation::higher_is_ood;
};

// Mann-Whitney AUROC: P(ood > id) + 0.5 P(ood == id) after orienting the
// scores so that higher means more OOD. O(n log n) via tied ranks.
double auroc(const DetectionTask& task);

enum class DatasetTag { id, ood_covariate, ood_semantic };
std::string_view to_string(DatasetTag tag);
DatasetTag dataset_tag_from_string(std::string_view name);

// Everything the report needs about one evaluation set.
struct EvalInput {
  std::string name;
  DatasetTag tag = DatasetTag::id;
  PredictionMatrix predictions;
  std::optional<std::vector<std::uint32_t>> labels;
  std::optional<std::vector<std::uint32_t>> groups;
  // Predictions of the weight-averaged model; absent when only saved
  // prediction matrices (no weights) are available.
  std::optional<std::vector<std::uint32_t>> soup_predictions;
};

EvalInput make_eval_input(std::span<const HeadParams> heads, std::string name, DatasetTag tag,
                          const FeatureDataset& ds, bool with_soup, std::size_t threads = 1);

struct StrategyMetrics {
  Strategy strategy = Strategy::prediction_ensemble;
  double accuracy = 0.0;
  std::optional<double> worst_group_accuracy;
  std::optional<std::size_t> chosen_member;
};

struct DatasetReport {
  std::string name;
  DatasetTag tag = DatasetTag::id;
  std::size_t n = 0;
  std::vector<StrategyMetrics> strategies;  // empty for unlabelled sets
  double mean_unique = 0.0;
  double mean_pds = 0.0;
};

struct ScoreAuroc {
  ScoreId score = ScoreId::pds;
  double auroc = 0.5;
};

struct DetectionReport {
  std::string ood_name;
  std::string id_name;
  std::vector<ScoreAuroc> aurocs;
};

struct Report {
  std::vector<DatasetReport> datasets;
  std::vector<DetectionReport> detection;
  nlohmann::json config;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

// AUROCs compare every OOD-tagged set against the first id-tagged set.
Report evaluate(std::span<const EvalInput> inputs, std::span<const Strategy> strategies,
                std::span<const ScoreId> scores, nlohmann::json config_echo = {});

struct EvalDataset {
  std::string name;
  DatasetTag tag = DatasetTag::id;
  const FeatureDataset* data = nullptr;
};

enum class SweepParam { lambda, members };
std::string_view to_string(SweepParam p);

struct SweepSpec {
  SweepParam param = SweepParam::lambda;
  std::vector<double> values;
  // Shared by every grid point so comparisons are paired.
  std::vector<std::uint64_t> seeds;
};

// Parses "lambda=0,0.1,1" or "members=2,5". Throws ConfigError.
SweepSpec parse_sweep_grid(std::string_view grid);

struct SweepResult {
  SweepParam param = SweepParam::lambda;
  // Numeric columns; the CSV prepends a textual "param" column.
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;  // one per grid value, seed-averaged
  std::vector<Report> reports;            // one per (grid value, seed)

  std::string to_csv() const;
};

SweepResult sweep(const SweepSpec& spec, const TrainConfig& base, const FeatureDataset& train_ds,
                  const FeatureDataset* ood_train, std::span<const EvalDataset> eval_sets,
                  std::span<const Strategy> strategies, std::span<const ScoreId> scores,
                  std::size_t threads = 1);

}  // namespace sed
