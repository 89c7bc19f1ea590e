#pragma once

// Ways of turning a trained ensemble into predictions: pick the best member
// using evaluation labels (oracle), average member logits, or average member
// weights (uniform soup).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "sed/data.hpp"
#include "sed/heads.hpp"
#include "sed/prediction_matrix.hpp"

namespace sed {

enum class Strategy { oracle, prediction_ensemble, uniform_soup };

std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view name);

struct AggregationResult {
  Strategy strategy = Strategy::prediction_ensemble;
  std::vector<std::uint32_t> predictions;
  std::optional<std::size_t> chosen_member;  // oracle only
};

struct OracleChoice {
  std::size_t member = 0;
  double accuracy = 0.0;
};

// Member with the highest accuracy on `labels` (lowest index on ties).
// Uses the evaluation labels by construction.
OracleChoice oracle_select(const PredictionMatrix& pm, std::span<const std::uint32_t> labels);
OracleChoice oracle_select(std::span<const HeadParams> heads, const FeatureDataset& labelled);

// Row-wise mean of member logits, (n, C) row-major.
std::vector<double> prediction_ensemble_logits(const PredictionMatrix& pm);
std::vector<double> prediction_ensemble_logits(std::span<const HeadParams> heads,
                                               const FeatureDataset& ds);

// argmax (lowest index on ties) of each C-wide row.
std::vector<std::uint32_t> argmax_rows(std::span<const double> values, std::size_t classes);

// Argmax predictions of a single member.
std::vector<std::uint32_t> member_predictions(const PredictionMatrix& pm, std::size_t member);

// Parameter-wise arithmetic mean of all members.
HeadParams uniform_soup(std::span<const HeadParams> heads);

std::vector<std::uint32_t> predict(const HeadParams& head, const FeatureDataset& ds);

AggregationResult aggregate(Strategy strategy, std::span<const HeadParams> heads,
                            const FeatureDataset& ds);

}  // namespace sed
