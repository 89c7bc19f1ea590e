#pragma once

// Per-sample OODness scores computed from a materialised PredictionMatrix.
// Every score has a fixed orientation so downstream AUROC code never needs a
// sign flag.

#include <string>
#include <string_view>
#include <vector>

#include "sed/prediction_matrix.hpp"

namespace sed {

enum class Orientation { higher_is_ood, higher_is_id };

enum class ScoreId {
  pds,
  bma,
  unique,
  avg_energy,
  avg_entropy,
  ens_entropy,
  mutual_information,
  avg_max_prob,
  a2d,
};

std::string_view to_string(ScoreId id);
ScoreId score_from_string(std::string_view name);
Orientation orientation_of(ScoreId id);
const std::vector<ScoreId>& all_scores();

struct ScoreVector {
  ScoreId id = ScoreId::pds;
  std::vector<double> values;
  Orientation orientation = Orientation::higher_is_ood;
};

// max_c mean_m p^m_c
ScoreVector score_bma(const PredictionMatrix& pm);
// mean_c max_m p^m_c; in [1/C, min(M, C)/C].
ScoreVector score_pds(const PredictionMatrix& pm);
// Number of distinct member argmax classes.
ScoreVector count_unique(const PredictionMatrix& pm);
// mean_m -logsumexp(z^m)
ScoreVector score_avg_energy(const PredictionMatrix& pm);
ScoreVector score_avg_entropy(const PredictionMatrix& pm);
ScoreVector score_ens_entropy(const PredictionMatrix& pm);
// Ensemble entropy minus average entropy.
ScoreVector score_mutual_information(const PredictionMatrix& pm);
ScoreVector score_avg_max_prob(const PredictionMatrix& pm);
// Negated mean pairwise A2D (lower-index reference, same clamp as training).
// Requires at least two members.
ScoreVector score_a2d(const PredictionMatrix& pm);

ScoreVector compute_score(ScoreId id, const PredictionMatrix& pm);

}  // namespace sed
