#include "sed/uncertainty.hpp"

#include <algorithm>
#include <stdexcept>

#include "sed/core_math.hpp"
#include "sed/objective.hpp"

namespace sed {

std::string_view to_string(ScoreId id) {
  switch (id) {
    case ScoreId::pds: return "pds";
    case ScoreId::bma: return "bma";
    case ScoreId::unique: return "unique";
    case ScoreId::avg_energy: return "avg_energy";
    case ScoreId::avg_entropy: return "avg_entropy";
    case ScoreId::ens_entropy: return "ens_entropy";
    case ScoreId::mutual_information: return "mutual_information";
    case ScoreId::avg_max_prob: return "avg_max_prob";
    case ScoreId::a2d: return "a2d";
  }
  return "pds";
}

const std::vector<ScoreId>& all_scores() {
  static const std::vector<ScoreId> ids = {
      ScoreId::pds,         ScoreId::bma,         ScoreId::unique,
      ScoreId::avg_energy,  ScoreId::avg_entropy, ScoreId::ens_entropy,
      ScoreId::mutual_information, ScoreId::avg_max_prob, ScoreId::a2d};
  return ids;
}

ScoreId score_from_string(std::string_view name) {
  for (ScoreId id : all_scores()) {
    if (to_string(id) == name) return id;
  }
  throw std::invalid_argument("unknown score '" + std::string(name) + "'");
}

Orientation orientation_of(ScoreId id) {
  switch (id) {
    case ScoreId::bma:
    case ScoreId::avg_max_prob:
      return Orientation::higher_is_id;
    default:
      return Orientation::higher_is_ood;
  }
}

namespace {

template <typename RowFn>
ScoreVector row_score(ScoreId id, const PredictionMatrix& pm, RowFn&& fn) {
  ScoreVector out;
  out.id = id;
  out.orientation = orientation_of(id);
  out.values.resize(pm.rows());
  for (std::size_t i = 0; i < pm.rows(); ++i) out.values[i] = fn(i);
  return out;
}

std::vector<double> mean_probs(const PredictionMatrix& pm, std::size_t row) {
  std::vector<double> mean(pm.classes(), 0.0);
  for (std::size_t m = 0; m < pm.members(); ++m) {
    const auto p = pm.member_probs(row, m);
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += p[k];
  }
  for (double& v : mean) v /= static_cast<double>(pm.members());
  return mean;
}

double avg_entropy_row(const PredictionMatrix& pm, std::size_t row) {
  double total = 0.0;
  for (std::size_t m = 0; m < pm.members(); ++m) total += entropy(pm.member_probs(row, m));
  return total / static_cast<double>(pm.members());
}

}  // namespace

ScoreVector score_bma(const PredictionMatrix& pm) {
  return row_score(ScoreId::bma, pm, [&](std::size_t i) {
    const auto mean = mean_probs(pm, i);
    return *std::max_element(mean.begin(), mean.end());
  });
}

ScoreVector score_pds(const PredictionMatrix& pm) {
  return row_score(ScoreId::pds, pm, [&](std::size_t i) {
    double total = 0.0;
    for (std::size_t k = 0; k < pm.classes(); ++k) {
      double peak = 0.0;
      for (std::size_t m = 0; m < pm.members(); ++m) peak = std::max(peak, pm.member_probs(i, m)[k]);
      total += peak;
    }
    return total / static_cast<double>(pm.classes());
  });
}

ScoreVector count_unique(const PredictionMatrix& pm) {
  std::vector<char> seen(pm.classes());
  return row_score(ScoreId::unique, pm, [&](std::size_t i) {
    std::fill(seen.begin(), seen.end(), 0);
    double distinct = 0.0;
    for (std::size_t m = 0; m < pm.members(); ++m) {
      const std::size_t k = argmax_tiebreak_low(pm.member_probs(i, m));
      if (!seen[k]) {
        seen[k] = 1;
        distinct += 1.0;
      }
    }
    return distinct;
  });
}

ScoreVector score_avg_energy(const PredictionMatrix& pm) {
  return row_score(ScoreId::avg_energy, pm, [&](std::size_t i) {
    double total = 0.0;
    for (std::size_t m = 0; m < pm.members(); ++m) total -= log_sum_exp(pm.member_logits(i, m));
    return total / static_cast<double>(pm.members());
  });
}

ScoreVector score_avg_entropy(const PredictionMatrix& pm) {
  return row_score(ScoreId::avg_entropy, pm, [&](std::size_t i) { return avg_entropy_row(pm, i); });
}

ScoreVector score_ens_entropy(const PredictionMatrix& pm) {
  return row_score(ScoreId::ens_entropy, pm, [&](std::size_t i) { return entropy(mean_probs(pm, i)); });
}

ScoreVector score_mutual_information(const PredictionMatrix& pm) {
  return row_score(ScoreId::mutual_information, pm, [&](std::size_t i) {
    return entropy(mean_probs(pm, i)) - avg_entropy_row(pm, i);
  });
}

ScoreVector score_avg_max_prob(const PredictionMatrix& pm) {
  return row_score(ScoreId::avg_max_prob, pm, [&](std::size_t i) {
    double total = 0.0;
    for (std::size_t m = 0; m < pm.members(); ++m) {
      const auto p = pm.member_probs(i, m);
      total += *std::max_element(p.begin(), p.end());
    }
    return total / static_cast<double>(pm.members());
  });
}

ScoreVector score_a2d(const PredictionMatrix& pm) {
  if (pm.members() < 2) throw std::invalid_argument("A2D score needs at least two members");
  const std::size_t pairs = pm.members() * (pm.members() - 1) / 2;
  return row_score(ScoreId::a2d, pm, [&](std::size_t i) {
    double total = 0.0;
    for (std::size_t m = 0; m < pm.members(); ++m) {
      for (std::size_t l = m + 1; l < pm.members(); ++l) {
        total += a2d_pair(pm.member_probs(i, m), pm.member_probs(i, l)).value;
      }
    }
    return -total / static_cast<double>(pairs);
  });
}

ScoreVector compute_score(ScoreId id, const PredictionMatrix& pm) {
  switch (id) {
    case ScoreId::pds: return score_pds(pm);
    case ScoreId::bma: return score_bma(pm);
    case ScoreId::unique: return count_unique(pm);
    case ScoreId::avg_energy: return score_avg_energy(pm);
    case ScoreId::avg_entropy: return score_avg_entropy(pm);
    case ScoreId::ens_entropy: return score_ens_entropy(pm);
    case ScoreId::mutual_information: return score_mutual_information(pm);
    case ScoreId::avg_max_prob: return score_avg_max_prob(pm);
    case ScoreId::a2d: return score_a2d(pm);
  }
  throw std::invalid_argument("unknown score id");
}

}  // namespace sed
