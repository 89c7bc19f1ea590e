#include "sed/aggregate.hpp"

#include <stdexcept>
#include <string>

#include "sed/core_math.hpp"
#include "sed/trainer.hpp"

namespace sed {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::oracle:
      return "oracle";
    case Strategy::prediction_ensemble:
      return "prediction_ensemble";
    case Strategy::uniform_soup:
      return "uniform_soup";
  }
  return "prediction_ensemble";
}

Strategy strategy_from_string(std::string_view name) {
  if (name == "oracle") return Strategy::oracle;
  if (name == "prediction_ensemble") return Strategy::prediction_ensemble;
  if (name == "uniform_soup") return Strategy::uniform_soup;
  throw std::invalid_argument("unknown strategy '" + std::string(name) + "'");
}

std::vector<std::uint32_t> argmax_rows(std::span<const double> values, std::size_t classes) {
  if (classes == 0 || values.size() % classes != 0) {
    throw std::invalid_argument("argmax_rows: size not divisible by class count");
  }
  std::vector<std::uint32_t> out(values.size() / classes);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint32_t>(argmax_tiebreak_low(values.subspan(i * classes, classes)));
  }
  return out;
}

std::vector<std::uint32_t> member_predictions(const PredictionMatrix& pm, std::size_t member) {
  if (member >= pm.members()) throw std::invalid_argument("member index out of range");
  std::vector<std::uint32_t> out(pm.rows());
  for (std::size_t i = 0; i < pm.rows(); ++i) {
    out[i] = static_cast<std::uint32_t>(argmax_tiebreak_low(pm.member_logits(i, member)));
  }
  return out;
}

OracleChoice oracle_select(const PredictionMatrix& pm, std::span<const std::uint32_t> labels) {
  if (labels.size() != pm.rows()) throw std::invalid_argument("label count != prediction rows");
  if (pm.members() == 0 || pm.rows() == 0) throw std::invalid_argument("empty prediction matrix");
  OracleChoice best{0, -1.0};
  for (std::size_t m = 0; m < pm.members(); ++m) {
    const auto preds = member_predictions(pm, m);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[i] ? 1 : 0;
    const double acc = static_cast<double>(correct) / static_cast<double>(preds.size());
    if (acc > best.accuracy) best = {m, acc};
  }
  return best;
}

OracleChoice oracle_select(std::span<const HeadParams> heads, const FeatureDataset& labelled) {
  if (!labelled.has_labels()) throw std::invalid_argument("oracle selection needs a labelled set");
  return oracle_select(PredictionMatrix::from_logits(ensemble_logits(heads, labelled)),
                       *labelled.labels);
}

std::vector<double> prediction_ensemble_logits(const PredictionMatrix& pm) {
  const std::size_t c = pm.classes();
  std::vector<double> out(pm.rows() * c, 0.0);
  const double inv_m = 1.0 / static_cast<double>(pm.members());
  for (std::size_t i = 0; i < pm.rows(); ++i) {
    for (std::size_t m = 0; m < pm.members(); ++m) {
      const auto z = pm.member_logits(i, m);
      for (std::size_t k = 0; k < c; ++k) out[i * c + k] += z[k];
    }
    for (std::size_t k = 0; k < c; ++k) out[i * c + k] *= inv_m;
  }
  return out;
}

std::vector<double> prediction_ensemble_logits(std::span<const HeadParams> heads,
                                               const FeatureDataset& ds) {
  PredictionMatrix pm;
  pm.logits = ensemble_logits(heads, ds);
  return prediction_ensemble_logits(pm);
}

HeadParams uniform_soup(std::span<const HeadParams> heads) {
  if (heads.empty()) throw std::invalid_argument("uniform_soup of an empty ensemble");
  const HeadConfig& cfg = heads.front().config();
  HeadParams soup(cfg);
  auto mean = soup.values();
  // Running mean: identical members reproduce the member bit for bit.
  for (std::size_t k = 0; k < heads.size(); ++k) {
    const auto& h = heads[k];
    if (!h.config().same_shape(cfg)) throw std::invalid_argument("uniform_soup: member shapes differ");
    const auto v = h.values();
    const double count = static_cast<double>(k + 1);
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += (v[i] - mean[i]) / count;
  }
  return soup;
}

std::vector<std::uint32_t> predict(const HeadParams& head, const FeatureDataset& ds) {
  PredictionMatrix pm;
  pm.logits = ensemble_logits(std::span<const HeadParams>(&head, 1), ds);
  return member_predictions(pm, 0);
}

AggregationResult aggregate(Strategy strategy, std::span<const HeadParams> heads,
                            const FeatureDataset& ds) {
  AggregationResult out;
  out.strategy = strategy;
  switch (strategy) {
    case Strategy::oracle: {
      const OracleChoice choice = oracle_select(heads, ds);
      out.chosen_member = choice.member;
      out.predictions = predict(heads[choice.member], ds);
      break;
    }
    case Strategy::prediction_ensemble:
      out.predictions = argmax_rows(prediction_ensemble_logits(heads, ds), heads.front().config().out_dim);
      break;
    case Strategy::uniform_soup:
      out.predictions = predict(uniform_soup(heads), ds);
      break;
  }
  return out;
}

}  // namespace sed
