#include "sed/objective.hpp"

#include <algorithm>
#include <numeric>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sed {
namespace {

void check_batch(const Tensor3& logits, std::size_t labels) {
  if (logits.dim0 == 0 || logits.dim1 == 0 || logits.dim2 == 0) {
    throw std::invalid_argument("empty logit tensor");
  }
  if (labels != logits.dim0) throw std::invalid_argument("label count != batch size");
}

// Per-row accumulation of the mean-over-pairs A2D value into `grad` (scaled
// by `scale`), using already computed member probabilities `probs`.
double accumulate_pair_mean(const Tensor3& probs, std::size_t row,
                            std::span<const std::size_t> sorted_subset, double scale,
                            Tensor3& grad) {
  const std::size_t pair_count = sorted_subset.size() * (sorted_subset.size() - 1) / 2;
  const double inv_pairs = 1.0 / static_cast<double>(pair_count);
  double total = 0.0;
  for (std::size_t i = 0; i < sorted_subset.size(); ++i) {
    for (std::size_t j = i + 1; j < sorted_subset.size(); ++j) {
      const std::size_t m = sorted_subset[i];
      const std::size_t l = sorted_subset[j];
      const PairLossResult pair = a2d_pair(probs.at(row, m), probs.at(row, l));
      total += pair.value;
      if (scale == 0.0) continue;
      auto gm = grad.at(row, m);
      auto gl = grad.at(row, l);
      for (std::size_t k = 0; k < gm.size(); ++k) {
        gm[k] += scale * inv_pairs * pair.grad_m[k];
        gl[k] += scale * inv_pairs * pair.grad_l[k];
      }
    }
  }
  return total * inv_pairs;
}

Tensor3 member_probs(const Tensor3& logits) {
  Tensor3 probs(logits.dim0, logits.dim1, logits.dim2);
  for (std::size_t n = 0; n < logits.dim0; ++n) {
    for (std::size_t m = 0; m < logits.dim1; ++m) softmax_into(logits.at(n, m), probs.at(n, m));
  }
  return probs;
}

std::vector<std::size_t> sorted_subset(std::span<const std::size_t> subset, std::size_t members) {
  check_pair_subset(subset, members);
  std::vector<std::size_t> sorted(subset.begin(), subset.end());
  std::sort(sorted.begin(), sorted.end());
  return sorted;
}

// Adds the main-loss value/gradient of one row (scaled by 1/batch) from
// precomputed probabilities. Returns the row's main loss.
double add_main_row(const Tensor3& logits, const Tensor3& probs, std::size_t row,
                    std::size_t label, double inv_batch, Tensor3& grad) {
  const std::size_t members = logits.dim1;
  const double inv_m = 1.0 / static_cast<double>(members);
  double value = 0.0;
  for (std::size_t m = 0; m < members; ++m) {
    value += cross_entropy(logits.at(row, m), label);
    const auto p = probs.at(row, m);
    auto g = grad.at(row, m);
    for (std::size_t k = 0; k < p.size(); ++k) {
      g[k] += (p[k] - (k == label ? 1.0 : 0.0)) * inv_m * inv_batch;
    }
  }
  return value * inv_m;
}

void check_labels(std::span<const std::uint32_t> labels, std::size_t classes) {
  for (auto y : labels) {
    if (y >= classes) throw std::invalid_argument("label " + std::to_string(y) + " out of range");
  }
}

}  // namespace

MainLossResult main_loss(std::span<const double> logits, std::size_t members, std::size_t label) {
  if (members == 0 || logits.size() % members != 0) {
    throw std::invalid_argument("main_loss: logits size not divisible by member count");
  }
  const std::size_t classes = logits.size() / members;
  if (label >= classes) throw std::invalid_argument("main_loss: label out of range");
  MainLossResult out;
  out.grad.resize(logits.size());
  const double inv_m = 1.0 / static_cast<double>(members);
  std::vector<double> p(classes);
  for (std::size_t m = 0; m < members; ++m) {
    const auto z = logits.subspan(m * classes, classes);
    out.value += cross_entropy(z, label);
    softmax_into(z, p);
    for (std::size_t k = 0; k < classes; ++k) {
      out.grad[m * classes + k] = (p[k] - (k == label ? 1.0 : 0.0)) * inv_m;
    }
  }
  out.value *= inv_m;
  return out;
}

PairLossResult a2d_pair(std::span<const double> p_m, std::span<const double> p_l) {
  return a2d_pair(p_m, p_l, argmax_tiebreak_low(p_m));
}

PairLossResult a2d_pair(std::span<const double> p_m, std::span<const double> p_l,
                        std::size_t reference_class) {
  if (p_m.size() != p_l.size() || p_m.empty()) {
    throw std::invalid_argument("a2d_pair: probability vectors differ in length");
  }
  if (reference_class >= p_m.size()) throw std::invalid_argument("a2d_pair: bad reference class");
  const std::size_t y = reference_class;
  PairLossResult out;
  out.reference_class = y;
  out.grad_m.assign(p_m.size(), 0.0);
  out.grad_l.assign(p_l.size(), 0.0);

  // 1 - p[y] summed from the other entries keeps precision near one-hots.
  double rest_m = 0.0;
  double rest_l = 0.0;
  for (std::size_t k = 0; k < p_m.size(); ++k) {
    if (k == y) continue;
    rest_m += p_m[k];
    rest_l += p_l[k];
  }
  const double a = p_m[y];
  const double b = p_l[y];
  const double inner = a * rest_l + b * rest_m;
  if (!(inner > kA2DClamp)) {
    out.value = -std::log(kA2DClamp);
    return out;
  }
  out.value = -std::log(inner);
  const double dl_da = -(rest_l - b) / inner;
  const double dl_db = -(rest_m - a) / inner;
  // d p[y] / d z[k] = p[y] * (delta_ky - p[k])
  for (std::size_t k = 0; k < p_m.size(); ++k) {
    out.grad_m[k] = dl_da * (k == y ? a * rest_m : -a * p_m[k]);
    out.grad_l[k] = dl_db * (k == y ? b * rest_l : -b * p_l[k]);
  }
  return out;
}

namespace {

void normalize_alpha(std::vector<double>& ce, double mean) {
  const double guarded = std::max(mean, kAlphaGuard);
  const double denom = guarded * guarded;
  for (double& a : ce) a /= denom;
}

}  // namespace

SampleWeights sample_weights(const Tensor3& logits, std::span<const std::uint32_t> labels) {
  check_batch(logits, labels.size());
  check_labels(labels, logits.dim2);
  const std::size_t batch = logits.dim0;
  const std::size_t members = logits.dim1;
  const std::size_t classes = logits.dim2;
  SampleWeights out;
  out.alpha.resize(batch);
  std::vector<double> averaged(classes);
  double total = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    std::fill(averaged.begin(), averaged.end(), 0.0);
    for (std::size_t m = 0; m < members; ++m) {
      const auto z = logits.at(n, m);
      for (std::size_t k = 0; k < classes; ++k) averaged[k] += z[k];
    }
    for (double& v : averaged) v /= static_cast<double>(members);
    out.alpha[n] = cross_entropy(averaged, labels[n]);
    total += out.alpha[n];
  }
  out.batch_mean_ce = total / static_cast<double>(batch);
  normalize_alpha(out.alpha, out.batch_mean_ce);
  return out;
}

std::vector<double> alpha_from_ce(std::span<const double> ce) {
  if (ce.empty()) throw std::invalid_argument("alpha_from_ce: empty batch");
  std::vector<double> alpha(ce.begin(), ce.end());
  const double mean = std::accumulate(alpha.begin(), alpha.end(), 0.0) / static_cast<double>(alpha.size());
  normalize_alpha(alpha, mean);
  return alpha;
}

void check_pair_subset(std::span<const std::size_t> subset, std::size_t members) {
  if (subset.size() < 2) throw std::invalid_argument("pair subset needs at least two members");
  std::vector<std::size_t> sorted(subset.begin(), subset.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw std::invalid_argument("pair subset contains duplicate members");
  }
  if (sorted.back() >= members) throw std::invalid_argument("pair subset member out of range");
}

BatchLossResult sed_batch_loss(const Tensor3& logits, std::span<const std::uint32_t> labels,
                               std::span<const std::size_t> pair_subset, double lambda) {
  check_batch(logits, labels.size());
  check_labels(labels, logits.dim2);
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("lambda must be finite and >= 0");
  }
  const std::size_t batch = logits.dim0;
  const double inv_batch = 1.0 / static_cast<double>(batch);
  const Tensor3 probs = member_probs(logits);
  BatchLossResult out;
  out.grad = Tensor3(logits.dim0, logits.dim1, logits.dim2);

  double main_total = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    main_total += add_main_row(logits, probs, n, labels[n], inv_batch, out.grad);
  }
  out.main_value = main_total * inv_batch;
  out.value = out.main_value;
  if (lambda == 0.0) return out;

  const auto subset = sorted_subset(pair_subset, logits.dim1);
  const SampleWeights weights = sample_weights(logits, labels);
  double div_total = 0.0;
  double alpha_total = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    const double alpha = weights.alpha[n];
    alpha_total += alpha;
    div_total += alpha * accumulate_pair_mean(probs, n, subset, lambda * alpha * inv_batch, out.grad);
  }
  out.div_value = div_total * inv_batch;
  out.mean_alpha = alpha_total * inv_batch;
  out.value = out.main_value + lambda * out.div_value;
  return out;
}

BatchLossResult explicit_ood_div_loss(const Tensor3& logits,
                                      std::span<const std::size_t> pair_subset) {
  check_batch(logits, logits.dim0);
  const auto subset = sorted_subset(pair_subset, logits.dim1);
  const std::size_t batch = logits.dim0;
  const double inv_batch = 1.0 / static_cast<double>(batch);
  const Tensor3 probs = member_probs(logits);
  BatchLossResult out;
  out.grad = Tensor3(logits.dim0, logits.dim1, logits.dim2);
  double total = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    total += accumulate_pair_mean(probs, n, subset, inv_batch, out.grad);
  }
  out.div_value = total * inv_batch;
  out.value = out.div_value;
  return out;
}

BatchLossResult selected_disagreement_loss(const Tensor3& logits,
                                           std::span<const std::uint32_t> labels,
                                           std::span<const std::uint8_t> selected,
                                           std::span<const std::size_t> pair_subset,
                                           double lambda) {
  check_batch(logits, labels.size());
  check_labels(labels, logits.dim2);
  if (selected.size() != logits.dim0) throw std::invalid_argument("selection mask size != batch");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("lambda must be finite and >= 0");
  }
  const bool any_selected = std::any_of(selected.begin(), selected.end(), [](auto s) { return s; });
  std::vector<std::size_t> subset;
  if (any_selected && lambda != 0.0) subset = sorted_subset(pair_subset, logits.dim1);

  const std::size_t batch = logits.dim0;
  const double inv_batch = 1.0 / static_cast<double>(batch);
  const Tensor3 probs = member_probs(logits);
  BatchLossResult out;
  out.grad = Tensor3(logits.dim0, logits.dim1, logits.dim2);
  double main_total = 0.0;
  double div_total = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    if (selected[n] == 0) {
      main_total += add_main_row(logits, probs, n, labels[n], inv_batch, out.grad);
    } else if (!subset.empty()) {
      div_total += accumulate_pair_mean(probs, n, subset, lambda * inv_batch, out.grad);
    }
  }
  out.main_value = main_total * inv_batch;
  out.div_value = div_total * inv_batch;
  out.value = out.main_value + lambda * out.div_value;
  return out;
}

}  // namespace sed
