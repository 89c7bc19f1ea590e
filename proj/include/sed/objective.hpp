#pragma once

// Loss functions of the diversified ensemble and their gradients with
// respect to member logits.
//
// Batch tensors are shaped (batch, members, classes). Every returned
// gradient has the same shape as the logits it differentiates.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sed/core_math.hpp"

namespace sed {

// Floor applied to the pairwise disagreement term inside the log.
inline constexpr double kA2DClamp = 1e-12;
// Floor applied to the batch-mean CE before squaring in the sample weights.
inline constexpr double kAlphaGuard = 1e-8;

struct MainLossResult {
  double value = 0.0;
  std::vector<double> grad;  // members * classes
};

// Mean over members of CE(logits^m, label) for one sample. `logits` holds
// `members` consecutive rows of C values.
MainLossResult main_loss(std::span<const double> logits, std::size_t members, std::size_t label);

struct PairLossResult {
  double value = 0.0;
  std::vector<double> grad_m;  // dL/dlogits of the reference member
  std::vector<double> grad_l;  // dL/dlogits of the other member
  std::size_t reference_class = 0;
};

// Agree-to-disagree loss -log(max(a(1-b) + b(1-a), kA2DClamp)) with
// a = p_m[y], b = p_l[y] and y = argmax p_m. The argmax is not
// differentiated; gradients reach the logits through a and b only.
PairLossResult a2d_pair(std::span<const double> p_m, std::span<const double> p_l);

// Same as a2d_pair with the reference class fixed by the caller.
PairLossResult a2d_pair(std::span<const double> p_m, std::span<const double> p_l,
                        std::size_t reference_class);

struct SampleWeights {
  std::vector<double> alpha;
  double batch_mean_ce = 0.0;
};

// alpha_n = CE_n / max(mean_B CE, kAlphaGuard)^2 where CE_n is the loss of
// the member-averaged logits. Treated as constants by the optimizer.
SampleWeights sample_weights(const Tensor3& logits, std::span<const std::uint32_t> labels);

// The same normalisation applied to precomputed per-sample CE values.
std::vector<double> alpha_from_ce(std::span<const double> ce);

struct BatchLossResult {
  double value = 0.0;       // main + lambda * div
  double main_value = 0.0;  // batch-mean main loss
  double div_value = 0.0;   // unscaled diversity term
  double mean_alpha = 0.0;  // 0 when no sample weights were used
  Tensor3 grad;
};

// Throws std::invalid_argument unless the subset has at least two distinct
// members, all < members.
void check_pair_subset(std::span<const std::size_t> subset, std::size_t members);

// Scalable ensemble diversification loss on one labelled batch:
//   mean_n main_n + lambda * mean_n [alpha_n * mean_{m<l in subset} A2D(p^m_n, p^l_n)]
// The lower-index member of each pair supplies the reference class. With
// lambda == 0 the diversity branch (and alpha) is skipped entirely.
BatchLossResult sed_batch_loss(const Tensor3& logits, std::span<const std::uint32_t> labels,
                               std::span<const std::size_t> pair_subset, double lambda);

// Unweighted disagreement on an unlabelled batch: mean over samples and over
// unordered pairs in the subset of A2D. `value == div_value`.
BatchLossResult explicit_ood_div_loss(const Tensor3& logits,
                                      std::span<const std::size_t> pair_subset);

// Pre-selected disagreement: rows with `selected[n] != 0` contribute
// lambda * mean-pair A2D (unit weight), every other row contributes the main
// loss. Both parts are divided by the batch size.
BatchLossResult selected_disagreement_loss(const Tensor3& logits,
                                           std::span<const std::uint32_t> labels,
                                           std::span<const std::uint8_t> selected,
                                           std::span<const std::size_t> pair_subset,
                                           double lambda);

}  // namespace sed
