#include "sed/core_math.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "sed/error.hpp"

namespace sed {
namespace {

void check_logits(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("empty logit vector");
  if (!all_finite(logits)) throw NumericalError("non-finite logits");
}

}  // namespace

bool all_finite(std::span<const double> values) noexcept {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void softmax_into(std::span<const double> logits, std::span<double> out) {
  check_logits(logits);
  if (out.size() != logits.size()) throw std::invalid_argument("softmax: output size mismatch");
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - peak);
    total += out[k];
  }
  for (double& p : out) p /= total;
}

ProbVector softmax(std::span<const double> logits) {
  ProbVector out(logits.size());
  softmax_into(logits, out);
  return out;
}

double log_sum_exp(std::span<const double> logits) {
  check_logits(logits);
  const double peak = *std::max_element(logits.begin(), logits.end());
  if (logits.size() == 1) return peak;
  double total = 0.0;
  for (double z : logits) total += std::exp(z - peak);
  return peak + std::log(total);
}

double cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) throw std::invalid_argument("cross_entropy: label out of range");
  // Rounding can leave a -0.0 or a tiny negative; the loss is >= 0.
  return std::max(0.0, log_sum_exp(logits) - logits[label]);
}

std::size_t argmax_tiebreak_low(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax of empty vector");
  std::size_t best = 0;
  for (std::size_t k = 1; k < values.size(); ++k) {
    if (values[k] > values[best]) best = k;
  }
  return best;
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

double relu(double x) noexcept { return x > 0.0 ? x : 0.0; }
double relu_derivative(double x) noexcept { return x > 0.0 ? 1.0 : 0.0; }

double gelu(double x) noexcept {
  return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
}

double gelu_derivative(double x) noexcept {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) * (std::numbers::inv_sqrtpi / std::numbers::sqrt2);
  return cdf + x * pdf;
}

void affine(std::span<const double> weights, std::span<const double> bias,
            std::span<const double> x, std::span<double> out) {
  const std::size_t rows = out.size();
  const std::size_t cols = x.size();
  if (weights.size() != rows * cols || bias.size() != rows) {
    throw std::invalid_argument("affine: shape mismatch");
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const double* w = weights.data() + r * cols;
    double acc = bias[r];
    for (std::size_t c = 0; c < cols; ++c) acc += w[c] * x[c];
    out[r] = acc;
  }
}

}  // namespace sed
