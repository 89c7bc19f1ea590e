#pragma once

// Dense numeric kernels shared by every module. All arithmetic is done in
// double precision; callers pass spans over their own storage.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace sed {

// Logits f(x) over C classes. Finite, C >= 2 in normal use.
using LogitVector = std::vector<double>;
// Softmax output; entries in [0,1] summing to one.
using ProbVector = std::vector<double>;

// Throws NumericalError("non-finite logits") on NaN/Inf input,
// std::invalid_argument on empty input.
ProbVector softmax(std::span<const double> logits);
void softmax_into(std::span<const double> logits, std::span<double> out);

double log_sum_exp(std::span<const double> logits);

// -log softmax(logits)[label], evaluated as log_sum_exp(logits) - logits[label].
double cross_entropy(std::span<const double> logits, std::size_t label);

// Smallest index attaining the maximum.
std::size_t argmax_tiebreak_low(std::span<const double> values);

// Shannon entropy in nats with 0 log 0 = 0.
double entropy(std::span<const double> probs);

double relu(double x) noexcept;
double relu_derivative(double x) noexcept;  // 0 at x == 0
// Exact GELU: x * Phi(x).
double gelu(double x) noexcept;
double gelu_derivative(double x) noexcept;

bool all_finite(std::span<const double> values) noexcept;

// out = W x + b with W stored row-major (rows x cols).
void affine(std::span<const double> weights, std::span<const double> bias,
            std::span<const double> x, std::span<double> out);

// Dense rank-3 array, row-major over (i, j, k). Used for per-sample,
// per-member, per-class quantities such as batch logits.
struct Tensor3 {
  std::size_t dim0 = 0;
  std::size_t dim1 = 0;
  std::size_t dim2 = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(std::size_t d0, std::size_t d1, std::size_t d2, double fill = 0.0)
      : dim0(d0), dim1(d1), dim2(d2), data(d0 * d1 * d2, fill) {}

  std::span<double> at(std::size_t i, std::size_t j) {
    return {data.data() + (i * dim1 + j) * dim2, dim2};
  }
  std::span<const double> at(std::size_t i, std::size_t j) const {
    return {data.data() + (i * dim1 + j) * dim2, dim2};
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * dim1 + j) * dim2 + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * dim1 + j) * dim2 + k];
  }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;
};

}  // namespace sed
