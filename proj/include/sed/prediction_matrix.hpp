#pragma once

#include <cstddef>
#include <filesystem>
#include <span>

#include "sed/core_math.hpp"

namespace sed {

// Per-sample, per-member outputs of an ensemble: logits and their softmax.
// Both tensors are shaped (n, members, classes).
struct PredictionMatrix {
  Tensor3 logits;
  Tensor3 probs;

  std::size_t rows() const { return logits.dim0; }
  std::size_t members() const { return logits.dim1; }
  std::size_t classes() const { return logits.dim2; }

  std::span<const double> member_logits(std::size_t row, std::size_t member) const {
    return logits.at(row, member);
  }
  std::span<const double> member_probs(std::size_t row, std::size_t member) const {
    return probs.at(row, member);
  }

  // Fills probs from logits row-wise.
  static PredictionMatrix from_logits(Tensor3 logits);

  friend bool operator==(const PredictionMatrix&, const PredictionMatrix&) = default;
};

// SEDP file: "SEDP", u32 version=1, u64 n, u32 M, u32 C, then n*M*C float32
// logits followed by n*M*C float32 probs, little-endian.
void save_predictions(const PredictionMatrix& pm, const std::filesystem::path& path);
PredictionMatrix load_predictions(const std::filesystem::path& path);

// Rounds both tensors through float32, i.e. the exact content a SEDP
// round-trip yields.
PredictionMatrix quantize_to_float(const PredictionMatrix& pm);

}  // namespace sed
