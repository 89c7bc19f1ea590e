#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "sed/prediction_matrix.hpp"

namespace sed {

// N feature rows of dimension D with optional labels over C classes and
// optional group ids. Features are stored as float32 (the on-disk precision)
// and widened to double at use.
struct FeatureDataset {
  std::size_t n = 0;
  std::uint32_t d = 0;
  // Number of classes; 0 is allowed for unlabeled data of unknown arity.
  std::uint32_t c = 0;
  std::vector<float> features;  // n * d, row-major
  std::optional<std::vector<std::uint32_t>> labels;
  std::optional<std::vector<std::uint32_t>> groups;

  std::span<const float> row(std::size_t i) const { return {features.data() + i * d, d}; }
  bool has_labels() const { return labels.has_value(); }
  bool has_groups() const { return groups.has_value(); }

  // Features widened to double, n * d row-major.
  std::vector<double> features_as_double() const;

  // Throws std::invalid_argument when an invariant is broken.
  void validate() const;

  friend bool operator==(const FeatureDataset&, const FeatureDataset&) = default;
};

enum class DatasetFormat { sedf, csv };

// Picks the format from the extension (".csv" -> csv, anything else sedf).
DatasetFormat format_for(const std::filesystem::path& path);

// `csv_classes` sets C for CSV input; 0 means max(label) + 1 (at least 2).
FeatureDataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                            std::uint32_t csv_classes = 0);
FeatureDataset load_dataset(const std::filesystem::path& path);

void save_dataset(const FeatureDataset& ds, const std::filesystem::path& path);
void save_dataset_csv(const FeatureDataset& ds, const std::filesystem::path& path);

struct BatchPlan {
  std::uint64_t seed = 0;
  std::size_t batch_size = 256;
  bool drop_last = false;
};

// One epoch's batches: a seeded permutation of [0, n) cut into batch_size
// chunks. The short tail batch is kept unless drop_last is set.
std::vector<std::vector<std::size_t>> iterate_batches(std::size_t n, const BatchPlan& plan,
                                                      std::uint64_t epoch);
std::vector<std::vector<std::size_t>> iterate_batches(const FeatureDataset& ds,
                                                      const BatchPlan& plan, std::uint64_t epoch);

struct SyntheticParams {
  std::uint64_t seed = 0;
  std::size_t n_train = 10000;
  std::size_t n_test = 2000;
  std::uint32_t d_noise = 8;
  double spurious_corr = 0.95;
};

struct SyntheticSplits {
  FeatureDataset train;
  FeatureDataset test_id;
  FeatureDataset test_ood;
};

// Probability that the core cue (feature 0) agrees with the label.
inline constexpr double kCoreCueAgreement = 0.9;

// Binary shortcut-learning benchmark. Feature 0 is a core cue, feature 1 a
// spurious cue whose agreement rate with the label is `spurious_corr` on
// train/test_id and 0.5 on test_ood; the rest is standard-normal noise.
// Group id = 2 * label + (spurious cue agrees with label).
SyntheticSplits gen_synthetic_shortcut(const SyntheticParams& params);

// Indices (ascending) whose single-model max class probability is below
// `threshold`. `probs` must hold exactly one member.
std::vector<std::size_t> select_low_confidence(const FeatureDataset& ds,
                                               const PredictionMatrix& probs, double threshold);

}  // namespace sed
