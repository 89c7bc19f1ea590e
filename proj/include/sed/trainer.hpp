#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sed/data.hpp"
#include "sed/heads.hpp"
#include "sed/rng.hpp"

namespace sed {

enum class TrainMode { sed, deep_ensemble, a2d_explicit_ood, two_stage };

std::string_view to_string(TrainMode mode);
TrainMode train_mode_from_string(std::string_view name);

struct TrainConfig {
  std::size_t num_members = 5;
  std::size_t epochs = 10;
  std::size_t batch_size = 256;
  double learning_rate = 3e-4;
  double weight_decay = 0.01;
  double lambda = 1.0;
  std::size_t pair_subset_size = 2;
  TrainMode mode = TrainMode::sed;
  std::uint64_t seed = 0;
  // in_dim/out_dim are taken from the training data by train().
  HeadConfig head;
  double two_stage_threshold = 0.2;
  std::optional<std::string> ood_dataset_path;

  // Lambda actually applied: always 0 in deep_ensemble mode.
  double effective_lambda() const { return mode == TrainMode::deep_ensemble ? 0.0 : lambda; }
  bool draws_pairs() const { return effective_lambda() > 0.0; }

  // Throws ConfigError describing the first violated constraint.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct AdamWState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;

  AdamWState() = default;
  explicit AdamWState(std::size_t params) : first_moment(params, 0.0), second_moment(params, 0.0) {}
};

// Decoupled-weight-decay Adam:
//   theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
// Throws NumericalError naming the member (if >= 0) and parameter index on a
// non-finite gradient.
void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state,
                double lr, double weight_decay, long member = -1);

// Uniform random subset of `subset_size` distinct members, ascending.
std::vector<std::size_t> sample_pair_subset(Rng& rng, std::size_t members, std::size_t subset_size);

struct EnsembleState {
  std::vector<HeadParams> heads;
  std::vector<AdamWState> optimizer;
  TrainConfig config;
  Rng rng;  // pair-subset stream
  std::size_t steps_taken = 0;
};

// Fresh ensemble for `config` (head in/out dims must already be set).
// Member m is initialised from a seed split off config.seed by m.
EnsembleState init_ensemble(const TrainConfig& config);

struct StepLog {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double main_loss = 0.0;
  double div_loss = 0.0;
  double mean_alpha = 0.0;
  std::vector<std::size_t> pair;
};

// One optimisation step. Feature spans are row-major with head.in_dim
// columns. `selected` (two_stage) flags rows that bear the disagreement term;
// `ood_features` (a2d_explicit_ood) is the unlabelled disagreement batch.
struct StepBatch {
  std::span<const double> features;
  std::span<const std::uint32_t> labels;
  std::span<const std::uint8_t> selected;
  std::span<const double> ood_features;
};

struct TrainOptions {
  // Members are forwarded/backpropagated on up to this many threads. Each
  // member's update is computed independently, so results do not depend on
  // the thread count.
  std::size_t threads = 1;
  std::function<void(const StepLog&)> on_step;
};

StepLog train_step(EnsembleState& state, const StepBatch& batch, const TrainOptions& options);

// Full training run. `ood` is required iff mode == a2d_explicit_ood.
EnsembleState train(const FeatureDataset& ds, const TrainConfig& config,
                    const FeatureDataset* ood = nullptr, const TrainOptions& options = {});

// Logits of every member on every row of `ds`, shaped (n, M, C).
Tensor3 ensemble_logits(std::span<const HeadParams> heads, const FeatureDataset& ds,
                        std::size_t threads = 1);

// Heads and head config only; optimizer state is not persisted. The loaded
// state has config.num_members/head/seed restored and default values
// elsewhere.
void save_checkpoint(const EnsembleState& state, const std::filesystem::path& path);
EnsembleState load_checkpoint(const std::filesystem::path& path);

// CSV header of the training log: step,epoch,main_loss,div_loss,mean_alpha,pair_indices
std::string train_log_header();
std::string format_train_log_row(const StepLog& log);

}  // namespace sed
