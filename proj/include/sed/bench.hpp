#pragma once

// Paired desk-scale experiments on the synthetic shortcut benchmark and the
// per-step cost measurement. Used by the `bench` CLI command and the
// acceptance suite.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sed/data.hpp"
#include "sed/trainer.hpp"

namespace sed {

// Metrics of one trained ensemble on the synthetic test splits.
struct SyntheticRunMetrics {
  double mean_unique_ood = 0.0;
  double mean_unique_id = 0.0;
  double pds_auroc = 0.5;         // test_ood vs test_id
  double oracle_accuracy_ood = 0.0;
  double ensemble_accuracy_id = 0.0;
};

struct PairedSeedResult {
  std::uint64_t seed = 0;
  SyntheticRunMetrics baseline;    // lambda = 0
  SyntheticRunMetrics diversified; // lambda = config.lambda
};

// For every seed: generate data with that seed, then train the base config
// with lambda = 0 and with the configured lambda (same seed), and evaluate.
std::vector<PairedSeedResult> run_paired_synthetic(const TrainConfig& config,
                                                   const SyntheticParams& data,
                                                   const std::vector<std::uint64_t>& seeds,
                                                   std::size_t threads = 1);

SyntheticRunMetrics evaluate_synthetic(const EnsembleState& state, const SyntheticSplits& splits,
                                       std::size_t threads = 1);

// Median over `repeats` of the mean wall-clock seconds per training step
// (sed mode, lambda 1) on random data.
double median_step_seconds(std::size_t members, std::size_t subset_size, std::size_t batch_size,
                           std::uint32_t dim, std::uint32_t classes, std::size_t repeats = 5,
                           std::size_t steps_per_repeat = 20, std::size_t threads = 1);

struct BenchCase {
  std::string name;  // diversification | pds-detection | step-cost
  TrainConfig config;
  SyntheticParams data;
  std::vector<std::uint64_t> seeds;
};

struct BenchOutcome {
  std::string name;
  bool passed = false;
  std::string property;
  std::string summary;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> measurements;

  std::string to_csv() const;
};

// Training setup shared by the synthetic bench cases: 5 depth-1 members,
// lambda 1, 10 epochs.
TrainConfig synthetic_bench_config();
SyntheticParams synthetic_bench_data();

BenchCase default_bench_case(const std::string& name);
std::vector<std::string> bench_case_names();

BenchOutcome run_bench(const BenchCase& bench, std::size_t threads = 1);

}  // namespace sed
