#include "sed/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "sed/aggregate.hpp"
#include "sed/error.hpp"
#include "sed/eval.hpp"
#include "sed/uncertainty.hpp"

namespace sed {

SyntheticRunMetrics evaluate_synthetic(const EnsembleState& state, const SyntheticSplits& splits,
                                       std::size_t threads) {
  const auto id = PredictionMatrix::from_logits(ensemble_logits(state.heads, splits.test_id, threads));
  const auto ood = PredictionMatrix::from_logits(ensemble_logits(state.heads, splits.test_ood, threads));
  auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  SyntheticRunMetrics m;
  m.mean_unique_ood = mean(count_unique(ood).values);
  m.mean_unique_id = mean(count_unique(id).values);
  m.pds_auroc = auroc({score_pds(id).values, score_pds(ood).values, Orientation::higher_is_ood});
  m.oracle_accuracy_ood = oracle_select(ood, *splits.test_ood.labels).accuracy;
  m.ensemble_accuracy_id =
      accuracy(argmax_rows(prediction_ensemble_logits(id), id.classes()), *splits.test_id.labels);
  return m;
}

std::vector<PairedSeedResult> run_paired_synthetic(const TrainConfig& config,
                                                   const SyntheticParams& data,
                                                   const std::vector<std::uint64_t>& seeds,
                                                   std::size_t threads) {
  std::vector<PairedSeedResult> results;
  for (const std::uint64_t seed : seeds) {
    SyntheticParams params = data;
    params.seed = seed;
    const SyntheticSplits splits = gen_synthetic_shortcut(params);
    TrainConfig cfg = config;
    cfg.seed = seed;
    PairedSeedResult r;
    r.seed = seed;
    TrainConfig base = cfg;
    base.lambda = 0.0;
    r.baseline = evaluate_synthetic(train(splits.train, base, nullptr, {threads, {}}), splits, threads);
    r.diversified = evaluate_synthetic(train(splits.train, cfg, nullptr, {threads, {}}), splits, threads);
    results.push_back(r);
  }
  return results;
}

double median_step_seconds(std::size_t members, std::size_t subset_size, std::size_t batch_size,
                           std::uint32_t dim, std::uint32_t classes, std::size_t repeats,
                           std::size_t steps_per_repeat, std::size_t threads) {
  TrainConfig cfg;
  cfg.num_members = members;
  cfg.pair_subset_size = subset_size;
  cfg.batch_size = batch_size;
  cfg.lambda = 1.0;
  cfg.mode = TrainMode::sed;
  cfg.seed = 7;
  cfg.head.depth = 1;
  cfg.head.in_dim = dim;
  cfg.head.out_dim = classes;
  EnsembleState state = init_ensemble(cfg);

  Rng rng(derive_seed(cfg.seed, "bench/data"));
  std::vector<double> x(batch_size * dim);
  for (double& v : x) v = rng.normal();
  std::vector<std::uint32_t> labels(batch_size);
  for (auto& y : labels) y = static_cast<std::uint32_t>(rng.uniform_index(classes));
  const StepBatch batch{x, labels, {}, {}};
  const TrainOptions options{threads, {}};

  for (int warm = 0; warm < 2; ++warm) train_step(state, batch, options);
  std::vector<double> per_step;
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t s = 0; s < steps_per_repeat; ++s) train_step(state, batch, options);
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    per_step.push_back(elapsed.count() / static_cast<double>(steps_per_repeat));
  }
  std::sort(per_step.begin(), per_step.end());
  return per_step[per_step.size() / 2];
}

std::string BenchOutcome::to_csv() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
  out << '\n';
  char buf[64];
  for (const auto& row : measurements) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.10g", row[i]);
      out << (i ? "," : "") << buf;
    }
    out << '\n';
  }
  return out.str();
}

TrainConfig synthetic_bench_config() {
  TrainConfig cfg;
  cfg.num_members = 5;
  cfg.epochs = 10;
  cfg.batch_size = 32;
  cfg.learning_rate = 1e-3;
  cfg.weight_decay = 0.01;
  cfg.lambda = 1.0;
  cfg.pair_subset_size = 2;
  cfg.mode = TrainMode::sed;
  cfg.head.depth = 1;
  return cfg;
}

SyntheticParams synthetic_bench_data() {
  SyntheticParams p;
  p.n_train = 10000;
  p.n_test = 2000;
  p.d_noise = 8;
  p.spurious_corr = 0.95;
  return p;
}

std::vector<std::string> bench_case_names() { return {"diversification", "pds-detection", "step-cost"}; }

BenchCase default_bench_case(const std::string& name) {
  const auto names = bench_case_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    throw ConfigError("unknown bench case '" + name + "'");
  }
  return {name, synthetic_bench_config(), synthetic_bench_data(), {1, 2, 3, 4, 5}};
}

namespace {

std::vector<std::string> paired_columns() {
  return {"seed",          "lambda",     "mean_unique_ood", "mean_unique_id",
          "pds_auroc",     "oracle_acc_ood", "ensemble_acc_id"};
}

void push_paired_rows(BenchOutcome& out, const std::vector<PairedSeedResult>& runs, double lambda) {
  for (const auto& r : runs) {
    for (const auto* m : {&r.baseline, &r.diversified}) {
      out.measurements.push_back({static_cast<double>(r.seed), m == &r.baseline ? 0.0 : lambda,
                                  m->mean_unique_ood, m->mean_unique_id, m->pds_auroc,
                                  m->oracle_accuracy_ood, m->ensemble_accuracy_id});
    }
  }
}

}  // namespace

BenchOutcome run_bench(const BenchCase& bench, std::size_t threads) {
  BenchOutcome out;
  out.name = bench.name;
  char buf[256];
  if (bench.name == "diversification" || bench.name == "pds-detection") {
    const auto runs = run_paired_synthetic(bench.config, bench.data, bench.seeds, threads);
    out.columns = paired_columns();
    push_paired_rows(out, runs, bench.config.lambda);
    double base = 0.0;
    double div = 0.0;
    for (const auto& r : runs) {
      if (bench.name == "diversification") {
        base += r.baseline.mean_unique_ood;
        div += r.diversified.mean_unique_ood;
      } else {
        base += r.baseline.pds_auroc;
        div += r.diversified.pds_auroc;
      }
    }
    base /= static_cast<double>(runs.size());
    div /= static_cast<double>(runs.size());
    if (bench.name == "diversification") {
      out.property = "mean #unique on test_ood increases with diversification";
      out.passed = div > base;
      std::snprintf(buf, sizeof buf, "mean #unique: lambda=0 %.4f, lambda=%g %.4f", base,
                    bench.config.lambda, div);
    } else {
      out.property = "PDS AUROC (test_ood vs test_id) > 0.5";
      out.passed = div > 0.5;
      std::snprintf(buf, sizeof buf, "PDS AUROC: lambda=0 %.4f, lambda=%g %.4f", base,
                    bench.config.lambda, div);
    }
    out.summary = buf;
    return out;
  }
  if (bench.name == "step-cost") {
    const double small = median_step_seconds(5, 2, 256, 64, 10, 5, 20, threads);
    const double large = median_step_seconds(50, 2, 256, 64, 10, 5, 20, threads);
    const double exhaustive = median_step_seconds(5, 5, 256, 64, 10, 5, 20, threads);
    out.columns = {"members", "subset_size", "median_step_seconds"};
    out.measurements = {{5, 2, small}, {50, 2, large}, {5, 5, exhaustive}};
    out.property = "step time ratio M=50/M=5 at |I|=2 below 3, and |I|=5 slower than |I|=2 at M=5";
    const double ratio = large / small;
    out.passed = ratio < 3.0 && exhaustive > small;
    std::snprintf(buf, sizeof buf,
                  "M=5,|I|=2: %.3g s  M=50,|I|=2: %.3g s (ratio %.2f)  M=5,|I|=5: %.3g s", small,
                  large, ratio, exhaustive);
    out.summary = buf;
    return out;
  }
  throw ConfigError("unknown bench case '" + bench.name + "'");
}

}  // namespace sed
