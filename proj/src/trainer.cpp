#include "sed/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "parallel.hpp"
#include "sed/error.hpp"
#include "sed/objective.hpp"

namespace sed {

std::string_view to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::sed:
      return "sed";
    case TrainMode::deep_ensemble:
      return "deep_ensemble";
    case TrainMode::a2d_explicit_ood:
      return "a2d_explicit_ood";
    case TrainMode::two_stage:
      return "two_stage";
  }
  return "sed";
}

TrainMode train_mode_from_string(std::string_view name) {
  if (name == "sed") return TrainMode::sed;
  if (name == "deep_ensemble") return TrainMode::deep_ensemble;
  if (name == "a2d_explicit_ood") return TrainMode::a2d_explicit_ood;
  if (name == "two_stage") return TrainMode::two_stage;
  throw ConfigError("unknown training mode '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (num_members < 1) fail("num_members must be >= 1");
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 2) fail("batch_size must be >= 2");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be > 0");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) fail("weight_decay must be >= 0");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail("lambda must be finite and >= 0");
  if (draws_pairs() && (pair_subset_size < 2 || pair_subset_size > num_members)) {
    fail("pair_subset_size must satisfy 2 <= |I| <= num_members (got " +
         std::to_string(pair_subset_size) + " with " + std::to_string(num_members) +
         " members)");
  }
  if (mode == TrainMode::two_stage && !(two_stage_threshold > 0.0 && two_stage_threshold <= 1.0)) {
    fail("two_stage_threshold must lie in (0, 1]");
  }
  if (head.depth != 1 && head.depth != 2) fail("head depth must be 1 or 2");
  if (head.depth == 2 && head.hidden_dim < 1) fail("depth-2 head needs hidden_dim >= 1");
}

void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state,
                double lr, double weight_decay, long member) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw std::invalid_argument("adamw_step: shape mismatch");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      std::string where = "parameter " + std::to_string(i);
      if (member >= 0) where = "member " + std::to_string(member) + ", " + where;
      throw NumericalError("non-finite gradient at " + where);
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(AdamWState::kBeta1, t);
  const double bias2 = 1.0 - std::pow(AdamWState::kBeta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = AdamWState::kBeta1 * m + (1.0 - AdamWState::kBeta1) * g;
    v = AdamWState::kBeta2 * v + (1.0 - AdamWState::kBeta2) * g * g;
    const double m_hat = m / bias1;
    const double v_hat = v / bias2;
    params[i] -= lr * (m_hat / (std::sqrt(v_hat) + AdamWState::kEps) + weight_decay * params[i]);
  }
}

std::vector<std::size_t> sample_pair_subset(Rng& rng, std::size_t members,
                                            std::size_t subset_size) {
  if (subset_size < 2 || subset_size > members) {
    throw std::invalid_argument("pair subset size must satisfy 2 <= size <= members");
  }
  std::vector<std::size_t> pool(members);
  for (std::size_t i = 0; i < members; ++i) pool[i] = i;
  // Partial Fisher-Yates: the first subset_size slots become the draw.
  for (std::size_t i = 0; i < subset_size; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(members - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(subset_size);
  std::sort(pool.begin(), pool.end());
  return pool;
}

namespace {

HeadConfig shared_head_config(const TrainConfig& config) {
  HeadConfig head = config.head;
  if (head.depth == 1) head.hidden_dim = 0;
  head.init_seed = config.seed;
  return head;
}

}  // namespace

EnsembleState init_ensemble(const TrainConfig& config) {
  config.validate();
  EnsembleState state;
  state.config = config;
  state.config.head = shared_head_config(config);
  const HeadConfig& shared = state.config.head;
  shared.validate();
  const std::uint64_t init_base = derive_seed(config.seed, "member_init");
  for (std::size_t m = 0; m < config.num_members; ++m) {
    HeadConfig member_cfg = shared;
    member_cfg.init_seed = derive_seed(init_base, m);
    const HeadParams initial = init_head(member_cfg);
    state.heads.push_back(unflatten(shared, initial.values()));
    state.optimizer.emplace_back(shared.param_count());
  }
  state.rng = Rng(derive_seed(config.seed, "pairs"));
  return state;
}

StepLog train_step(EnsembleState& state, const StepBatch& batch, const TrainOptions& options) {
  const TrainConfig& cfg = state.config;
  const std::size_t members = state.heads.size();
  const std::size_t d = cfg.head.in_dim;
  const std::size_t classes = cfg.head.out_dim;
  const std::size_t rows = batch.labels.size();
  if (rows == 0 || batch.features.size() != rows * d) {
    throw std::invalid_argument("train_step: feature/label batch shape mismatch");
  }
  const bool explicit_ood = cfg.mode == TrainMode::a2d_explicit_ood;
  const std::size_t ood_rows = explicit_ood ? batch.ood_features.size() / d : 0;
  if (explicit_ood && (ood_rows == 0 || batch.ood_features.size() != ood_rows * d)) {
    throw std::invalid_argument("train_step: a2d_explicit_ood needs a disagreement batch");
  }
  if (cfg.mode == TrainMode::two_stage && batch.selected.size() != rows) {
    throw std::invalid_argument("train_step: two_stage needs a selection mask per row");
  }

  const double lambda = cfg.effective_lambda();
  StepLog log;
  log.step = state.steps_taken;
  if (cfg.draws_pairs()) log.pair = sample_pair_subset(state.rng, members, cfg.pair_subset_size);

  std::vector<BatchWorkspace> work(members);
  std::vector<BatchWorkspace> ood_work(members);
  std::vector<std::vector<double>> member_logits(members);
  std::vector<std::vector<double>> member_ood_logits(members);
  detail::parallel_for(members, options.threads, [&](std::size_t m) {
    member_logits[m].resize(rows * classes);
    forward_batch(state.heads[m], batch.features, rows, member_logits[m], work[m]);
    if (explicit_ood) {
      member_ood_logits[m].resize(ood_rows * classes);
      forward_batch(state.heads[m], batch.ood_features, ood_rows, member_ood_logits[m],
                    ood_work[m]);
    }
  });

  auto gather = [&](const std::vector<std::vector<double>>& per_member, std::size_t count) {
    Tensor3 t(count, members, classes);
    for (std::size_t m = 0; m < members; ++m) {
      for (std::size_t i = 0; i < count; ++i) {
        std::copy_n(per_member[m].data() + i * classes, classes, t.at(i, m).data());
      }
    }
    return t;
  };
  const Tensor3 logits = gather(member_logits, rows);

  BatchLossResult loss;
  Tensor3 ood_grad;
  switch (cfg.mode) {
    case TrainMode::sed:
    case TrainMode::deep_ensemble:
      loss = sed_batch_loss(logits, batch.labels, log.pair, lambda);
      break;
    case TrainMode::two_stage:
      loss = selected_disagreement_loss(logits, batch.labels, batch.selected, log.pair, lambda);
      break;
    case TrainMode::a2d_explicit_ood: {
      loss = sed_batch_loss(logits, batch.labels, {}, 0.0);
      if (lambda > 0.0) {
        BatchLossResult div = explicit_ood_div_loss(gather(member_ood_logits, ood_rows), log.pair);
        for (double& g : div.grad.data) g *= lambda;
        loss.div_value = div.div_value;
        loss.value = loss.main_value + lambda * div.div_value;
        ood_grad = std::move(div.grad);
      }
      break;
    }
  }
  log.main_loss = loss.main_value;
  log.div_loss = loss.div_value;
  log.mean_alpha = loss.mean_alpha;
  if (!std::isfinite(loss.value)) {
    throw NumericalError("non-finite loss");
  }

  detail::parallel_for(members, options.threads, [&](std::size_t m) {
    std::vector<double> grad(state.heads[m].values().size(), 0.0);
    std::vector<double> dlogits(rows * classes);
    for (std::size_t i = 0; i < rows; ++i) {
      std::copy_n(loss.grad.at(i, m).data(), classes, dlogits.data() + i * classes);
    }
    backward_batch(state.heads[m], batch.features, rows, work[m], dlogits, grad);
    if (!ood_grad.data.empty()) {
      dlogits.resize(ood_rows * classes);
      for (std::size_t i = 0; i < ood_rows; ++i) {
        std::copy_n(ood_grad.at(i, m).data(), classes, dlogits.data() + i * classes);
      }
      backward_batch(state.heads[m], batch.ood_features, ood_rows, ood_work[m], dlogits, grad);
    }
    adamw_step(state.heads[m].values(), grad, state.optimizer[m], cfg.learning_rate,
               cfg.weight_decay, static_cast<long>(m));
  });
  state.steps_taken += 1;
  return log;
}

Tensor3 ensemble_logits(std::span<const HeadParams> heads, const FeatureDataset& ds,
                        std::size_t threads) {
  if (heads.empty()) throw std::invalid_argument("ensemble has no members");
  const HeadConfig& cfg = heads.front().config();
  if (ds.d != cfg.in_dim) {
    throw std::invalid_argument("dataset dimension " + std::to_string(ds.d) +
                                " != head input dimension " + std::to_string(cfg.in_dim));
  }
  const std::size_t classes = cfg.out_dim;
  const std::vector<double> x = ds.features_as_double();
  Tensor3 out(ds.n, heads.size(), classes);
  detail::parallel_for(heads.size(), threads, [&](std::size_t m) {
    if (!heads[m].config().same_shape(cfg)) throw std::invalid_argument("member shapes differ");
    std::vector<double> z(ds.n * classes);
    BatchWorkspace work;
    forward_batch(heads[m], x, ds.n, z, work);
    for (std::size_t i = 0; i < ds.n; ++i) {
      std::copy_n(z.data() + i * classes, classes, out.at(i, m).data());
    }
  });
  return out;
}

namespace {

struct RowBuffer {
  std::vector<double> features;
  std::vector<std::uint32_t> labels;
  std::vector<std::uint8_t> selected;
};

void gather_rows(std::span<const double> x, std::size_t d, std::span<const std::size_t> rows,
                 RowBuffer& out, const std::vector<std::uint32_t>* labels,
                 const std::vector<std::uint8_t>* selected) {
  out.features.resize(rows.size() * d);
  out.labels.clear();
  out.selected.clear();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(x.data() + rows[i] * d, d, out.features.data() + i * d);
    if (labels != nullptr) out.labels.push_back((*labels)[rows[i]]);
    if (selected != nullptr) out.selected.push_back((*selected)[rows[i]]);
  }
}

}  // namespace

EnsembleState train(const FeatureDataset& ds, const TrainConfig& config,
                    const FeatureDataset* ood, const TrainOptions& options) {
  ds.validate();
  if (!ds.has_labels()) throw ConfigError("training data must be labelled");
  TrainConfig cfg = config;
  cfg.head.in_dim = ds.d;
  cfg.head.out_dim = ds.c;
  cfg.validate();
  if (ds.c < 2) throw ConfigError("training data needs at least two classes");
  const bool explicit_ood = cfg.mode == TrainMode::a2d_explicit_ood;
  if (explicit_ood) {
    if (ood == nullptr) throw ConfigError("a2d_explicit_ood mode requires a disagreement dataset");
    ood->validate();
    if (ood->d != ds.d) throw ConfigError("disagreement dataset dimension differs from training data");
  }

  std::vector<std::uint8_t> selected;
  if (cfg.mode == TrainMode::two_stage) {
    TrainConfig first = cfg;
    first.num_members = 1;
    first.mode = TrainMode::deep_ensemble;
    first.lambda = 0.0;
    first.seed = derive_seed(cfg.seed, "two_stage/first");
    const EnsembleState single = train(ds, first, nullptr, TrainOptions{options.threads, {}});
    const PredictionMatrix pm = PredictionMatrix::from_logits(ensemble_logits(single.heads, ds));
    selected.assign(ds.n, 0);
    for (std::size_t i : select_low_confidence(ds, pm, cfg.two_stage_threshold)) selected[i] = 1;
  }

  EnsembleState state = init_ensemble(cfg);
  const std::vector<double> x = ds.features_as_double();
  std::vector<double> ood_x;
  if (explicit_ood) ood_x = ood->features_as_double();

  const BatchPlan plan{derive_seed(cfg.seed, "batches"), cfg.batch_size, false};
  const BatchPlan ood_plan{derive_seed(cfg.seed, "ood_batches"), cfg.batch_size, false};
  std::size_t ood_epoch = 0;
  std::size_t ood_cursor = 0;
  std::vector<std::vector<std::size_t>> ood_batches;
  if (explicit_ood) ood_batches = iterate_batches(ood->n, ood_plan, ood_epoch);

  RowBuffer main_rows;
  RowBuffer ood_rows;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& rows : iterate_batches(ds.n, plan, epoch)) {
      gather_rows(x, ds.d, rows, main_rows, &*ds.labels,
                  selected.empty() ? nullptr : &selected);
      StepBatch batch{main_rows.features, main_rows.labels, main_rows.selected, {}};
      if (explicit_ood) {
        if (ood_cursor == ood_batches.size()) {
          ood_batches = iterate_batches(ood->n, ood_plan, ++ood_epoch);
          ood_cursor = 0;
        }
        gather_rows(ood_x, ood->d, ood_batches[ood_cursor++], ood_rows, nullptr, nullptr);
        batch.ood_features = ood_rows.features;
      }
      StepLog log;
      try {
        log = train_step(state, batch, options);
      } catch (const NumericalError& e) {
        throw NumericalError("epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(state.steps_taken) + ": " + e.what());
      }
      log.epoch = epoch;
      if (options.on_step) options.on_step(log);
    }
  }
  return state;
}

void save_checkpoint(const EnsembleState& state, const std::filesystem::path& path) {
  write_checkpoint(path, shared_head_config(state.config), state.heads);
}

EnsembleState load_checkpoint(const std::filesystem::path& path) {
  CheckpointData data = read_checkpoint(path);
  EnsembleState state;
  state.config.num_members = data.members.size();
  state.config.head = data.config;
  state.config.seed = data.config.init_seed;
  state.heads = std::move(data.members);
  for (const auto& h : state.heads) state.optimizer.emplace_back(h.values().size());
  state.rng = Rng(derive_seed(state.config.seed, "pairs"));
  return state;
}

std::string train_log_header() { return "step,epoch,main_loss,div_loss,mean_alpha,pair_indices"; }

std::string format_train_log_row(const StepLog& log) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu,%zu,%.10g,%.10g,%.10g,", log.step, log.epoch, log.main_loss,
                log.div_loss, log.mean_alpha);
  std::string row = buf;
  for (std::size_t i = 0; i < log.pair.size(); ++i) {
    if (i) row += ';';
    row += std::to_string(log.pair[i]);
  }
  return row;
}

}  // namespace sed
