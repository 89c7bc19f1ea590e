#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sed/bench.hpp"
#include "sed/cli.hpp"
#include "sed/config.hpp"
#include "sed/data.hpp"
#include "sed/error.hpp"
#include "sed/prediction_matrix.hpp"

namespace sed::cli {

namespace fs = std::filesystem;

namespace {

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::is_regular_file(path)) {
    throw ConfigError(what + " '" + path.string() + "' does not exist");
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

FeatureDataset load_input(const std::string& path, std::uint32_t csv_classes, const std::string& what) {
  require_file(path, what);
  return load_dataset(path, format_for(path), csv_classes);
}

bool contains(const std::vector<Strategy>& v, Strategy s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

// Flags that override fields of the config file.
struct TrainOverrides {
  std::optional<std::size_t> members, epochs, batch_size, pair_subset, hidden_dim;
  std::optional<double> lr, weight_decay, lambda, threshold;
  std::optional<std::uint64_t> seed;
  std::optional<int> depth;
  std::optional<std::string> mode, activation, config, data, ood_data, out;
  std::optional<std::uint32_t> classes;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON config file");
    app->add_option("--data", data, "training dataset (sedf or csv)");
    app->add_option("--ood-data", ood_data, "unlabelled disagreement set (a2d_explicit_ood)");
    app->add_option("--out", out, "output directory");
    app->add_option("--classes", classes, "class count for CSV input (0 = infer)");
    app->add_option("--members", members);
    app->add_option("--epochs", epochs);
    app->add_option("--batch-size", batch_size);
    app->add_option("--lr", lr);
    app->add_option("--weight-decay", weight_decay);
    app->add_option("--lambda", lambda);
    app->add_option("--pair-subset", pair_subset, "members drawn per batch for the disagreement term");
    app->add_option("--mode", mode, "sed | deep_ensemble | a2d_explicit_ood | two_stage");
    app->add_option("--seed", seed);
    app->add_option("--depth", depth, "head depth (1 or 2)");
    app->add_option("--hidden-dim", hidden_dim);
    app->add_option("--activation", activation, "relu | gelu");
    app->add_option("--threshold", threshold, "two_stage confidence threshold");
  }

  CliConfig resolve() const {
    CliConfig cfg;
    if (config) {
      require_file(*config, "config file");
      cfg = load_cli_config(*config);
    }
    TrainConfig& t = cfg.train;
    if (data) cfg.train_data = *data;
    if (ood_data) t.ood_dataset_path = *ood_data;
    if (out) cfg.out_dir = *out;
    if (classes) cfg.csv_classes = *classes;
    if (members) t.num_members = *members;
    if (epochs) t.epochs = *epochs;
    if (batch_size) t.batch_size = *batch_size;
    if (lr) t.learning_rate = *lr;
    if (weight_decay) t.weight_decay = *weight_decay;
    if (lambda) t.lambda = *lambda;
    if (pair_subset) t.pair_subset_size = *pair_subset;
    if (mode) t.mode = train_mode_from_string(*mode);
    if (seed) t.seed = *seed;
    if (depth) t.head.depth = *depth;
    if (hidden_dim) t.head.hidden_dim = *hidden_dim;
    if (activation) {
      try {
        t.head.activation = activation_from_string(*activation);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
    if (threshold) t.two_stage_threshold = *threshold;
    t.validate();
    if (!cfg.train_data) throw ConfigError("no training data: pass --data or set train_data");
    if (!cfg.out_dir) throw ConfigError("no output directory: pass --out or set out_dir");
    if (t.mode == TrainMode::a2d_explicit_ood && !t.ood_dataset_path) {
      throw ConfigError("mode a2d_explicit_ood needs an unlabelled set: pass --ood-data");
    }
    return cfg;
  }
};

struct LoadedTraining {
  FeatureDataset train;
  std::optional<FeatureDataset> ood;
};

LoadedTraining load_training(const CliConfig& cfg) {
  LoadedTraining out;
  out.train = load_input(*cfg.train_data, cfg.csv_classes, "training data");
  if (cfg.train.mode == TrainMode::a2d_explicit_ood) {
    out.ood = load_input(*cfg.train.ood_dataset_path, cfg.csv_classes, "disagreement data");
  }
  return out;
}

// ---- gen-synthetic -------------------------------------------------------

struct GenArgs {
  SyntheticParams params;
  std::string out;
};

int cmd_gen_synthetic(const GenArgs& args) {
  const SyntheticParams& p = args.params;
  if (!(p.spurious_corr >= 0.0 && p.spurious_corr <= 1.0)) {
    throw ConfigError("--spurious-corr must lie in [0, 1]");
  }
  if (p.n_train == 0 || p.n_test == 0) throw ConfigError("--n-train and --n-test must be positive");
  const SyntheticSplits splits = gen_synthetic_shortcut(p);
  const fs::path dir = args.out;
  ensure_dir(dir);
  save_dataset(splits.train, dir / "train.sedf");
  save_dataset(splits.test_id, dir / "test_id.sedf");
  save_dataset(splits.test_ood, dir / "test_ood.sedf");
  const nlohmann::json provenance = {
      {"generator", "synthetic_shortcut"},
      {"seed", p.seed},
      {"n_train", p.n_train},
      {"n_test", p.n_test},
      {"d_noise", p.d_noise},
      {"spurious_corr", p.spurious_corr},
      {"core_agreement", kCoreCueAgreement},
      {"files", {"train.sedf", "test_id.sedf", "test_ood.sedf"}}};
  write_text(dir / "provenance.json", provenance.dump(2) + "\n");
  std::cout << "wrote " << splits.train.n << "/" << splits.test_id.n << "/" << splits.test_ood.n
            << " rows to " << dir.string() << "\n";
  return kExitOk;
}

// ---- train ---------------------------------------------------------------

int cmd_train(const TrainOverrides& flags, std::size_t threads) {
  const CliConfig cfg = flags.resolve();
  const LoadedTraining data = load_training(cfg);
  const fs::path dir = *cfg.out_dir;
  ensure_dir(dir);

  std::ostringstream log;
  log << train_log_header() << '\n';
  TrainOptions options;
  options.threads = threads;
  options.on_step = [&](const StepLog& s) { log << format_train_log_row(s) << '\n'; };
  const EnsembleState state =
      train(data.train, cfg.train, data.ood ? &*data.ood : nullptr, options);

  save_checkpoint(state, dir / "checkpoint.sedc");
  write_text(dir / "train_log.csv", log.str());
  write_text(dir / "config.resolved.json", cli_config_to_json(cfg).dump(2) + "\n");
  std::cout << "trained " << state.heads.size() << " members for " << state.steps_taken
            << " steps; checkpoint at " << (dir / "checkpoint.sedc").string() << "\n";
  return kExitOk;
}

// ---- eval ----------------------------------------------------------------

struct EvalArgs {
  std::optional<std::string> config, checkpoint, predictions_dir, strategies, scores, out;
  std::vector<std::string> data;
  std::optional<std::uint32_t> classes;
};

int cmd_eval(const EvalArgs& args, std::size_t threads) {
  CliConfig cfg;
  if (args.config) {
    require_file(*args.config, "config file");
    cfg = load_cli_config(*args.config);
  }
  if (args.out) cfg.out_dir = *args.out;
  if (args.classes) cfg.csv_classes = *args.classes;
  if (args.strategies) cfg.strategies = parse_strategy_list(*args.strategies);
  if (args.scores) cfg.scores = parse_score_list(*args.scores);
  if (!args.data.empty()) {
    cfg.eval_datasets.clear();
    for (const auto& d : args.data) cfg.eval_datasets.push_back(parse_eval_set(d));
  }
  if (args.checkpoint.has_value() == args.predictions_dir.has_value()) {
    throw ConfigError("pass exactly one of --checkpoint or --predictions-dir");
  }
  if (cfg.eval_datasets.empty()) throw ConfigError("no evaluation datasets: pass --data name:tag:path");
  if (!cfg.out_dir) throw ConfigError("no output directory: pass --out or set out_dir");

  std::vector<Strategy> strategies = cfg.strategies;
  std::optional<EnsembleState> state;
  if (args.checkpoint) {
    require_file(*args.checkpoint, "checkpoint");
    state = load_checkpoint(*args.checkpoint);
  } else if (contains(strategies, Strategy::uniform_soup)) {
    std::cerr << "note: uniform_soup needs member weights; skipped for saved predictions\n";
    std::erase(strategies, Strategy::uniform_soup);
  }

  const fs::path dir = *cfg.out_dir;
  ensure_dir(dir);
  if (state) ensure_dir(dir / "predictions");

  std::vector<EvalInput> inputs;
  for (const auto& set : cfg.eval_datasets) {
    std::optional<FeatureDataset> ds;
    if (set.path) ds = load_input(*set.path, cfg.csv_classes, "dataset");
    EvalInput in;
    in.name = set.name;
    in.tag = set.tag;
    if (state) {
      if (!ds) throw ConfigError("dataset '" + set.name + "' needs a path when evaluating a checkpoint");
      if (ds->d != state->config.head.in_dim) {
        throw ConfigError("dataset '" + set.name + "' has " + std::to_string(ds->d) +
                          " features, the checkpoint expects " +
                          std::to_string(state->config.head.in_dim));
      }
      // Scores are computed on exactly what the SEDP file holds, so
      // re-evaluating saved predictions reproduces them.
      in.predictions = quantize_to_float(
          PredictionMatrix::from_logits(ensemble_logits(state->heads, *ds, threads)));
      save_predictions(in.predictions, dir / "predictions" / (set.name + ".sedp"));
      if (contains(strategies, Strategy::uniform_soup)) {
        in.soup_predictions = predict(uniform_soup(state->heads), *ds);
      }
    } else {
      const fs::path file = fs::path(*args.predictions_dir) / (set.name + ".sedp");
      require_file(file, "prediction file");
      in.predictions = load_predictions(file);
      if (ds && ds->n != in.predictions.rows()) {
        throw ConfigError("dataset '" + set.name + "' has " + std::to_string(ds->n) +
                          " rows but its predictions have " +
                          std::to_string(in.predictions.rows()));
      }
    }
    if (ds) {
      in.labels = ds->labels;
      in.groups = ds->groups;
    }
    inputs.push_back(std::move(in));
  }

  nlohmann::json echo = {{"datasets", nlohmann::json::array()},
                         {"strategies", nlohmann::json::array()},
                         {"scores", nlohmann::json::array()}};
  for (const auto& set : cfg.eval_datasets) {
    echo["datasets"].push_back({{"name", set.name}, {"tag", to_string(set.tag)}});
  }
  for (auto s : strategies) echo["strategies"].push_back(to_string(s));
  for (auto s : cfg.scores) echo["scores"].push_back(to_string(s));
  if (state) {
    echo["members"] = state->config.num_members;
    echo["seed"] = state->config.seed;
  }

  const Report report = evaluate(inputs, strategies, cfg.scores, echo);
  std::string text = report.to_text();
  if (contains(strategies, Strategy::oracle)) {
    text = std::string(kOracleWarning) + "\n\n" + text;
  }
  write_text(dir / "report.json", report.to_json().dump(2) + "\n");
  write_text(dir / "report.txt", text);
  std::cout << text;
  return kExitOk;
}

// ---- sweep ---------------------------------------------------------------

struct SweepArgs {
  TrainOverrides train;
  std::string grid;
  std::optional<std::string> seeds, strategies, scores;
  std::vector<std::string> eval;
};

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc{} || ptr != item.data() + item.size()) {
      throw ConfigError("malformed seed '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("--seeds is empty");
  return out;
}

int cmd_sweep(const SweepArgs& args, std::size_t threads) {
  SweepSpec spec = parse_sweep_grid(args.grid);
  CliConfig cfg = args.train.resolve();
  if (args.strategies) cfg.strategies = parse_strategy_list(*args.strategies);
  if (args.scores) cfg.scores = parse_score_list(*args.scores);
  if (!args.eval.empty()) {
    cfg.eval_datasets.clear();
    for (const auto& d : args.eval) cfg.eval_datasets.push_back(parse_eval_set(d));
  }
  if (cfg.eval_datasets.empty()) throw ConfigError("no evaluation datasets: pass --eval name:tag:path");
  spec.seeds = args.seeds ? parse_seed_list(*args.seeds) : std::vector<std::uint64_t>{cfg.train.seed};

  const LoadedTraining data = load_training(cfg);
  std::vector<FeatureDataset> eval_data;
  eval_data.reserve(cfg.eval_datasets.size());
  for (const auto& set : cfg.eval_datasets) {
    if (!set.path) throw ConfigError("sweep dataset '" + set.name + "' needs a path");
    eval_data.push_back(load_input(*set.path, cfg.csv_classes, "dataset"));
  }
  std::vector<EvalDataset> sets;
  for (std::size_t i = 0; i < eval_data.size(); ++i) {
    sets.push_back({cfg.eval_datasets[i].name, cfg.eval_datasets[i].tag, &eval_data[i]});
  }

  const SweepResult result = sweep(spec, cfg.train, data.train, data.ood ? &*data.ood : nullptr,
                                   sets, cfg.strategies, cfg.scores, threads);

  const fs::path dir = *cfg.out_dir;
  ensure_dir(dir / "reports");
  write_text(dir / "sweep.csv", result.to_csv());
  std::size_t k = 0;
  for (const double value : spec.values) {
    for (const std::uint64_t seed : spec.seeds) {
      char name[96];
      std::snprintf(name, sizeof name, "%s_%g_seed%llu.json", std::string(to_string(spec.param)).c_str(),
                    value, static_cast<unsigned long long>(seed));
      write_text(dir / "reports" / name, result.reports[k++].to_json().dump(2) + "\n");
    }
  }
  write_text(dir / "config.resolved.json", cli_config_to_json(cfg).dump(2) + "\n");
  std::cout << result.to_csv();
  return kExitOk;
}

// ---- soup ----------------------------------------------------------------

int cmd_soup(const std::string& checkpoint, const std::string& out) {
  require_file(checkpoint, "checkpoint");
  const EnsembleState ens = load_checkpoint(checkpoint);
  EnsembleState soup;
  soup.config = ens.config;
  soup.config.num_members = 1;
  soup.heads.push_back(uniform_soup(ens.heads));
  const fs::path path = out;
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  save_checkpoint(soup, path);
  std::cout << "averaged " << ens.heads.size() << " members into " << path.string() << "\n";
  return kExitOk;
}

// ---- score ---------------------------------------------------------------

int cmd_score(const std::string& predictions, const std::string& scores,
              const std::optional<std::string>& out) {
  require_file(predictions, "prediction file");
  const std::vector<ScoreId> ids = parse_score_list(scores);
  const PredictionMatrix pm = load_predictions(predictions);
  std::vector<ScoreVector> columns;
  for (auto id : ids) columns.push_back(compute_score(id, pm));

  std::ostringstream csv;
  csv << "row";
  for (const auto& c : columns) csv << ',' << to_string(c.id);
  csv << '\n';
  char buf[40];
  for (std::size_t i = 0; i < pm.rows(); ++i) {
    csv << i;
    for (const auto& c : columns) {
      std::snprintf(buf, sizeof buf, "%.17g", c.values[i]);
      csv << ',' << buf;
    }
    csv << '\n';
  }
  if (out) {
    const fs::path path = *out;
    if (path.has_parent_path()) ensure_dir(path.parent_path());
    write_text(path, csv.str());
  } else {
    std::cout << csv.str();
  }
  return kExitOk;
}

// ---- bench ---------------------------------------------------------------

int cmd_bench(std::vector<std::string> cases, const std::optional<std::string>& out, bool check,
              std::size_t threads) {
  if (cases.empty() || (cases.size() == 1 && cases[0] == "all")) cases = bench_case_names();
  std::vector<BenchCase> plan;
  for (const auto& name : cases) plan.push_back(default_bench_case(name));
  if (out) ensure_dir(*out);
  bool all_passed = true;
  for (const auto& bench : plan) {
    const BenchOutcome outcome = run_bench(bench, threads);
    all_passed = all_passed && outcome.passed;
    std::cout << (outcome.passed ? "PASS " : "FAIL ") << outcome.name << ": " << outcome.property
              << " | " << outcome.summary << "\n";
    if (out) write_text(fs::path(*out) / (outcome.name + ".csv"), outcome.to_csv());
  }
  return (check && !all_passed) ? 1 : kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Ensemble training with sample-wise disagreement, scoring and evaluation", "sed"};
  app.require_subcommand(1);
  std::optional<std::size_t> threads_flag;

  auto* gen = app.add_subcommand("gen-synthetic", "write the synthetic shortcut benchmark");
  GenArgs gen_args;
  gen->add_option("--seed", gen_args.params.seed);
  gen->add_option("--n-train", gen_args.params.n_train);
  gen->add_option("--n-test", gen_args.params.n_test, "rows in each test split");
  gen->add_option("--d-noise", gen_args.params.d_noise);
  gen->add_option("--spurious-corr", gen_args.params.spurious_corr);
  gen->add_option("--out", gen_args.out, "output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "train an ensemble");
  TrainOverrides train_args;
  train_args.attach(train_cmd);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint or saved predictions");
  EvalArgs eval_args;
  eval->add_option("--config", eval_args.config);
  eval->add_option("--checkpoint", eval_args.checkpoint);
  eval->add_option("--predictions-dir", eval_args.predictions_dir, "directory of <name>.sedp files");
  eval->add_option("--data", eval_args.data, "name:tag[:path], tag = id | ood_covariate | ood_semantic");
  eval->add_option("--strategies", eval_args.strategies, "oracle,prediction_ensemble,uniform_soup");
  eval->add_option("--scores", eval_args.scores, "comma list or 'all'");
  eval->add_option("--out", eval_args.out);
  eval->add_option("--classes", eval_args.classes);

  auto* sweep_cmd = app.add_subcommand("sweep", "train and evaluate over a lambda or members grid");
  SweepArgs sweep_args;
  sweep_args.train.attach(sweep_cmd);
  sweep_cmd->add_option("--grid", sweep_args.grid, "lambda=v1,v2,... or members=v1,v2,...")->required();
  sweep_cmd->add_option("--seeds", sweep_args.seeds, "comma list shared by every grid point");
  sweep_cmd->add_option("--eval", sweep_args.eval, "name:tag:path");
  sweep_cmd->add_option("--strategies", sweep_args.strategies);
  sweep_cmd->add_option("--scores", sweep_args.scores);

  auto* soup = app.add_subcommand("soup", "average member weights into a one-member checkpoint");
  std::string soup_in, soup_out;
  soup->add_option("--checkpoint", soup_in)->required();
  soup->add_option("--out", soup_out, "output checkpoint file")->required();

  auto* score = app.add_subcommand("score", "per-sample scores of a SEDP file as CSV");
  std::string score_in, score_list = "all";
  std::optional<std::string> score_out;
  score->add_option("--predictions", score_in)->required();
  score->add_option("--scores", score_list);
  score->add_option("--out", score_out, "CSV path (stdout when omitted)");

  auto* bench = app.add_subcommand("bench", "run the desk-scale benchmark cases");
  std::vector<std::string> bench_cases;
  std::optional<std::string> bench_out;
  bool bench_check = false;
  bench->add_option("--case", bench_cases, "diversification | pds-detection | step-cost | all");
  bench->add_option("--out", bench_out, "directory for <case>.csv");
  bench->add_flag("--check", bench_check, "exit 1 when a case fails");

  for (auto* sub : {gen, train_cmd, eval, sweep_cmd, soup, score, bench}) {
    sub->add_option("--threads", threads_flag, "worker threads (default: SED_THREADS or 1)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    const std::size_t threads = threads_flag ? *threads_flag : default_threads();
    if (threads == 0) throw ConfigError("--threads must be positive");
    if (gen->parsed()) return cmd_gen_synthetic(gen_args);
    if (train_cmd->parsed()) return cmd_train(train_args, threads);
    if (eval->parsed()) return cmd_eval(eval_args, threads);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_args, threads);
    if (soup->parsed()) return cmd_soup(soup_in, soup_out);
    if (score->parsed()) return cmd_score(score_in, score_list, score_out);
    if (bench->parsed()) return cmd_bench(bench_cases, bench_out, bench_check, threads);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}

}  // namespace sed::cli
