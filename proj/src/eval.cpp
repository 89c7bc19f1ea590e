#include "sed/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "sed/config.hpp"
#include "sed/error.hpp"

namespace sed {

double accuracy(std::span<const std::uint32_t> preds, std::span<const std::uint32_t> labels) {
  if (preds.size() != labels.size()) throw std::invalid_argument("accuracy: length mismatch");
  if (preds.empty()) throw std::invalid_argument("accuracy of an empty set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

double worst_group_accuracy(std::span<const std::uint32_t> preds,
                            std::span<const std::uint32_t> labels,
                            std::span<const std::uint32_t> groups) {
  if (preds.size() != labels.size()) throw std::invalid_argument("accuracy: length mismatch");
  if (groups.size() != preds.size()) throw std::invalid_argument("worst-group accuracy: missing groups");
  if (preds.empty()) throw std::invalid_argument("accuracy of an empty set");
  std::map<std::uint32_t, std::pair<std::size_t, std::size_t>> tally;  // group -> (correct, total)
  for (std::size_t i = 0; i < preds.size(); ++i) {
    auto& [correct, total] = tally[groups[i]];
    correct += preds[i] == labels[i] ? 1 : 0;
    total += 1;
  }
  double worst = 1.0;
  for (const auto& [group, counts] : tally) {
    worst = std::min(worst, static_cast<double>(counts.first) / static_cast<double>(counts.second));
  }
  return worst;
}

double auroc(const DetectionTask& task) {
  if (task.id_scores.empty() || task.ood_scores.empty()) {
    throw std::invalid_argument("auroc needs non-empty ID and OOD score sets");
  }
  const double sign = task.orientation == Orientation::higher_is_ood ? 1.0 : -1.0;
  struct Entry {
    double score;
    bool ood;
  };
  std::vector<Entry> all;
  all.reserve(task.id_scores.size() + task.ood_scores.size());
  for (double s : task.id_scores) all.push_back({sign * s, false});
  for (double s : task.ood_scores) all.push_back({sign * s, true});
  for (const auto& e : all) {
    if (std::isnan(e.score)) throw NumericalError("auroc: NaN score");
  }
  std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) { return a.score < b.score; });

  // Twice the (1-based, tie-averaged) rank sum of OOD entries, kept integral.
  std::uint64_t ood_rank_sum_x2 = 0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i + 1;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    const std::uint64_t rank_x2 = static_cast<std::uint64_t>(i + 1 + j);  // (i+1) + j
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].ood) ood_rank_sum_x2 += rank_x2;
    }
    i = j;
  }
  const std::uint64_t n_ood = task.ood_scores.size();
  const std::uint64_t n_id = task.id_scores.size();
  const std::uint64_t u_x2 = ood_rank_sum_x2 - n_ood * (n_ood + 1);
  return (static_cast<double>(u_x2) / 2.0) / (static_cast<double>(n_id) * static_cast<double>(n_ood));
}

std::string_view to_string(DatasetTag tag) {
  switch (tag) {
    case DatasetTag::id: return "id";
    case DatasetTag::ood_covariate: return "ood_covariate";
    case DatasetTag::ood_semantic: return "ood_semantic";
  }
  return "id";
}

DatasetTag dataset_tag_from_string(std::string_view name) {
  if (name == "id") return DatasetTag::id;
  if (name == "ood_covariate") return DatasetTag::ood_covariate;
  if (name == "ood_semantic") return DatasetTag::ood_semantic;
  throw ConfigError("unknown dataset tag '" + std::string(name) +
                    "' (expected id, ood_covariate or ood_semantic)");
}

EvalInput make_eval_input(std::span<const HeadParams> heads, std::string name, DatasetTag tag,
                          const FeatureDataset& ds, bool with_soup, std::size_t threads) {
  EvalInput in;
  in.name = std::move(name);
  in.tag = tag;
  in.predictions = PredictionMatrix::from_logits(ensemble_logits(heads, ds, threads));
  in.labels = ds.labels;
  in.groups = ds.groups;
  if (with_soup) in.soup_predictions = predict(uniform_soup(heads), ds);
  return in;
}

namespace {

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

bool is_ood(DatasetTag tag) { return tag != DatasetTag::id; }

}  // namespace

Report evaluate(std::span<const EvalInput> inputs, std::span<const Strategy> strategies,
                std::span<const ScoreId> scores, nlohmann::json config_echo) {
  Report report;
  report.config = std::move(config_echo);
  const EvalInput* reference = nullptr;
  for (const auto& in : inputs) {
    if (in.tag == DatasetTag::id) {
      reference = &in;
      break;
    }
  }

  std::vector<std::vector<ScoreVector>> per_input_scores;
  for (const auto& in : inputs) {
    DatasetReport dr;
    dr.name = in.name;
    dr.tag = in.tag;
    dr.n = in.predictions.rows();
    dr.mean_unique = mean_of(count_unique(in.predictions).values);
    dr.mean_pds = mean_of(score_pds(in.predictions).values);
    if (in.labels) {
      for (Strategy s : strategies) {
        StrategyMetrics sm;
        sm.strategy = s;
        std::vector<std::uint32_t> preds;
        if (s == Strategy::oracle) {
          const OracleChoice choice = oracle_select(in.predictions, *in.labels);
          sm.chosen_member = choice.member;
          preds = member_predictions(in.predictions, choice.member);
        } else if (s == Strategy::prediction_ensemble) {
          preds = argmax_rows(prediction_ensemble_logits(in.predictions), in.predictions.classes());
        } else {
          if (!in.soup_predictions) continue;
          preds = *in.soup_predictions;
        }
        sm.accuracy = accuracy(preds, *in.labels);
        if (in.groups) sm.worst_group_accuracy = worst_group_accuracy(preds, *in.labels, *in.groups);
        dr.strategies.push_back(sm);
      }
    }
    report.datasets.push_back(std::move(dr));

    std::vector<ScoreVector> computed;
    for (ScoreId id : scores) computed.push_back(compute_score(id, in.predictions));
    per_input_scores.push_back(std::move(computed));
  }

  const bool any_ood = std::any_of(inputs.begin(), inputs.end(),
                                   [](const EvalInput& in) { return is_ood(in.tag); });
  if (any_ood && !scores.empty()) {
    if (reference == nullptr) {
      throw ConfigError("OOD detection needs an evaluation dataset tagged 'id'");
    }
    const std::size_t ref_index = static_cast<std::size_t>(reference - inputs.data());
    for (std::size_t d = 0; d < inputs.size(); ++d) {
      if (!is_ood(inputs[d].tag)) continue;
      DetectionReport det;
      det.ood_name = inputs[d].name;
      det.id_name = reference->name;
      for (std::size_t s = 0; s < scores.size(); ++s) {
        DetectionTask task{per_input_scores[ref_index][s].values, per_input_scores[d][s].values,
                           orientation_of(scores[s])};
        det.aurocs.push_back({scores[s], auroc(task)});
      }
      report.detection.push_back(std::move(det));
    }
  }
  return report;
}

nlohmann::json Report::to_json() const {
  nlohmann::json j;
  j["datasets"] = nlohmann::json::array();
  for (const auto& d : datasets) {
    nlohmann::json dj;
    dj["name"] = d.name;
    dj["tag"] = to_string(d.tag);
    dj["n"] = d.n;
    dj["mean_unique"] = d.mean_unique;
    dj["mean_pds"] = d.mean_pds;
    dj["strategies"] = nlohmann::json::array();
    for (const auto& s : d.strategies) {
      nlohmann::json sj;
      sj["strategy"] = to_string(s.strategy);
      sj["accuracy"] = s.accuracy;
      if (s.worst_group_accuracy) sj["worst_group_accuracy"] = *s.worst_group_accuracy;
      if (s.chosen_member) sj["chosen_member"] = *s.chosen_member;
      dj["strategies"].push_back(sj);
    }
    j["datasets"].push_back(dj);
  }
  j["detection"] = nlohmann::json::array();
  for (const auto& det : detection) {
    nlohmann::json dj;
    dj["ood"] = det.ood_name;
    dj["id"] = det.id_name;
    for (const auto& a : det.aurocs) dj["auroc"][std::string(to_string(a.score))] = a.auroc;
    j["detection"].push_back(dj);
  }
  j["config"] = config;
  return j;
}

std::string Report::to_text() const {
  std::ostringstream out;
  char line[256];
  out << "Accuracy\n";
  std::snprintf(line, sizeof line, "  %-16s %-14s %-20s %9s %9s %7s %9s\n", "dataset", "tag",
                "strategy", "acc", "worst_grp", "member", "mean_pds");
  out << line;
  for (const auto& d : datasets) {
    if (d.strategies.empty()) {
      std::snprintf(line, sizeof line, "  %-16s %-14s %-20s %9s %9s %7s %9.4f\n", d.name.c_str(),
                    std::string(to_string(d.tag)).c_str(), "-", "-", "-", "-", d.mean_pds);
      out << line;
    }
    for (const auto& s : d.strategies) {
      const std::string wg =
          s.worst_group_accuracy ? std::to_string(*s.worst_group_accuracy).substr(0, 6) : "-";
      const std::string member = s.chosen_member ? std::to_string(*s.chosen_member) : "-";
      std::snprintf(line, sizeof line, "  %-16s %-14s %-20s %9.4f %9s %7s %9.4f\n", d.name.c_str(),
                    std::string(to_string(d.tag)).c_str(),
                    std::string(to_string(s.strategy)).c_str(), s.accuracy, wg.c_str(),
                    member.c_str(), d.mean_pds);
      out << line;
    }
  }
  out << "\nDiversity\n";
  for (const auto& d : datasets) {
    std::snprintf(line, sizeof line, "  %-16s #unique %.4f  PDS %.4f\n", d.name.c_str(),
                  d.mean_unique, d.mean_pds);
    out << line;
  }
  if (!detection.empty()) {
    out << "\nOOD detection AUROC\n";
    for (const auto& det : detection) {
      for (const auto& a : det.aurocs) {
        std::snprintf(line, sizeof line, "  %-16s vs %-16s %-20s %.4f\n", det.ood_name.c_str(),
                      det.id_name.c_str(), std::string(to_string(a.score)).c_str(), a.auroc);
        out << line;
      }
    }
  }
  return out.str();
}

std::string_view to_string(SweepParam p) { return p == SweepParam::lambda ? "lambda" : "members"; }

SweepSpec parse_sweep_grid(std::string_view grid) {
  const auto eq = grid.find('=');
  if (eq == std::string_view::npos) throw ConfigError("grid must look like lambda=v1,v2 or members=v1,v2");
  const std::string_view key = grid.substr(0, eq);
  SweepSpec spec;
  if (key == "lambda") {
    spec.param = SweepParam::lambda;
  } else if (key == "members") {
    spec.param = SweepParam::members;
  } else {
    throw ConfigError("unknown grid parameter '" + std::string(key) + "'");
  }
  std::string_view rest = grid.substr(eq + 1);
  while (true) {
    const auto comma = rest.find(',');
    const std::string_view item = rest.substr(0, comma);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), value);
    if (item.empty() || ec != std::errc{} || ptr != item.data() + item.size() || !std::isfinite(value)) {
      throw ConfigError("malformed grid value '" + std::string(item) + "'");
    }
    if (spec.param == SweepParam::lambda && value < 0.0) throw ConfigError("lambda values must be >= 0");
    if (spec.param == SweepParam::members && (value < 1.0 || value != std::floor(value))) {
      throw ConfigError("members values must be positive integers");
    }
    spec.values.push_back(value);
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return spec;
}

std::string SweepResult::to_csv() const {
  std::ostringstream out;
  out << "param";
  for (const auto& c : columns) out << ',' << c;
  out << '\n';
  char buf[64];
  for (const auto& row : rows) {
    out << to_string(param);
    for (double v : row) {
      std::snprintf(buf, sizeof buf, "%.10g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
  return out.str();
}

SweepResult sweep(const SweepSpec& spec, const TrainConfig& base, const FeatureDataset& train_ds,
                  const FeatureDataset* ood_train, std::span<const EvalDataset> eval_sets,
                  std::span<const Strategy> strategies, std::span<const ScoreId> scores,
                  std::size_t threads) {
  if (spec.values.empty()) throw ConfigError("sweep grid is empty");
  const std::vector<std::uint64_t> seeds =
      spec.seeds.empty() ? std::vector<std::uint64_t>{base.seed} : spec.seeds;
  const bool soup = std::find(strategies.begin(), strategies.end(), Strategy::uniform_soup) !=
                    strategies.end();

  SweepResult result;
  result.param = spec.param;
  for (const double value : spec.values) {
    std::vector<std::vector<double>> per_seed;
    for (const std::uint64_t seed : seeds) {
      TrainConfig cfg = base;
      cfg.seed = seed;
      if (spec.param == SweepParam::lambda) {
        cfg.lambda = value;
      } else {
        cfg.num_members = static_cast<std::size_t>(value);
      }
      const EnsembleState state = train(train_ds, cfg, ood_train, TrainOptions{threads, {}});
      std::vector<EvalInput> inputs;
      for (const auto& set : eval_sets) {
        inputs.push_back(make_eval_input(state.heads, set.name, set.tag, *set.data, soup, threads));
      }
      Report report = evaluate(inputs, strategies, scores, train_config_to_json(cfg));

      std::vector<std::string> columns = {"value"};
      std::vector<double> row = {value};
      for (const auto& d : report.datasets) {
        columns.push_back("mean_pds_" + d.name);
        row.push_back(d.mean_pds);
        columns.push_back("mean_unique_" + d.name);
        row.push_back(d.mean_unique);
      }
      for (const auto& det : report.detection) {
        for (const auto& a : det.aurocs) {
          columns.push_back("auroc_" + std::string(to_string(a.score)) + "_" + det.ood_name);
          row.push_back(a.auroc);
        }
      }
      for (const auto& d : report.datasets) {
        for (const auto& s : d.strategies) {
          columns.push_back("acc_" + std::string(to_string(s.strategy)) + "_" + d.name);
          row.push_back(s.accuracy);
        }
      }
      if (result.columns.empty()) result.columns = columns;
      per_seed.push_back(std::move(row));
      result.reports.push_back(std::move(report));
    }
    std::vector<double> mean(per_seed.front().size(), 0.0);
    for (const auto& r : per_seed) {
      for (std::size_t i = 0; i < r.size(); ++i) mean[i] += r[i];
    }
    for (double& v : mean) v /= static_cast<double>(per_seed.size());
    result.rows.push_back(std::move(mean));
  }
  return result;
}

}  // namespace sed
