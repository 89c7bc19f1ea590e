#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sed/aggregate.hpp"
#include "sed/cli.hpp"
#include "sed/data.hpp"
#include "sed/trainer.hpp"

using namespace sed;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "sed");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  Run r;
  r.code = cli::run_cli(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "sed_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  for (std::string cell; std::getline(in, cell, ',');) out.push_back(cell);
  return out;
}

// Small synthetic splits shared by the tests below.
const fs::path& data_dir() {
  static const fs::path dir = [] {
    const fs::path d = fresh_dir("data");
    const auto r = run({"gen-synthetic", "--seed", "3", "--n-train", "600", "--n-test", "200",
                        "--d-noise", "2", "--out", d.string()});
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

std::string data(const char* file) { return (data_dir() / file).string(); }

// Flags may be given once; `overrides` replace the defaults below.
std::vector<std::string> train_args(const fs::path& out,
                                    std::vector<std::pair<std::string, std::string>> overrides = {}) {
  std::vector<std::pair<std::string, std::string>> flags = {
      {"--data", data("train.sedf")}, {"--out", out.string()}, {"--members", "3"}, {"--epochs", "2"},
      {"--batch-size", "32"},         {"--lr", "1e-3"},        {"--seed", "9"}};
  for (auto& [k, v] : overrides) {
    auto it = std::find_if(flags.begin(), flags.end(), [&](const auto& f) { return f.first == k; });
    if (it == flags.end()) {
      flags.emplace_back(k, v);
    } else {
      it->second = v;
    }
  }
  std::vector<std::string> args = {"train"};
  for (auto& [k, v] : flags) {
    args.push_back(k);
    args.push_back(v);
  }
  return args;
}

}  // namespace

TEST_CASE("gen-synthetic writes three deterministic splits") {
  const auto a = fresh_dir("gen_a"), b = fresh_dir("gen_b");
  const std::vector<std::string> flags = {"--seed", "1", "--n-train", "1000", "--spurious-corr", "0.95"};
  auto args_a = flags, args_b = flags;
  args_a.insert(args_a.begin(), "gen-synthetic");
  args_b.insert(args_b.begin(), "gen-synthetic");
  args_a.insert(args_a.end(), {"--out", a.string()});
  args_b.insert(args_b.end(), {"--out", b.string()});
  REQUIRE(run(args_a).code == 0);
  REQUIRE(run(args_b).code == 0);
  for (const char* f : {"train.sedf", "test_id.sedf", "test_ood.sedf"}) {
    REQUIRE(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK(load_dataset(a / "train.sedf").n == 1000);
  CHECK(read_json(a / "provenance.json").at("spurious_corr") == 0.95);

  const auto bad = run({"gen-synthetic", "--spurious-corr", "1.5", "--out", fresh_dir("gen_bad").string()});
  CHECK(bad.code == cli::kExitUsage);
  CHECK(bad.err.find("spurious") != std::string::npos);
  CHECK(run({"gen-synthetic"}).code == cli::kExitUsage);
}

TEST_CASE("train writes a checkpoint, a log and the resolved config") {
  const auto dir = fresh_dir("train_sed");
  const auto r = run(train_args(dir, {{"--members", "5"}, {"--lambda", "1"}}));
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "checkpoint.sedc"));
  const auto log = lines(slurp(dir / "train_log.csv"));
  REQUIRE(log.size() == 1 + 2 * (600 / 32 + 1));
  CHECK(log[0] == train_log_header());
  const auto last = split(log.back());
  CHECK(std::isfinite(std::stod(last[2])));
  CHECK(std::isfinite(std::stod(last[3])));
  CHECK(load_checkpoint(dir / "checkpoint.sedc").heads.size() == 5);

  // Re-running from the echoed config reproduces the checkpoint byte for byte.
  const auto echo = dir / "config.resolved.json";
  const auto again = fresh_dir("train_sed_again");
  REQUIRE(run({"train", "--config", echo.string(), "--out", again.string()}).code == 0);
  CHECK(slurp(again / "checkpoint.sedc") == slurp(dir / "checkpoint.sedc"));
  auto first = read_json(echo), second = read_json(again / "config.resolved.json");
  first.erase("out_dir");
  second.erase("out_dir");
  CHECK(first == second);
}

TEST_CASE("train is idempotent across thread counts") {
  const auto a = fresh_dir("train_t1"), b = fresh_dir("train_t3");
  auto args_a = train_args(a), args_b = train_args(b);
  args_a.insert(args_a.end(), {"--threads", "1"});
  args_b.insert(args_b.end(), {"--threads", "3"});
  REQUIRE(run(args_a).code == 0);
  REQUIRE(run(args_b).code == 0);
  CHECK(slurp(a / "checkpoint.sedc") == slurp(b / "checkpoint.sedc"));
  CHECK(slurp(a / "train_log.csv") == slurp(b / "train_log.csv"));
}

TEST_CASE("deep ensemble logs no disagreement") {
  const auto dir = fresh_dir("train_de");
  auto args = train_args(dir);
  args.insert(args.end(), {"--mode", "deep_ensemble"});
  REQUIRE(run(args).code == 0);
  const auto log = lines(slurp(dir / "train_log.csv"));
  for (std::size_t i = 1; i < log.size(); ++i) CHECK(std::stod(split(log[i])[3]) == 0.0);
}

TEST_CASE("train errors map to exit codes") {
  auto args = train_args(fresh_dir("train_err"));
  args.insert(args.end(), {"--mode", "a2d_explicit_ood"});
  CHECK(run(args).code == cli::kExitUsage);

  args = train_args(fresh_dir("train_explicit"));
  args.insert(args.end(), {"--mode", "a2d_explicit_ood", "--ood-data", data("test_ood.sedf")});
  CHECK(run(args).code == 0);

  const auto diverged = run(train_args(fresh_dir("train_nan"), {{"--lr", "1e300"}}));
  CHECK(diverged.code == cli::kExitNumerical);
  CHECK(diverged.err.find("step") != std::string::npos);

  args = train_args(fresh_dir("train_missing"));
  args[2] = (data_dir() / "absent.sedf").string();
  CHECK(run(args).code == cli::kExitUsage);

  const auto corrupt = fresh_dir("train_corrupt") / "bad.sedf";
  std::ofstream(corrupt) << "SEDFgarbage";
  args = train_args(fresh_dir("train_corrupt_out"));
  args[2] = corrupt.string();
  CHECK(run(args).code == cli::kExitIo);

  CHECK(run(train_args(fresh_dir("train_flag"), {{"--members", "abc"}})).code == cli::kExitUsage);

  const auto cfg = fresh_dir("train_cfg") / "c.json";
  std::ofstream(cfg) << R"({"members": 2, "epochz": 3})";
  CHECK(run({"train", "--config", cfg.string(), "--data", data("train.sedf"), "--out",
             fresh_dir("train_cfg_out").string()})
            .code == cli::kExitUsage);
}

TEST_CASE("eval reports, persists predictions and re-scores them identically") {
  const auto model = fresh_dir("eval_model");
  REQUIRE(run(train_args(model)).code == 0);
  const auto out = fresh_dir("eval_out");
  const std::vector<std::string> sets = {"--data", "id:id:" + data("test_id.sedf"), "--data",
                                         "ood:ood_covariate:" + data("test_ood.sedf")};
  std::vector<std::string> args = {"eval", "--checkpoint", (model / "checkpoint.sedc").string(),
                                   "--strategies", "prediction_ensemble", "--scores", "pds,bma",
                                   "--out", out.string()};
  args.insert(args.end(), sets.begin(), sets.end());
  const auto r = run(args);
  REQUIRE(r.code == 0);
  CHECK(r.out.find(cli::kOracleWarning) == std::string::npos);

  const auto report = read_json(out / "report.json");
  REQUIRE(report.at("datasets").size() == 2);
  for (const auto& d : report.at("datasets")) CHECK(d.at("strategies").size() == 1);
  REQUIRE(report.at("detection").size() == 1);
  CHECK(report.at("detection")[0].at("auroc").size() == 2);
  CHECK(fs::exists(out / "predictions" / "id.sedp"));
  CHECK(fs::exists(out / "report.txt"));

  const auto again = fresh_dir("eval_again");
  std::vector<std::string> rescore = {"eval", "--predictions-dir", (out / "predictions").string(),
                                      "--strategies", "prediction_ensemble", "--scores", "pds,bma",
                                      "--out", again.string()};
  rescore.insert(rescore.end(), sets.begin(), sets.end());
  REQUIRE(run(rescore).code == 0);
  const auto second = read_json(again / "report.json");
  CHECK(second.at("detection") == report.at("detection"));
  CHECK(second.at("datasets")[1].at("strategies") == report.at("datasets")[1].at("strategies"));

  // Same command twice gives the same bytes.
  const auto twice = fresh_dir("eval_twice");
  auto args2 = args;
  args2[8] = twice.string();
  REQUIRE(run(args2).code == 0);
  CHECK(slurp(twice / "report.json") == slurp(out / "report.json"));
  CHECK(slurp(twice / "predictions" / "ood.sedp") == slurp(out / "predictions" / "ood.sedp"));
}

TEST_CASE("eval oracle banner and error paths") {
  const auto model = fresh_dir("eval_oracle_model");
  REQUIRE(run(train_args(model)).code == 0);
  const auto ckpt = (model / "checkpoint.sedc").string();
  const auto out = fresh_dir("eval_oracle");
  const auto r = run({"eval", "--checkpoint", ckpt, "--strategies", "oracle,uniform_soup", "--out",
                      out.string(), "--data", "id:id:" + data("test_id.sedf"), "--data",
                      "ood:ood_covariate:" + data("test_ood.sedf")});
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind(std::string(cli::kOracleWarning), 0) == 0);
  CHECK(slurp(out / "report.txt").rfind(std::string(cli::kOracleWarning), 0) == 0);
  const auto report = read_json(out / "report.json");
  const auto& ood = report.at("datasets")[1].at("strategies");
  REQUIRE(ood.size() == 2);
  CHECK(ood[0].contains("chosen_member"));
  CHECK(ood[0].contains("worst_group_accuracy"));
  CHECK(ood[1].at("strategy") == "uniform_soup");

  const auto bad_out = fresh_dir("eval_bad").string();
  CHECK(run({"eval", "--checkpoint", (model / "nope.sedc").string(), "--out", bad_out, "--data",
             "id:id:" + data("test_id.sedf")})
            .code == cli::kExitUsage);
  CHECK(run({"eval", "--checkpoint", ckpt, "--out", bad_out, "--data", "id:id:" + data("nope.sedf")})
            .code == cli::kExitUsage);
  CHECK(run({"eval", "--checkpoint", ckpt, "--out", bad_out}).code == cli::kExitUsage);
  // Detection scores need an id-tagged reference set.
  CHECK(run({"eval", "--checkpoint", ckpt, "--out", bad_out, "--data", "ood:ood_covariate:" + data("test_ood.sedf")})
            .code == cli::kExitUsage);
  CHECK(run({"eval", "--checkpoint", ckpt, "--out", bad_out, "--data", "id:sideways:" + data("test_id.sedf")})
            .code == cli::kExitUsage);
  CHECK(run({"eval", "--checkpoint", ckpt, "--out", bad_out, "--scores", "pds,vibes", "--data",
             "id:id:" + data("test_id.sedf")})
            .code == cli::kExitUsage);
}

TEST_CASE("sweep writes one csv row per grid value") {
  const auto base = [](const fs::path& out, const std::string& grid) {
    return std::vector<std::string>{"sweep", "--data", data("train.sedf"), "--out", out.string(),
                                    "--epochs", "1", "--members", "3", "--batch-size", "64",
                                    "--grid", grid, "--eval", "id:id:" + data("test_id.sedf"),
                                    "--eval", "ood:ood_covariate:" + data("test_ood.sedf"),
                                    "--scores", "pds"};
  };
  const auto lam = fresh_dir("sweep_lambda");
  REQUIRE(run(base(lam, "lambda=0,0.1,1")).code == 0);
  const auto rows = lines(slurp(lam / "sweep.csv"));
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].rfind("param,value,", 0) == 0);
  CHECK(split(rows[2])[0] == "lambda");
  CHECK(split(rows[2])[1] == "0.1");
  CHECK(fs::exists(lam / "reports"));
  CHECK(fs::exists(lam / "config.resolved.json"));

  const auto mem = fresh_dir("sweep_members");
  auto args = base(mem, "members=2,5");
  args.insert(args.end(), {"--seeds", "1,2"});
  REQUIRE(run(args).code == 0);
  CHECK(lines(slurp(mem / "sweep.csv")).size() == 3);
  std::size_t reports = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(mem / "reports")) ++reports;
  CHECK(reports == 4);

  CHECK(run(base(fresh_dir("sweep_bad"), "lambda=0,,x")).code == cli::kExitUsage);
  CHECK(run(base(fresh_dir("sweep_bad2"), "width=3")).code == cli::kExitUsage);
  args = base(fresh_dir("sweep_bad3"), "lambda=0");
  args.insert(args.end(), {"--seeds", "1,two"});
  CHECK(run(args).code == cli::kExitUsage);
}

TEST_CASE("soup writes a one-member checkpoint") {
  const auto model = fresh_dir("soup_model");
  REQUIRE(run(train_args(model)).code == 0);
  const auto file = model / "soup.sedc";
  REQUIRE(run({"soup", "--checkpoint", (model / "checkpoint.sedc").string(), "--out", file.string()}).code == 0);
  const auto ens = load_checkpoint(model / "checkpoint.sedc");
  const auto soup = load_checkpoint(file);
  REQUIRE(soup.heads.size() == 1);
  CHECK(std::ranges::equal(soup.heads[0].values(), uniform_soup(ens.heads).values()));
  CHECK(run({"soup", "--checkpoint", (model / "missing.sedc").string(), "--out", file.string()}).code ==
        cli::kExitUsage);
}

TEST_CASE("score turns a prediction file into csv") {
  const auto model = fresh_dir("score_model");
  REQUIRE(run(train_args(model)).code == 0);
  const auto out = fresh_dir("score_eval");
  REQUIRE(run({"eval", "--checkpoint", (model / "checkpoint.sedc").string(), "--out", out.string(),
               "--data", "id:id:" + data("test_id.sedf")})
              .code == 0);
  const auto sedp = (out / "predictions" / "id.sedp").string();
  const auto csv = out / "scores.csv";
  REQUIRE(run({"score", "--predictions", sedp, "--scores", "pds,unique", "--out", csv.string()}).code == 0);
  const auto rows = lines(slurp(csv));
  REQUIRE(rows.size() == 201);
  CHECK(rows[0] == "row,pds,unique");
  const auto pm = load_predictions(sedp);
  const auto pds = score_pds(pm).values;
  CHECK(std::stod(split(rows[5])[1]) == pds[4]);

  const auto all = run({"score", "--predictions", sedp});
  REQUIRE(all.code == 0);
  CHECK(split(lines(all.out)[0]).size() == 1 + all_scores().size());

  CHECK(run({"score", "--predictions", (out / "none.sedp").string()}).code == cli::kExitUsage);
  const auto junk = out / "junk.sedp";
  std::ofstream(junk) << "SEDP";
  CHECK(run({"score", "--predictions", junk.string()}).code == cli::kExitIo);
}

TEST_CASE("global usage errors") {
  CHECK(run({}).code == cli::kExitUsage);
  CHECK(run({"fit"}).code == cli::kExitUsage);
  CHECK(run({"bench", "--case", "unknown"}).code == cli::kExitUsage);
  ::setenv("SED_THREADS", "lots", 1);
  CHECK(run(train_args(fresh_dir("threads_bad"))).code == cli::kExitUsage);
  ::unsetenv("SED_THREADS");
  auto args = train_args(fresh_dir("threads_zero"));
  args.insert(args.end(), {"--threads", "0"});
  CHECK(run(args).code == cli::kExitUsage);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("bench writes measurements and honours --check") {
  const auto out = fresh_dir("bench");
  const auto r = run({"bench", "--case", "diversification", "--out", out.string(), "--check"});
  CHECK(r.code == 0);
  CHECK(r.out.rfind("PASS diversification", 0) == 0);
  const auto rows = lines(slurp(out / "diversification.csv"));
  CHECK(rows.size() == 11);
  CHECK(rows[0].rfind("seed,lambda,", 0) == 0);
}
