#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "sed/cli.hpp"
#include "sed/config.hpp"
#include "sed/error.hpp"

using namespace sed;
using nlohmann::json;

TEST_CASE("train config survives a json round trip") {
  TrainConfig c;
  c.num_members = 7;
  c.epochs = 3;
  c.batch_size = 64;
  c.learning_rate = 2.5e-4;
  c.weight_decay = 0.05;
  c.lambda = 0.3;
  c.pair_subset_size = 3;
  c.mode = TrainMode::two_stage;
  c.seed = 0xFFFFFFFFFFFFFFFFull;
  c.head.depth = 2;
  c.head.hidden_dim = 16;
  c.head.activation = Activation::gelu;
  c.two_stage_threshold = 0.35;
  c.ood_dataset_path = "extra.sedf";
  const auto back = train_config_from_json(train_config_to_json(c));
  CHECK(back.num_members == c.num_members);
  CHECK(back.seed == c.seed);
  CHECK(back.learning_rate == c.learning_rate);
  CHECK(back.mode == c.mode);
  CHECK(back.head.depth == 2);
  CHECK(back.head.hidden_dim == 16);
  CHECK(back.head.activation == Activation::gelu);
  CHECK(back.ood_dataset_path == c.ood_dataset_path);
  CHECK(train_config_to_json(back) == train_config_to_json(c));
}

TEST_CASE("train config defaults and strictness") {
  const auto d = train_config_from_json(json::object());
  CHECK(d == TrainConfig{});
  CHECK_THROWS_AS(train_config_from_json(json{{"membres", 3}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json(json{{"members", "three"}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json(json{{"members", -2}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json(json{{"mode", "bagging"}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json(json{{"head", {{"depth", 1}, {"width", 3}}}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json(json::array()), ConfigError);
  try {
    train_config_from_json(json{{"lambda", "big"}}, "cfg");
    FAIL("accepted a string lambda");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("lambda") != std::string::npos);
  }
}

TEST_CASE("cli config") {
  const json j = {
      {"members", 4},
      {"lambda", 0.5},
      {"train_data", "train.sedf"},
      {"out_dir", "runs/a"},
      {"eval_datasets", json::array({{{"name", "val"}, {"tag", "id"}, {"path", "v.sedf"}},
                                     {{"name", "shift"}, {"tag", "ood_covariate"}, {"path", "s.sedf"}}})},
      {"scores", {"pds", "bma"}},
      {"strategies", {"oracle"}},
      {"csv_classes", 3},
  };
  const auto c = cli::cli_config_from_json(j);
  CHECK(c.train.num_members == 4);
  CHECK(c.train.lambda == 0.5);
  CHECK(c.train_data == "train.sedf");
  REQUIRE(c.eval_datasets.size() == 2);
  CHECK(c.eval_datasets[1].tag == DatasetTag::ood_covariate);
  CHECK(c.scores == std::vector<ScoreId>{ScoreId::pds, ScoreId::bma});
  CHECK(c.strategies == std::vector<Strategy>{Strategy::oracle});
  CHECK(c.csv_classes == 3);
  CHECK(cli::cli_config_from_json(cli::cli_config_to_json(c)) == c);

  const auto d = cli::cli_config_from_json(json::object());
  CHECK(d.scores == all_scores());
  CHECK(d.strategies.size() == 2);

  CHECK_THROWS_AS(cli::cli_config_from_json(json{{"output", "x"}}), ConfigError);
  CHECK_THROWS_AS(cli::cli_config_from_json(json{{"scores", "pds"}}), ConfigError);
  CHECK_THROWS_AS(cli::cli_config_from_json(json{{"eval_datasets", json::array({{{"name", "a"}}})}}),
                  ConfigError);
}

TEST_CASE("config files") {
  const auto dir = std::filesystem::temp_directory_path() / "sed_test_config";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "ok.json") << R"({"epochs": 2, "scores": ["pds"]})";
    std::ofstream(dir / "broken.json") << R"({"epochs": 2,)";
  }
  CHECK(cli::load_cli_config(dir / "ok.json").train.epochs == 2);
  CHECK_THROWS_AS(cli::load_cli_config(dir / "broken.json"), ConfigError);
  CHECK_THROWS_AS(cli::load_cli_config(dir / "absent.json"), ConfigError);
}

TEST_CASE("eval set specs") {
  const auto a = cli::parse_eval_set("val:id:data/val.sedf");
  CHECK(a.name == "val");
  CHECK(a.tag == DatasetTag::id);
  CHECK(a.path == "data/val.sedf");
  const auto b = cli::parse_eval_set("shift:ood_semantic");
  CHECK_FALSE(b.path.has_value());
  // Paths may themselves contain colons.
  CHECK(cli::parse_eval_set("x:id:C:/data.sedf").path == "C:/data.sedf");
  for (const char* bad : {"val", ":id", "val:test", "val:id:"}) {
    INFO(bad);
    CHECK_THROWS_AS(cli::parse_eval_set(bad), ConfigError);
  }
}

TEST_CASE("score and strategy lists") {
  CHECK(cli::parse_score_list("all") == all_scores());
  CHECK(cli::parse_score_list("pds,unique") == std::vector<ScoreId>{ScoreId::pds, ScoreId::unique});
  CHECK_THROWS(cli::parse_score_list("pds,,bma"));
  CHECK(cli::parse_strategy_list("oracle,uniform_soup") ==
        std::vector<Strategy>{Strategy::oracle, Strategy::uniform_soup});
  CHECK_THROWS(cli::parse_strategy_list("vote"));
}

TEST_CASE("thread count from the environment") {
  ::unsetenv("SED_THREADS");
  CHECK(cli::default_threads() == 1);
  ::setenv("SED_THREADS", "6", 1);
  CHECK(cli::default_threads() == 6);
  for (const char* bad : {"0", "-1", "four", "3x"}) {
    ::setenv("SED_THREADS", bad, 1);
    CHECK_THROWS_AS(cli::default_threads(), ConfigError);
  }
  ::unsetenv("SED_THREADS");
}
