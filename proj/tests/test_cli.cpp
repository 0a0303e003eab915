#include <doctest.h>

#include <nlohmann/json.hpp>
#include <sstream>

#include "cli.hpp"
#include "floodcast/csv.hpp"
#include "test_support.hpp"

using namespace floodcast;
using json = nlohmann::json;

namespace {

struct CliResult {
  int exit_code;
  std::string out;
  std::string err;
};

CliResult run(const std::vector<std::string>& argv) {
  std::ostringstream out, err;
  const int code = cli::run_command(argv, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST_CASE("unknown subcommand fails with machine-readable JSON on stderr") {
  const auto result = run({"frobnicate"});
  CHECK(result.exit_code != 0);
  const auto doc = json::parse(result.err);
  CHECK(doc.at("error") == "UnknownCommand");
  CHECK(doc.contains("message"));
}

TEST_CASE("missing input surfaces the module error verbatim") {
  test::TempDir dir("cli-missing");
  const auto result =
      run({"prepare", "--data-dir", (dir / "nope").string()});
  CHECK(result.exit_code == 1);
  const auto doc = json::parse(result.err);
  CHECK(doc.at("error") == "MissingFile");
}

TEST_CASE("pipeline: gen-data, prepare, micro nas, train, predict, evaluate") {
  test::TempDir dir("cli-pipe");
  const auto data_dir = (dir / "data").string();

  auto result = run({"gen-data", "--data-dir", data_dir, "--seed", "42", "--segments", "8",
                     "--gauges", "3", "--events", "6", "--test-events", "2"});
  REQUIRE(result.exit_code == 0);
  CHECK(std::filesystem::exists(dir / "data" / "segments.csv"));
  CHECK(std::filesystem::exists(dir / "data" / "depths.csv"));
  CHECK(std::filesystem::exists(dir / "data" / "manifest.json"));
  {
    const auto manifest = json::parse(test::read_text(dir / "data" / "manifest.json"));
    CHECK(manifest.at("seed") == 42);
    CHECK(manifest.at("n_segments") == 8);
    CHECK(manifest.at("n_gauges") == 3);
    CHECK(manifest.at("oracle_params").contains("retention"));
  }

  result = run({"prepare", "--data-dir", data_dir});
  REQUIRE(result.exit_code == 0);
  CHECK(std::filesystem::exists(dir / "data" / "scaler.json"));

  SUBCASE("gen-data is idempotent byte-for-byte") {
    const auto before = test::read_text(dir / "data" / "raw_rain.csv");
    const auto again = run({"gen-data", "--data-dir", data_dir, "--seed", "42", "--segments",
                            "8", "--gauges", "3", "--events", "6", "--test-events", "2"});
    REQUIRE(again.exit_code == 0);
    CHECK(test::read_text(dir / "data" / "raw_rain.csv") == before);
  }

  SUBCASE("micro nas writes one record per config plus exports") {
    const auto log_path = (dir / "runs.jsonl").string();
    result = run({"nas", "--data-dir", data_dir, "--grid", "micro", "--out", log_path,
                  "--workers", "2", "--seed", "7", "--max-epochs", "6", "--patience", "5",
                  "--mini-area", "4"});
    REQUIRE(result.exit_code == 0);
    const auto log_text = test::read_text(dir / "runs.jsonl");
    CHECK(std::count(log_text.begin(), log_text.end(), '\n') == 2);
    CHECK(std::filesystem::exists(dir / "champion.json"));
    CHECK(std::filesystem::exists(dir / "runs_top.csv"));
    CHECK(std::filesystem::exists(dir / "runs_groups.csv"));
  }

  SUBCASE("train one fold, then predict an event") {
    test::write_text(dir / "arch.json",
                     R"({"rnn_type":"gru","rnn_layers":1,"rnn_units":12,"spatial_layers":2,)"
                     R"("spatial_units":4,"spatial_act":"selu","head_units":[32,16,1],)"
                     R"("head_act":"selu","look_back":1,"include_max15":false})");
    const auto model_path = (dir / "model.json").string();
    result = run({"train", "--data-dir", data_dir, "--arch", (dir / "arch.json").string(),
                  "--holdout-event", "ev002", "--out", model_path, "--seed", "5",
                  "--max-epochs", "6", "--patience", "5"});
    REQUIRE(result.exit_code == 0);
    CHECK(result.out.find("fold validation MAE") != std::string::npos);

    const auto pred_path = (dir / "pred.csv").string();
    result = run({"predict", "--data-dir", data_dir, "--model", model_path, "--event", "ev005",
                  "--out", pred_path});
    REQUIRE(result.exit_code == 0);
    const auto pred_text = test::read_text(dir / "pred.csv");
    // ev005 carries the 60 h roster slot; look_back 1 -> 59 rows x 8 segments.
    CHECK(std::count(pred_text.begin(), pred_text.end(), '\n') == 1 + 59 * 8);
    CHECK(pred_text.rfind("segment_id,timestamp,depth_m\n", 0) == 0);

    SUBCASE("predicting an unknown event fails cleanly") {
      const auto bad = run({"predict", "--data-dir", data_dir, "--model", model_path, "--event",
                            "nope", "--out", pred_path});
      CHECK(bad.exit_code == 1);
      CHECK(json::parse(bad.err).at("error") == "UnknownEvent");
    }
  }

  SUBCASE("config file values are used and flags override them") {
    test::write_text(dir / "config.json",
                     json{{"data_dir", data_dir}, {"seed", 11}}.dump());
    // No --data-dir flag: the config's value must be picked up.
    const auto ok = run({"prepare", "--config", (dir / "config.json").string()});
    CHECK(ok.exit_code == 0);
    // A flag overrides the config's data_dir.
    const auto overridden = run({"prepare", "--config", (dir / "config.json").string(),
                                 "--data-dir", (dir / "absent").string()});
    CHECK(overridden.exit_code == 1);
    CHECK(json::parse(overridden.err).at("error") == "MissingFile");
  }
}

TEST_CASE("grad-check subcommand runs a fast pass") {
  const auto result = run({"grad-check", "--seeds", "2", "--samples", "4", "--seed", "3"});
  CHECK(result.exit_code == 0);
  CHECK(result.out.find("pass dense") != std::string::npos);
  CHECK(result.out.find("pass lstm") != std::string::npos);
  CHECK(result.out.find("pass gru") != std::string::npos);
  CHECK(result.out.find("pass model") != std::string::npos);
}
