#include <doctest.h>

#include <fstream>
#include <set>

#include "floodcast/error.hpp"
#include "floodcast/nas.hpp"
#include "test_support.hpp"

using namespace floodcast;

namespace {

// Small dataset with real oracle depths: 6 segments, 4 train + 2 test events.
pipeline::PreparedData tiny_dataset(const std::filesystem::path& dir) {
  pipeline::GenConfig config;
  config.seed = 202;
  config.n_segments = 6;
  config.n_gauges = 3;
  config.n_events = 6;
  config.n_test_events = 2;
  config.durations = {14, 16, 12, 18, 14, 12};
  return pipeline::generate_dataset(config, dir);
}

model::TrainConfig fast_tc(std::uint64_t seed) {
  model::TrainConfig tc;
  tc.batch_size = 256;
  tc.max_epochs = 6;
  tc.patience = 5;
  tc.seed = seed;
  return tc;
}

// Normalized log text with the wall-time fields removed.
std::string normalized_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::string line, out;
  while (std::getline(in, line)) {
    const auto at = line.find("\"wall_time_s\":");
    if (at != std::string::npos) {
      const auto end = line.find(',', at);
      line.erase(at, end - at + 1);
    }
    out += line;
    out += '\n';
  }
  return out;
}

}  // namespace

TEST_CASE("full option table enumerates exactly 1080 configurations") {
  for (const auto cell : {nn::CellType::lstm, nn::CellType::gru}) {
    const auto grid = nas::GridSpec::full_table(cell, 4, false);
    const auto configs = nas::enumerate_grid(grid);
    CHECK(configs.size() == 1080);
    std::set<std::string> ids;
    for (const auto& config : configs) {
      ids.insert(config.slug());
    }
    CHECK(ids.size() == 1080);  // run ids are unique
  }
  CHECK(nas::enumerate_grid(nas::GridSpec::full()).size() == 8 * 1080);
}

TEST_CASE("single-option grid yields one config; enumeration order is stable") {
  nas::GridSpec spec = nas::GridSpec::micro();
  spec.rnn_units = {12};
  CHECK(nas::enumerate_grid(spec).size() == 1);

  const auto a = nas::enumerate_grid(nas::GridSpec::mini());
  const auto b = nas::enumerate_grid(nas::GridSpec::mini());
  REQUIRE(a.size() == 16);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] == b[i]);
  }
}

TEST_CASE("select_champion: argmin with full tie-break chain") {
  std::vector<nas::RunRecord> records(3);
  records[0].run_id = "a";
  records[0].status = "ok";
  records[0].mae_m = 0.05;
  records[1].run_id = "b";
  records[1].status = "ok";
  records[1].mae_m = 0.03;
  records[2].run_id = "c";
  records[2].status = "ok";
  records[2].mae_m = 0.04;
  CHECK(nas::select_champion(records).run_id == "b");

  SUBCASE("mae tie broken by rmse") {
    records[2].mae_m = 0.03;
    records[1].rmse_m = 0.08;
    records[2].rmse_m = 0.06;
    CHECK(nas::select_champion(records).run_id == "c");
  }
  SUBCASE("full tie broken by parameter count then run_id") {
    records[1].mae_m = records[2].mae_m = 0.03;
    records[1].rmse_m = records[2].rmse_m = 0.06;
    records[1].param_count = 900;
    records[2].param_count = 700;
    CHECK(nas::select_champion(records).run_id == "c");
    records[2].param_count = 900;
    CHECK(nas::select_champion(records).run_id == "b");
  }
  SUBCASE("all failed is an empty log") {
    for (auto& record : records) record.status = "failed";
    try {
      nas::select_champion(records);
      FAIL("expected EmptyLog");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::empty_log);
    }
  }
}

TEST_CASE("export: top-k ordering, clamping and group summaries") {
  std::vector<nas::RunRecord> records;
  for (int i = 0; i < 5; ++i) {
    nas::RunRecord record;
    record.run_id = "run" + std::to_string(i);
    record.status = "ok";
    record.config = model::ArchConfig::champion();
    record.config.rnn_layers = 1 + i % 3;
    record.mae_m = 0.01 * (5 - i);
    record.rmse_m = record.mae_m + 0.01;
    record.param_count = 1000 + i;
    records.push_back(record);
  }
  records[4].status = "failed";

  test::TempDir dir("nas-export");
  nas::export_top_runs_csv(dir / "top.csv", records, 2);
  auto text = test::read_text(dir / "top.csv");
  auto lines = std::count(text.begin(), text.end(), '\n');
  CHECK(lines == 3);  // header + 2 rows
  CHECK(text.find("run3") < text.find("run2"));  // ascending mae

  nas::export_top_runs_csv(dir / "all.csv", records, 120);
  text = test::read_text(dir / "all.csv");
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);  // clamped to the 4 ok rows

  nas::export_group_distribution_csv(dir / "groups.csv", records);
  text = test::read_text(dir / "groups.csv");
  // rnn_layers 1,2,3 -> three spatial-group rows + three head-group rows.
  CHECK(std::count(text.begin(), text.end(), '\n') == 7);
}

TEST_CASE("run_search: records, counts, aggregates, resume and worker determinism") {
  test::TempDir data_dir("nas-data");
  const auto data = tiny_dataset(data_dir.path());
  const auto plan = pipeline::split_plan(data, 1);
  REQUIRE(plan.folds.size() == 4);
  REQUIRE(plan.test_event_ids.size() == 2);

  nas::GridSpec micro = nas::GridSpec::micro();  // 2 configs, look_back 1
  test::TempDir out("nas-log");
  const auto stats = nas::run_search(micro, data, plan, fast_tc(31), out / "runs.jsonl", 1);
  CHECK(stats.trained == 2);
  CHECK(stats.skipped == 0);
  CHECK(stats.failed == 0);

  auto records = nas::read_run_log(out / "runs.jsonl");
  REQUIRE(records.size() == 2);
  for (const auto& record : records) {
    CHECK(record.status == "ok");
    CHECK(record.fold_val_mae.size() == 4);       // one training per fold
    REQUIRE(record.fold_event_metrics.size() == 4);
    for (const auto& fold : record.fold_event_metrics) {
      CHECK(fold.size() == 2);
    }
    const auto recomputed = eval::aggregate_events_then_folds(record.fold_event_metrics);
    CHECK(std::abs(recomputed.mae_m - record.mae_m) < 1e-12);
    CHECK(std::abs(recomputed.rmse_m - record.rmse_m) < 1e-12);
    CHECK(record.param_count == model::expected_param_count(record.config));
  }

  SUBCASE("resume skips completed configurations") {
    const auto again = nas::run_search(micro, data, plan, fast_tc(31), out / "runs.jsonl", 1);
    CHECK(again.trained == 0);
    CHECK(again.skipped == 2);
    CHECK(nas::read_run_log(out / "runs.jsonl").size() == 2);

    // A grid extending the finished one only trains the new configs.
    nas::GridSpec wider = micro;
    wider.head_units = {{32, 16, 1}, {64, 64, 1}};
    const auto extended = nas::run_search(wider, data, plan, fast_tc(31), out / "runs.jsonl", 1);
    CHECK(extended.trained == 2);
    CHECK(extended.skipped == 2);
    CHECK(nas::read_run_log(out / "runs.jsonl").size() == 4);
  }

  SUBCASE("worker count does not change the log content") {
    test::TempDir par("nas-par");
    nas::run_search(micro, data, plan, fast_tc(31), par / "runs.jsonl", 4);
    CHECK(normalized_log(par / "runs.jsonl") == normalized_log(out / "runs.jsonl"));
  }

  SUBCASE("champion selection is stable across reloads") {
    const auto& champ = nas::select_champion(records);
    const auto reloaded = nas::read_run_log(out / "runs.jsonl");
    CHECK(nas::select_champion(reloaded).run_id == champ.run_id);
  }
}

TEST_CASE("fold isolation: a fold's scaler is fit on its own train events only") {
  test::TempDir data_dir("nas-scaler");
  const auto data = tiny_dataset(data_dir.path());
  const auto plan = pipeline::split_plan(data, 1);
  const auto& fold = plan.folds[1];

  const auto batches = pipeline::build_fold_batches(data, fold, plan.test_event_ids, 1, false);
  std::vector<features::EventFeatureTable> manual_tables;
  for (const auto& id : fold.train_event_ids) {
    manual_tables.push_back(data.table(id));
  }
  std::vector<std::string> all(features::k_all_features.begin(), features::k_all_features.end());
  const auto manual = features::fit_scaler(manual_tables, all);
  CHECK(batches.scaler == manual);

  // Fitting on all events (validation leak) must give different statistics.
  std::vector<features::EventFeatureTable> leaky = manual_tables;
  leaky.push_back(data.table(fold.validation_event_id));
  const auto leaked = features::fit_scaler(leaky, all);
  CHECK(leaked.fingerprint() != manual.fingerprint());
}

TEST_CASE("diverged configurations are recorded as failed and the search continues") {
  test::TempDir data_dir("nas-fail");
  auto data = tiny_dataset(data_dir.path());
  // Poison one training target so every fold of every config diverges.
  for (auto& table : data.tables) {
    if (table.event_id == "ev001") {
      table.rows[5].depth_m = std::numeric_limits<double>::infinity();
    }
  }
  const auto plan = pipeline::split_plan(data, 1);
  nas::GridSpec micro = nas::GridSpec::micro();
  test::TempDir out("nas-fail-log");
  const auto stats = nas::run_search(micro, data, plan, fast_tc(9), out / "runs.jsonl", 2);
  CHECK(stats.failed == 2);
  const auto records = nas::read_run_log(out / "runs.jsonl");
  REQUIRE(records.size() == 2);
  for (const auto& record : records) {
    CHECK(record.status == "failed");
    CHECK(record.error.find("NonFiniteLoss") != std::string::npos);
  }
}
