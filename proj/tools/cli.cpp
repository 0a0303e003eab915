#include "cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <thread>

#include "floodcast/csv.hpp"
#include "floodcast/data_store.hpp"
#include "floodcast/error.hpp"
#include "floodcast/eval.hpp"
#include "floodcast/model.hpp"
#include "floodcast/nas.hpp"
#include "floodcast/pipeline.hpp"
#include "floodcast/synth_hydro.hpp"
#include "floodcast/verify.hpp"

namespace floodcast::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

// Defaults, overridable first by a --config JSON file and then by flags.
struct Settings {
  std::string data_dir;
  std::uint64_t seed = 42;
  int n_segments = 50;
  int n_gauges = 8;
  double width_m = 2000.0;
  double height_m = 2000.0;
  int n_events = 16;
  int n_test_events = -1;
  double peak_mm_min = 15.0;
  double peak_mm_max = 80.0;
  double idw_power = 2.0;
  std::string grid = "mini";
  int workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  int mini_area = 6;
  bool full_area = false;
  std::string arch = "champion";
  model::TrainConfig train;
};

std::string default_data_dir() {
  if (const char* env = std::getenv("FLOODCAST_DATA_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return "data";
}

void load_config_file(const std::string& path, Settings& settings) {
  std::ifstream in(path);
  if (!in) {
    raise(Errc::missing_file, "cannot open config '" + path + "'");
  }
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    raise(Errc::config_invalid, path + ": " + e.what());
  }
  try {
    settings.data_dir = doc.value("data_dir", settings.data_dir);
    settings.seed = doc.value("seed", settings.seed);
    settings.n_segments = doc.value("n_segments", settings.n_segments);
    settings.n_gauges = doc.value("n_gauges", settings.n_gauges);
    if (doc.contains("bounds")) {
      settings.width_m = doc["bounds"].value("width_m", settings.width_m);
      settings.height_m = doc["bounds"].value("height_m", settings.height_m);
    }
    if (doc.contains("events")) {
      settings.n_events = doc["events"].value("count", settings.n_events);
      settings.n_test_events = doc["events"].value("test_count", settings.n_test_events);
      settings.peak_mm_min = doc["events"].value("peak_mm_min", settings.peak_mm_min);
      settings.peak_mm_max = doc["events"].value("peak_mm_max", settings.peak_mm_max);
    }
    settings.idw_power = doc.value("idw_power", settings.idw_power);
    settings.grid = doc.value("grid", settings.grid);
    settings.workers = doc.value("workers", settings.workers);
    settings.arch = doc.value("arch", settings.arch);
    if (doc.contains("train")) {
      const auto& t = doc["train"];
      settings.train.lr = t.value("lr", settings.train.lr);
      settings.train.batch_size = t.value("batch_size", settings.train.batch_size);
      settings.train.max_epochs = t.value("max_epochs", settings.train.max_epochs);
      settings.train.patience = t.value("patience", settings.train.patience);
    }
  } catch (const json::exception& e) {
    raise(Errc::config_invalid, path + ": " + e.what());
  }
}

model::ArchConfig resolve_arch(const std::string& name_or_path) {
  if (name_or_path == "champion" || name_or_path.empty()) {
    return model::ArchConfig::champion();
  }
  return model::load_arch_json(name_or_path);
}

// NAS runs on the most flood-prone segments unless --full-area is given.
pipeline::PreparedData nas_study_area(const pipeline::PreparedData& data,
                                      const Settings& settings, std::ostream& out) {
  if (settings.full_area || settings.mini_area >= static_cast<int>(data.segments.size())) {
    return data;
  }
  std::vector<features::EventFeatureTable> train_tables;
  for (std::size_t i = 0; i < data.events.size(); ++i) {
    if (data.events[i].split == data::Split::train) {
      train_tables.push_back(data.tables[i]);
    }
  }
  const auto ids = synth::select_flood_prone(train_tables, settings.mini_area);
  out << "mini study area: " << ids.size() << " most flood-prone segments of "
      << data.segments.size() << "\n";
  return pipeline::subset_segments(data, ids);
}

int cmd_gen_data(const Settings& settings, std::ostream& out) {
  pipeline::GenConfig config;
  config.seed = settings.seed;
  config.n_segments = settings.n_segments;
  config.n_gauges = settings.n_gauges;
  config.bounds = {settings.width_m, settings.height_m};
  config.n_events = settings.n_events;
  config.n_test_events = settings.n_test_events;
  config.peak_mm_min = settings.peak_mm_min;
  config.peak_mm_max = settings.peak_mm_max;
  config.idw_power = settings.idw_power;
  const auto data = pipeline::generate_dataset(config, settings.data_dir);
  out << "wrote " << data.segments.size() << " segments, " << data.gauges.size() << " gauges, "
      << data.events.size() << " events to " << settings.data_dir << "\n";
  return 0;
}

int cmd_prepare(const Settings& settings, std::ostream& out) {
  pipeline::prepare_features(settings.data_dir, settings.idw_power);
  out << "wrote " << (fs::path(settings.data_dir) / "weather.csv").string() << " and scaler.json\n";
  return 0;
}

int cmd_train(const Settings& settings, const std::string& holdout,
              const std::string& out_path, std::ostream& out) {
  const auto data = pipeline::load_prepared(settings.data_dir);
  const auto arch = resolve_arch(settings.arch);
  const auto train_ids = data.train_event_ids(arch.look_back);
  if (std::find(train_ids.begin(), train_ids.end(), holdout) == train_ids.end()) {
    raise(Errc::unknown_event,
          "holdout '" + holdout + "' is not a usable training event");
  }
  windowing::Fold fold;
  fold.validation_event_id = holdout;
  for (const auto& id : train_ids) {
    if (id != holdout) fold.train_event_ids.push_back(id);
  }
  model::TrainConfig tc = settings.train;
  tc.seed = settings.seed;
  const auto outcome = nas::train_fold(data, fold, data.test_event_ids(), arch, tc, tc.seed);
  model::save_trained_model(out_path, outcome.trained);
  out << "fold validation MAE " << csv::format_double(outcome.val_mae) << " m\n";
  for (const auto& cell : outcome.test_metrics) {
    out << "test " << cell.event_id << ": mae " << csv::format_double(cell.mae_m) << " m, rmse "
        << csv::format_double(cell.rmse_m) << " m\n";
  }
  out << "model written to " << out_path << "\n";
  return 0;
}

int cmd_nas(const Settings& settings, const std::string& log_path, int top_k, std::ostream& out) {
  const auto grid = nas::resolve_grid(settings.grid);
  const auto full = pipeline::load_prepared(settings.data_dir);
  const auto data = nas_study_area(full, settings, out);
  int max_look_back = 1;
  for (const int lb : grid.look_backs) max_look_back = std::max(max_look_back, lb);
  const auto plan = pipeline::split_plan(data, max_look_back);
  model::TrainConfig tc = settings.train;
  tc.seed = settings.seed;
  const auto stats = nas::run_search(grid, data, plan, tc, log_path, settings.workers);
  out << "search done: " << stats.trained << " trained, " << stats.skipped << " skipped, "
      << stats.failed << " failed\n";
  const auto records = nas::read_run_log(log_path);
  const auto& champion = nas::select_champion(records);
  out << "champion " << champion.run_id << ": mae " << csv::format_double(champion.mae_m)
      << " m, rmse " << csv::format_double(champion.rmse_m) << " m\n";
  const fs::path log_dir = fs::path(log_path).parent_path();
  model::save_arch_json(log_dir / "champion.json", champion.config);
  nas::export_top_runs_csv(log_dir / "runs_top.csv", records, top_k);
  nas::export_group_distribution_csv(log_dir / "runs_groups.csv", records);
  out << "exports: champion.json, runs_top.csv, runs_groups.csv in "
      << (log_dir.empty() ? fs::path(".") : log_dir).string() << "\n";
  return 0;
}

int cmd_evaluate(const Settings& settings, const std::string& report_path,
                 const std::string& models_dir, bool pooled, std::ostream& out) {
  const auto data = pipeline::load_prepared(settings.data_dir);
  const auto base = resolve_arch(settings.arch);
  model::TrainConfig tc = settings.train;
  tc.seed = settings.seed;

  if (!models_dir.empty()) {
    fs::create_directories(models_dir);
  }

  eval::MetricsReport report;
  const std::pair<nn::CellType, const char*> cells[] = {{nn::CellType::lstm, "lstm"},
                                                        {nn::CellType::gru, "gru"}};
  for (const auto& [cell, cell_label] : cells) {
    for (const int look_back : {1, 4}) {
      for (const bool max15 : {true, false}) {
        model::ArchConfig arch = base;
        arch.rnn_type = cell;
        arch.look_back = look_back;
        arch.include_max15 = max15;
        const std::string label =
            std::string(cell_label) + (max15 ? "-m1" : "-m0") + "-lb" + std::to_string(look_back);
        const auto plan = pipeline::split_plan(data, look_back);

        std::vector<model::TrainedModel> folds;
        bool loaded = false;
        if (!models_dir.empty()) {
          loaded = true;
          for (std::size_t f = 0; f < plan.folds.size(); ++f) {
            const fs::path path =
                fs::path(models_dir) / (label + "-fold" + std::to_string(f) + ".json");
            if (!fs::exists(path)) {
              loaded = false;
              folds.clear();
              break;
            }
            auto cached = model::load_trained_model(path);
            if (!(cached.net.config() == arch)) {  // stale cache, retrain
              loaded = false;
              folds.clear();
              break;
            }
            folds.push_back(std::move(cached));
          }
        }
        if (!loaded) {
          auto outcomes = nas::run_rotation(data, plan, arch, tc, label, settings.workers);
          folds.clear();
          for (std::size_t f = 0; f < outcomes.size(); ++f) {
            if (!models_dir.empty()) {
              model::save_trained_model(
                  fs::path(models_dir) / (label + "-fold" + std::to_string(f) + ".json"),
                  outcomes[f].trained);
            }
            folds.push_back(std::move(outcomes[f].trained));
          }
        }
        report.rows.push_back(eval::evaluate_variant(label, cell_label, max15 ? "Y" : "N",
                                                     std::to_string(look_back), folds, data,
                                                     plan.test_event_ids, pooled));
        out << "variant " << label << ": mae "
            << csv::format_double(report.rows.back().mae_m) << " m, rmse "
            << csv::format_double(report.rows.back().rmse_m) << " m"
            << (loaded ? " (loaded)" : "") << "\n";
      }
    }
  }

  const auto plan = pipeline::split_plan(data, base.look_back);
  for (auto& row : eval::baseline_predictors(data, plan, base.look_back, pooled)) {
    out << "variant " << row.variant << ": mae " << csv::format_double(row.mae_m) << " m, rmse "
        << csv::format_double(row.rmse_m) << " m\n";
    report.rows.push_back(std::move(row));
  }

  const fs::path report_file(report_path);
  eval::write_report_csv(report_file, report);
  fs::path detail_file = report_file;
  detail_file.replace_extension("");
  const fs::path detail_path = detail_file.string() + "_detail.csv";
  eval::write_report_detail_csv(detail_path, report);
  if (pooled) {
    eval::write_report_pooled_csv(detail_file.string() + "_pooled.csv", report);
  }

  std::vector<features::EventFeatureTable> train_tables, test_tables;
  for (std::size_t i = 0; i < data.events.size(); ++i) {
    (data.events[i].split == data::Split::train ? train_tables : test_tables)
        .push_back(data.tables[i]);
  }
  const fs::path report_dir = report_file.parent_path();
  eval::write_correlations_csv(report_dir / "correlations_train.csv",
                               eval::correlation_matrix(train_tables));
  eval::write_correlations_csv(report_dir / "correlations_test.csv",
                               eval::correlation_matrix(test_tables));
  out << "report written to " << report_path << " (+detail, correlations)\n";
  return 0;
}

int cmd_predict(const Settings& settings, const std::string& model_path,
                const std::string& event_id, const std::string& out_path, std::ostream& out) {
  const auto trained = model::load_trained_model(model_path);
  const auto data = pipeline::load_prepared(settings.data_dir);
  const auto& config = trained.net.config();
  const auto batch = pipeline::build_scaled_batch(data, trained.scaler, event_id,
                                                  config.look_back, config.include_max15);
  const auto depths = model::predict(trained, batch, /*clamp_reporting=*/true);
  csv::Writer w(out_path, "segment_id,timestamp,depth_m");
  for (long i = 0; i < depths.size(); ++i) {
    const auto& key = batch.index[static_cast<std::size_t>(i)];
    w.row({std::to_string(key.segment_id), timeutil::format_iso(key.ts),
           csv::format_double(depths(i))});
  }
  w.finish();
  out << depths.size() << " predictions written to " << out_path << "\n";
  return 0;
}

int cmd_grad_check(const Settings& settings, int n_seeds, int n_samples, double eps,
                   std::ostream& out) {
  const auto arch = resolve_arch(settings.arch);
  constexpr double k_layer_tol = 1e-5;
  constexpr double k_model_tol = 1e-4;
  bool ok = true;
  const auto report = [&](const char* what, const verify::CheckResult& result, double tol) {
    const bool pass = result.max_rel_err < tol;
    ok = ok && pass;
    out << (pass ? "pass" : "FAIL") << " " << what << ": max rel err "
        << csv::format_double(result.max_rel_err) << " over " << result.seeds_checked
        << " seeds (tol " << csv::format_double(tol) << ")";
    if (!pass) out << " worst " << result.worst_detail;
    out << "\n";
  };
  report("dense", verify::check_dense_layer_grads(n_seeds, eps, settings.seed), k_layer_tol);
  report("lstm",
         verify::check_recurrent_layer_grads(nn::CellType::lstm, n_seeds, eps, settings.seed),
         k_layer_tol);
  report("gru",
         verify::check_recurrent_layer_grads(nn::CellType::gru, n_seeds, eps, settings.seed),
         k_layer_tol);
  report("model",
         verify::check_model_grads(arch, n_seeds, n_samples, eps, settings.seed,
                                   settings.workers),
         k_model_tol);
  return ok ? 0 : 1;
}

}  // namespace

int run_command(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  Settings settings;
  settings.data_dir = default_data_dir();

  try {
    // The config file seeds the defaults; explicit flags win.
    for (std::size_t i = 0; i + 1 < argv.size(); ++i) {
      if (argv[i] == "--config") {
        load_config_file(argv[i + 1], settings);
      }
    }

    CLI::App app{"street-scale flood depth surrogate pipeline"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON config file (flags override its values)");

    const auto add_common = [&settings](CLI::App* cmd) {
      cmd->add_option("--config", "JSON config file (parsed before flags)");
      cmd->add_option("--data-dir", settings.data_dir, "dataset directory");
      cmd->add_option("--seed", settings.seed, "base seed");
    };

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    add_common(gen);
    gen->add_option("--segments", settings.n_segments, "number of street segments");
    gen->add_option("--gauges", settings.n_gauges, "number of rain gauges");
    gen->add_option("--events", settings.n_events, "number of rainfall events");
    gen->add_option("--test-events", settings.n_test_events, "events held out as test");
    gen->add_option("--width", settings.width_m, "study-area width (m)");
    gen->add_option("--height", settings.height_m, "study-area height (m)");
    gen->add_option("--peak-min", settings.peak_mm_min, "min peak hourly rain (mm)");
    gen->add_option("--peak-max", settings.peak_mm_max, "max peak hourly rain (mm)");
    gen->add_option("--idw-power", settings.idw_power, "IDW power");

    auto* prepare = app.add_subcommand("prepare", "derive features and fit the scaler");
    add_common(prepare);
    prepare->add_option("--idw-power", settings.idw_power, "IDW power");

    auto* train_cmd = app.add_subcommand("train", "train one holdout fold");
    add_common(train_cmd);
    std::string holdout;
    std::string model_out = "model.json";
    train_cmd->add_option("--holdout-event", holdout, "validation event id")->required();
    train_cmd->add_option("--out", model_out, "output model path");
    train_cmd->add_option("--arch", settings.arch, "architecture JSON path or 'champion'");
    train_cmd->add_option("--batch-size", settings.train.batch_size, "minibatch size");
    train_cmd->add_option("--max-epochs", settings.train.max_epochs, "epoch cap");
    train_cmd->add_option("--patience", settings.train.patience, "early-stop patience");
    train_cmd->add_option("--lr", settings.train.lr, "learning rate");

    auto* nas_cmd = app.add_subcommand("nas", "architecture grid search");
    add_common(nas_cmd);
    std::string log_path = "runs.jsonl";
    int top_k = 120;
    nas_cmd->add_option("--grid", settings.grid, "preset (full|mini|micro|table-lstm|table-gru) or JSON path");
    nas_cmd->add_option("--out", log_path, "run log path (JSON lines)");
    nas_cmd->add_option("--workers", settings.workers, "concurrent fold jobs");
    nas_cmd->add_option("--top-k", top_k, "rows in the top-runs export");
    nas_cmd->add_option("--mini-area", settings.mini_area, "flood-prone segment count");
    nas_cmd->add_flag("--full-area", settings.full_area, "search on the whole study area");
    nas_cmd->add_option("--batch-size", settings.train.batch_size, "minibatch size");
    nas_cmd->add_option("--max-epochs", settings.train.max_epochs, "epoch cap");
    nas_cmd->add_option("--patience", settings.train.patience, "early-stop patience");

    auto* evaluate = app.add_subcommand("evaluate", "rotation protocol report");
    add_common(evaluate);
    std::string report_path = "report.csv";
    std::string models_dir;
    bool pooled = false;
    evaluate->add_option("--report", report_path, "report CSV path");
    evaluate->add_option("--models", models_dir, "directory to cache fold models");
    evaluate->add_option("--arch", settings.arch, "architecture JSON path or 'champion'");
    evaluate->add_option("--workers", settings.workers, "concurrent fold jobs");
    evaluate->add_flag("--pooled", pooled, "also report pooled-over-samples metrics");
    evaluate->add_option("--batch-size", settings.train.batch_size, "minibatch size");
    evaluate->add_option("--max-epochs", settings.train.max_epochs, "epoch cap");
    evaluate->add_option("--patience", settings.train.patience, "early-stop patience");

    auto* predict = app.add_subcommand("predict", "per-segment hourly depths for one event");
    add_common(predict);
    std::string model_path, event_id;
    std::string predict_out = "predictions.csv";
    predict->add_option("--model", model_path, "trained model JSON")->required();
    predict->add_option("--event", event_id, "event id")->required();
    predict->add_option("--out", predict_out, "output CSV path");

    auto* grad = app.add_subcommand("grad-check", "finite-difference gradient verification");
    add_common(grad);
    int n_seeds = 100;
    int n_samples = 8;
    double eps = 1e-5;
    grad->add_option("--arch", settings.arch, "architecture JSON path or 'champion'");
    grad->add_option("--seeds", n_seeds, "randomized cases per check");
    grad->add_option("--samples", n_samples, "batch size for the full-model check");
    grad->add_option("--eps", eps, "finite-difference step");
    grad->add_option("--workers", settings.workers, "concurrent seeds");

    std::vector<const char*> c_args;
    c_args.push_back("floodcast");
    for (const auto& arg : argv) {
      c_args.push_back(arg.c_str());
    }
    try {
      app.parse(static_cast<int>(c_args.size()), c_args.data());
    } catch (const CLI::CallForHelp& e) {
      out << app.help();
      return 0;
    } catch (const CLI::ParseError& e) {
      const bool unknown = !argv.empty() && app.get_subcommands().empty();
      err << json{{"error", unknown ? "UnknownCommand" : "ConfigInvalid"},
                  {"message", e.what()}}
                 .dump()
          << "\n";
      return 2;
    }

    if (gen->parsed()) return cmd_gen_data(settings, out);
    if (prepare->parsed()) return cmd_prepare(settings, out);
    if (train_cmd->parsed()) return cmd_train(settings, holdout, model_out, out);
    if (nas_cmd->parsed()) return cmd_nas(settings, log_path, top_k, out);
    if (evaluate->parsed()) return cmd_evaluate(settings, report_path, models_dir, pooled, out);
    if (predict->parsed()) return cmd_predict(settings, model_path, event_id, predict_out, out);
    if (grad->parsed()) return cmd_grad_check(settings, n_seeds, n_samples, eps, out);
    err << json{{"error", "UnknownCommand"}, {"message", "no subcommand given"}}.dump() << "\n";
    return 2;
  } catch (const Error& e) {
    err << json{{"error", errc_name(e.code())}, {"message", e.what()}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << json{{"error", "Internal"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
}

}  // namespace floodcast::cli
