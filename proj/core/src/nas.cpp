#include "floodcast/nas.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <fstream>
#include <map>
#include <mutex>
#include <set>

#include "floodcast/csv.hpp"
#include "floodcast/error.hpp"
#include "floodcast/thread_pool.hpp"
#include "internal_json.hpp"

namespace floodcast::nas {

namespace {

using json = nlohmann::ordered_json;

std::string head_units_label(const std::vector<int>& units) {
  std::string s;
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (i > 0) s += "-";
    s += std::to_string(units[i]);
  }
  return s;
}

std::string head_act_label(const model::ArchConfig& config) {
  const bool uniform =
      std::all_of(config.head_acts.begin(), config.head_acts.end(),
                  [&](nn::Activation a) { return a == config.head_acts.front(); });
  if (uniform) return nn::activation_name(config.head_acts.front());
  std::string s;
  for (std::size_t i = 0; i < config.head_acts.size(); ++i) {
    if (i > 0) s += "-";
    s += nn::activation_name(config.head_acts[i]);
  }
  return s;
}

json record_to_json(const RunRecord& record) {
  json folds = json::array();
  for (const auto& fold : record.fold_event_metrics) {
    json events = json::array();
    for (const auto& cell : fold) {
      events.push_back(json{{"event_id", cell.event_id},
                            {"mae_m", cell.mae_m},
                            {"rmse_m", cell.rmse_m},
                            {"n_samples", cell.n_samples}});
    }
    folds.push_back(std::move(events));
  }
  return json{{"run_id", record.run_id},
              {"config", model::arch_to_json(record.config)},
              {"status", record.status},
              {"error", record.error},
              {"fold_val_mae", record.fold_val_mae},
              {"fold_event_metrics", std::move(folds)},
              {"mae_m", record.mae_m},
              {"rmse_m", record.rmse_m},
              {"param_count", record.param_count},
              {"wall_time_s", record.wall_time_s},
              {"seed", record.seed}};
}

// NaN aggregates of failed runs serialize as JSON null.
double number_or_nan(const json& doc, const char* key) {
  if (!doc.contains(key) || doc.at(key).is_null()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return doc.at(key).get<double>();
}

RunRecord record_from_json(const json& doc) {
  RunRecord record;
  record.run_id = doc.at("run_id").get<std::string>();
  record.config = model::arch_from_json(doc.at("config"));
  record.status = doc.at("status").get<std::string>();
  record.error = doc.value("error", "");
  record.fold_val_mae = doc.value("fold_val_mae", std::vector<double>{});
  for (const auto& fold : doc.value("fold_event_metrics", json::array())) {
    std::vector<eval::EventCell> cells;
    for (const auto& entry : fold) {
      cells.push_back({entry.at("event_id").get<std::string>(), entry.at("mae_m").get<double>(),
                       entry.at("rmse_m").get<double>(), entry.at("n_samples").get<long>()});
    }
    record.fold_event_metrics.push_back(std::move(cells));
  }
  record.mae_m = number_or_nan(doc, "mae_m");
  record.rmse_m = number_or_nan(doc, "rmse_m");
  record.param_count = doc.value("param_count", 0L);
  record.wall_time_s = doc.value("wall_time_s", 0.0);
  record.seed = doc.value("seed", 0ULL);
  return record;
}

// (mae, rmse, params, run_id) ordering shared by champion selection and the
// top-k export.
bool record_less(const RunRecord& a, const RunRecord& b) {
  if (a.mae_m != b.mae_m) return a.mae_m < b.mae_m;
  if (a.rmse_m != b.rmse_m) return a.rmse_m < b.rmse_m;
  if (a.param_count != b.param_count) return a.param_count < b.param_count;
  return a.run_id < b.run_id;
}

double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.size() == 1) return sorted.front();
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

void GridSpec::validate() const {
  if (rnn_types.empty() || rnn_layers.empty() || rnn_units.empty() || spatial_layers.empty() ||
      spatial_units.empty() || spatial_acts.empty() || head_units.empty() || head_acts.empty() ||
      look_backs.empty() || max15_options.empty()) {
    raise(Errc::invalid_config, "every grid axis needs at least one option");
  }
}

GridSpec GridSpec::full_table(nn::CellType cell, int look_back, bool max15) {
  GridSpec spec;
  spec.rnn_types = {cell};
  spec.look_backs = {look_back};
  spec.max15_options = {max15};
  return spec;
}

GridSpec GridSpec::full() {
  GridSpec spec;
  spec.rnn_types = {nn::CellType::lstm, nn::CellType::gru};
  spec.look_backs = {1, 4};
  spec.max15_options = {false, true};
  return spec;
}

GridSpec GridSpec::mini() {
  GridSpec spec;
  spec.rnn_types = {nn::CellType::gru, nn::CellType::lstm};
  spec.rnn_layers = {1, 2};
  spec.rnn_units = {12, 20};
  spec.spatial_layers = {2};
  spec.spatial_units = {4};
  spec.spatial_acts = {nn::Activation::selu};
  spec.head_units = {{32, 16, 1}, {64, 64, 16, 1}};
  spec.head_acts = {nn::Activation::selu};
  spec.look_backs = {4};
  spec.max15_options = {false};
  return spec;
}

GridSpec GridSpec::micro() {
  GridSpec spec;
  spec.rnn_types = {nn::CellType::gru};
  spec.rnn_layers = {1};
  spec.rnn_units = {12, 20};
  spec.spatial_layers = {2};
  spec.spatial_units = {4};
  spec.spatial_acts = {nn::Activation::selu};
  spec.head_units = {{32, 16, 1}};
  spec.head_acts = {nn::Activation::selu};
  spec.look_backs = {1};
  spec.max15_options = {false};
  return spec;
}

std::vector<model::ArchConfig> enumerate_grid(const GridSpec& spec) {
  spec.validate();
  std::vector<model::ArchConfig> configs;
  for (const auto cell : spec.rnn_types) {
    for (const int layers : spec.rnn_layers) {
      for (const int units : spec.rnn_units) {
        for (const int s_layers : spec.spatial_layers) {
          for (const int s_units : spec.spatial_units) {
            for (const auto s_act : spec.spatial_acts) {
              for (const auto& heads : spec.head_units) {
                for (const auto h_act : spec.head_acts) {
                  for (const int look_back : spec.look_backs) {
                    for (const bool max15 : spec.max15_options) {
                      model::ArchConfig config;
                      config.rnn_type = cell;
                      config.rnn_layers = layers;
                      config.rnn_units = units;
                      config.spatial_layers = s_layers;
                      config.spatial_units = s_units;
                      config.spatial_act = s_act;
                      config.head_units = heads;
                      config.head_acts.assign(heads.size(), h_act);
                      config.look_back = look_back;
                      config.include_max15 = max15;
                      config.validate();
                      configs.push_back(std::move(config));
                    }
                  }
                }
              }
            }
          }
        }
      }
    }
  }
  return configs;
}

GridSpec load_grid_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    raise(Errc::missing_file, "cannot open '" + path.string() + "'");
  }
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    raise(Errc::invalid_config, path.string() + ": " + e.what());
  }
  GridSpec spec;
  try {
    if (doc.contains("rnn_types")) {
      spec.rnn_types.clear();
      for (const auto& name : doc.at("rnn_types")) {
        spec.rnn_types.push_back(nn::parse_cell(name.get<std::string>()));
      }
    }
    if (doc.contains("rnn_layers")) spec.rnn_layers = doc.at("rnn_layers").get<std::vector<int>>();
    if (doc.contains("rnn_units")) spec.rnn_units = doc.at("rnn_units").get<std::vector<int>>();
    if (doc.contains("spatial_layers")) {
      spec.spatial_layers = doc.at("spatial_layers").get<std::vector<int>>();
    }
    if (doc.contains("spatial_units")) {
      spec.spatial_units = doc.at("spatial_units").get<std::vector<int>>();
    }
    if (doc.contains("spatial_acts")) {
      spec.spatial_acts.clear();
      for (const auto& name : doc.at("spatial_acts")) {
        spec.spatial_acts.push_back(nn::parse_activation(name.get<std::string>()));
      }
    }
    if (doc.contains("head_units")) {
      spec.head_units = doc.at("head_units").get<std::vector<std::vector<int>>>();
    }
    if (doc.contains("head_acts")) {
      spec.head_acts.clear();
      for (const auto& name : doc.at("head_acts")) {
        spec.head_acts.push_back(nn::parse_activation(name.get<std::string>()));
      }
    }
    if (doc.contains("look_backs")) spec.look_backs = doc.at("look_backs").get<std::vector<int>>();
    if (doc.contains("max15_options")) {
      spec.max15_options = doc.at("max15_options").get<std::vector<bool>>();
    }
  } catch (const json::exception& e) {
    raise(Errc::invalid_config, path.string() + ": " + e.what());
  }
  spec.validate();
  return spec;
}

GridSpec resolve_grid(const std::string& name_or_path) {
  if (name_or_path == "full") return GridSpec::full();
  if (name_or_path == "mini") return GridSpec::mini();
  if (name_or_path == "micro") return GridSpec::micro();
  if (name_or_path == "table-lstm") return GridSpec::full_table(nn::CellType::lstm, 4, false);
  if (name_or_path == "table-gru") return GridSpec::full_table(nn::CellType::gru, 4, false);
  return load_grid_json(name_or_path);
}

FoldOutcome train_fold(const pipeline::PreparedData& data, const windowing::Fold& fold,
                       const std::vector<std::string>& test_event_ids,
                       const model::ArchConfig& arch, const model::TrainConfig& tc,
                       std::uint64_t seed) {
  auto batches = pipeline::build_fold_batches(data, fold, test_event_ids, arch.look_back,
                                              arch.include_max15);
  model::TwoBranchModel net(arch, derive_seed(seed, "weights"));
  model::TrainConfig fold_tc = tc;
  fold_tc.seed = seed;
  FoldOutcome outcome{model::train(std::move(net), batches.train, batches.val, fold_tc,
                                   batches.scaler),
                      0.0,
                      {}};
  outcome.val_mae = outcome.trained.history.val_mae[static_cast<std::size_t>(
      outcome.trained.history.best_epoch)];
  outcome.test_metrics.reserve(test_event_ids.size());
  for (const auto& event_id : test_event_ids) {
    const auto& batch = batches.test.at(event_id);
    const auto pred = model::predict(outcome.trained, batch);
    const auto metrics = eval::compute_metrics(pred, batch.targets);
    outcome.test_metrics.push_back({event_id, metrics.mae_m, metrics.rmse_m, batch.size()});
  }
  return outcome;
}

std::vector<FoldOutcome> run_rotation(const pipeline::PreparedData& data,
                                      const windowing::SplitPlan& plan,
                                      const model::ArchConfig& arch,
                                      const model::TrainConfig& tc, std::string_view seed_role,
                                      int workers) {
  std::vector<FoldOutcome> outcomes(plan.folds.size(),
                                    FoldOutcome{model::TrainedModel{
                                                    model::TwoBranchModel(arch, 0), {}, {}},
                                                0.0,
                                                {}});
  const std::uint64_t role_seed = derive_seed(tc.seed, seed_role);
  parallel_for(static_cast<long>(plan.folds.size()), workers, [&](long f) {
    outcomes[static_cast<std::size_t>(f)] =
        train_fold(data, plan.folds[static_cast<std::size_t>(f)], plan.test_event_ids, arch, tc,
                   derive_seed(role_seed, "fold", static_cast<std::uint64_t>(f)));
  });
  return outcomes;
}

SearchStats run_search(const GridSpec& grid, const pipeline::PreparedData& data,
                       const windowing::SplitPlan& plan, const model::TrainConfig& tc,
                       const std::filesystem::path& log_path, int workers) {
  const auto configs = enumerate_grid(grid);
  if (plan.folds.empty() || plan.test_event_ids.empty()) {
    raise(Errc::empty_input, "search needs a rotation plan with test events");
  }

  std::set<std::string> completed;
  if (std::filesystem::exists(log_path)) {
    for (const auto& record : read_run_log(log_path)) {
      completed.insert(record.run_id);
    }
  }

  struct ConfigSlot {
    bool pending = false;
    int folds_done = 0;
    bool failed = false;
    std::string error;
    std::vector<double> fold_val_mae;
    std::vector<std::vector<eval::EventCell>> fold_event_metrics;
    double wall_time_s = 0.0;
    std::uint64_t seed = 0;
  };
  const int n_folds = static_cast<int>(plan.folds.size());
  std::vector<ConfigSlot> slots(configs.size());

  struct Job {
    std::size_t config_idx;
    int fold_idx;
  };
  std::vector<Job> jobs;
  SearchStats stats;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    const std::string run_id = configs[c].slug();
    if (completed.count(run_id) != 0) {
      ++stats.skipped;
      continue;
    }
    slots[c].pending = true;
    slots[c].fold_val_mae.assign(static_cast<std::size_t>(n_folds), 0.0);
    slots[c].fold_event_metrics.resize(static_cast<std::size_t>(n_folds));
    slots[c].seed = derive_seed(tc.seed, run_id);
    for (int f = 0; f < n_folds; ++f) {
      jobs.push_back({c, f});
    }
  }

  std::ofstream log_out(log_path, std::ios::binary | std::ios::app);
  if (!log_out) {
    raise(Errc::io_failure, "cannot open run log '" + log_path.string() + "'");
  }

  std::mutex flush_mutex;
  std::size_t write_cursor = 0;
  const auto flush_ready = [&]() {
    // Records append in enumeration order so the log content does not
    // depend on worker scheduling.
    while (write_cursor < configs.size()) {
      auto& slot = slots[write_cursor];
      if (slot.pending && slot.folds_done < n_folds) break;
      if (slot.pending) {
        RunRecord record;
        record.run_id = configs[write_cursor].slug();
        record.config = configs[write_cursor];
        record.seed = slot.seed;
        record.param_count = model::expected_param_count(record.config);
        record.wall_time_s = slot.wall_time_s;
        if (slot.failed) {
          record.status = "failed";
          record.error = slot.error;
          ++stats.failed;
        } else {
          record.status = "ok";
          record.fold_val_mae = slot.fold_val_mae;
          record.fold_event_metrics = slot.fold_event_metrics;
          const auto aggregate = eval::aggregate_events_then_folds(record.fold_event_metrics);
          record.mae_m = aggregate.mae_m;
          record.rmse_m = aggregate.rmse_m;
          ++stats.trained;
        }
        log_out << record_to_json(record).dump() << "\n";
        log_out.flush();
        if (!log_out) {
          raise(Errc::io_failure, "append failed for '" + log_path.string() + "'");
        }
        slot.fold_event_metrics.clear();
      }
      ++write_cursor;
    }
  };

  parallel_for(static_cast<long>(jobs.size()), workers, [&](long j) {
    const auto [config_idx, fold_idx] = jobs[static_cast<std::size_t>(j)];
    auto& slot = slots[config_idx];
    const auto started = std::chrono::steady_clock::now();
    std::string fold_error;
    FoldOutcome outcome{model::TrainedModel{model::TwoBranchModel(configs[config_idx], 0), {}, {}},
                        0.0,
                        {}};
    bool ok = true;
    try {
      outcome = train_fold(data, plan.folds[static_cast<std::size_t>(fold_idx)],
                           plan.test_event_ids, configs[config_idx], tc,
                           derive_seed(slot.seed, "fold", static_cast<std::uint64_t>(fold_idx)));
    } catch (const Error& e) {
      if (e.code() != Errc::non_finite_loss) throw;
      ok = false;
      fold_error = e.what();
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    {
      std::lock_guard<std::mutex> lock(flush_mutex);
      slot.wall_time_s += elapsed;
      if (ok) {
        slot.fold_val_mae[static_cast<std::size_t>(fold_idx)] = outcome.val_mae;
        slot.fold_event_metrics[static_cast<std::size_t>(fold_idx)] =
            std::move(outcome.test_metrics);
      } else {
        slot.failed = true;
        if (slot.error.empty()) slot.error = fold_error;
      }
      ++slot.folds_done;
      flush_ready();
    }
  });

  {
    std::lock_guard<std::mutex> lock(flush_mutex);
    flush_ready();
  }
  return stats;
}

std::vector<RunRecord> read_run_log(const std::filesystem::path& log_path) {
  std::ifstream in(log_path);
  if (!in) {
    raise(Errc::missing_file, "cannot open run log '" + log_path.string() + "'");
  }
  std::vector<RunRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::exception& e) {
      raise(Errc::schema_mismatch,
            log_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    records.push_back(record_from_json(doc));
  }
  return records;
}

const RunRecord& select_champion(std::span<const RunRecord> records) {
  const RunRecord* best = nullptr;
  for (const auto& record : records) {
    if (record.status != "ok") continue;
    if (best == nullptr || record_less(record, *best)) {
      best = &record;
    }
  }
  if (best == nullptr) {
    raise(Errc::empty_log, "no successful runs in the log");
  }
  return *best;
}

void export_top_runs_csv(const std::filesystem::path& path, std::span<const RunRecord> records,
                         int k) {
  std::vector<const RunRecord*> ok;
  for (const auto& record : records) {
    if (record.status == "ok") ok.push_back(&record);
  }
  if (ok.empty()) {
    raise(Errc::empty_log, "no successful runs to export");
  }
  std::sort(ok.begin(), ok.end(),
            [](const RunRecord* a, const RunRecord* b) { return record_less(*a, *b); });
  if (k < static_cast<int>(ok.size())) {
    ok.resize(static_cast<std::size_t>(k));
  }
  csv::Writer w(path,
                "run_id,rnn_type,rnn_layers,rnn_units,spatial_layers,spatial_units,spatial_act,"
                "head_units,head_act,look_back,max15,mae_m,rmse_m");
  for (const auto* record : ok) {
    const auto& config = record->config;
    w.row({record->run_id, nn::cell_name(config.rnn_type), std::to_string(config.rnn_layers),
           std::to_string(config.rnn_units), std::to_string(config.spatial_layers),
           std::to_string(config.spatial_units), nn::activation_name(config.spatial_act),
           head_units_label(config.head_units), head_act_label(config),
           std::to_string(config.look_back), config.include_max15 ? "Y" : "N",
           csv::format_double(record->mae_m), csv::format_double(record->rmse_m)});
  }
  w.finish();
}

void export_group_distribution_csv(const std::filesystem::path& path,
                                   std::span<const RunRecord> records) {
  std::map<std::pair<int, int>, std::vector<double>> by_spatial;
  std::map<std::pair<int, int>, std::vector<double>> by_head;
  for (const auto& record : records) {
    if (record.status != "ok") continue;
    by_spatial[{record.config.rnn_layers, record.config.spatial_layers}].push_back(record.mae_m);
    by_head[{record.config.rnn_layers, static_cast<int>(record.config.head_units.size())}]
        .push_back(record.mae_m);
  }
  csv::Writer w(path,
                "grouping,rnn_layers,branch_layers,count,mean_mae_m,std_mae_m,min_mae_m,"
                "p25_mae_m,median_mae_m,p75_mae_m,max_mae_m");
  const auto emit = [&w](const std::string& grouping,
                         const std::map<std::pair<int, int>, std::vector<double>>& groups) {
    for (const auto& [key, raw_values] : groups) {
      std::vector<double> values = raw_values;
      std::sort(values.begin(), values.end());
      const double n = static_cast<double>(values.size());
      double sum = 0.0;
      for (const double v : values) sum += v;
      const double mean = sum / n;
      double sq = 0.0;
      for (const double v : values) sq += (v - mean) * (v - mean);
      w.row({grouping, std::to_string(key.first), std::to_string(key.second),
             std::to_string(values.size()), csv::format_double(mean),
             csv::format_double(std::sqrt(sq / n)), csv::format_double(values.front()),
             csv::format_double(quantile(values, 0.25)), csv::format_double(quantile(values, 0.5)),
             csv::format_double(quantile(values, 0.75)), csv::format_double(values.back())});
    }
  };
  emit("rnn_layers_x_spatial_layers", by_spatial);
  emit("rnn_layers_x_head_layers", by_head);
  w.finish();
}

}  // namespace floodcast::nas
