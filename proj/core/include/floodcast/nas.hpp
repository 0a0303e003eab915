#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "floodcast/eval.hpp"
#include "floodcast/model.hpp"
#include "floodcast/pipeline.hpp"
#include "floodcast/windowing.hpp"

namespace floodcast::nas {

// Option sets of the architecture grid; the Cartesian product is searched.
struct GridSpec {
  std::vector<nn::CellType> rnn_types = {nn::CellType::lstm};
  std::vector<int> rnn_layers = {1, 2, 3};
  std::vector<int> rnn_units = {12, 20};
  std::vector<int> spatial_layers = {2, 3};
  std::vector<int> spatial_units = {4, 8};
  std::vector<nn::Activation> spatial_acts = {nn::Activation::relu, nn::Activation::selu,
                                              nn::Activation::linear};
  std::vector<std::vector<int>> head_units = {
      {64, 64, 1}, {32, 32, 1}, {32, 16, 1}, {64, 64, 16, 1}, {64, 32, 32, 1}};
  std::vector<nn::Activation> head_acts = {nn::Activation::relu, nn::Activation::selu,
                                           nn::Activation::linear};
  std::vector<int> look_backs = {4};
  std::vector<bool> max15_options = {false};

  void validate() const;

  // The full option table for one (cell type, look-back, max15) setting:
  // 3*2*2*2*3*5*3 = 1080 configurations.
  static GridSpec full_table(nn::CellType cell, int look_back, bool max15);
  // Everything: both cell types, both look-backs, max15 on/off.
  static GridSpec full();
  // Desk-scale preset, 16 configurations.
  static GridSpec mini();
  // Two-configuration smoke preset.
  static GridSpec micro();
};

// Deterministic enumeration: odometer over the axes in declared order
// (rnn_type slowest, max15 fastest).
std::vector<model::ArchConfig> enumerate_grid(const GridSpec& spec);

GridSpec load_grid_json(const std::filesystem::path& path);
// Accepts a preset name ("full", "mini", "micro", "table-lstm", "table-gru")
// or a path to a grid JSON file.
GridSpec resolve_grid(const std::string& name_or_path);

struct RunRecord {
  std::string run_id;
  model::ArchConfig config;
  std::string status;  // "ok" or "failed"
  std::string error;
  std::vector<double> fold_val_mae;
  std::vector<std::vector<eval::EventCell>> fold_event_metrics;
  double mae_m = std::numeric_limits<double>::quiet_NaN();
  double rmse_m = std::numeric_limits<double>::quiet_NaN();
  long param_count = 0;
  double wall_time_s = 0.0;
  std::uint64_t seed = 0;
};

struct FoldOutcome {
  model::TrainedModel trained;
  double val_mae = 0.0;
  std::vector<eval::EventCell> test_metrics;
};

// Trains one rotation fold: fits the fold scaler on its training events,
// trains the network and scores every test event with that fold's scaler.
FoldOutcome train_fold(const pipeline::PreparedData& data, const windowing::Fold& fold,
                       const std::vector<std::string>& test_event_ids,
                       const model::ArchConfig& arch, const model::TrainConfig& tc,
                       std::uint64_t seed);

// Full rotation of one architecture, folds run in parallel. Seeds derive
// from (tc.seed, seed_role, fold index) so results do not depend on the
// worker count.
std::vector<FoldOutcome> run_rotation(const pipeline::PreparedData& data,
                                      const windowing::SplitPlan& plan,
                                      const model::ArchConfig& arch,
                                      const model::TrainConfig& tc, std::string_view seed_role,
                                      int workers);

struct SearchStats {
  int trained = 0;
  int skipped = 0;
  int failed = 0;
};

// Grid search with the leave-one-event-out rotation per configuration.
// Records append to `log_path` in enumeration order as JSON lines;
// configurations already present in the log are skipped, so an interrupted
// search resumes where it stopped. A diverged configuration is recorded as
// failed and the search continues.
SearchStats run_search(const GridSpec& grid, const pipeline::PreparedData& data,
                       const windowing::SplitPlan& plan, const model::TrainConfig& tc,
                       const std::filesystem::path& log_path, int workers);

std::vector<RunRecord> read_run_log(const std::filesystem::path& log_path);

// Lowest aggregate MAE among successful runs; ties break on lower RMSE,
// then fewer parameters, then run_id.
const RunRecord& select_champion(std::span<const RunRecord> records);

// Top-k runs by aggregate MAE, ascending, for parallel-coordinates plots.
void export_top_runs_csv(const std::filesystem::path& path, std::span<const RunRecord> records,
                         int k);

// MAE distribution summaries grouped by (rnn_layers, spatial_layers) and
// (rnn_layers, head_layers).
void export_group_distribution_csv(const std::filesystem::path& path,
                                   std::span<const RunRecord> records);

}  // namespace floodcast::nas
