#pragma once

#include <Eigen/Dense>
#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "floodcast/model.hpp"
#include "floodcast/pipeline.hpp"
#include "floodcast/windowing.hpp"

namespace floodcast::eval {

struct Metrics {
  double mae_m = 0.0;
  double rmse_m = 0.0;
};

Metrics compute_metrics(const Eigen::VectorXd& pred, const Eigen::VectorXd& target);

struct EventCell {
  std::string event_id;
  double mae_m = 0.0;
  double rmse_m = 0.0;
  long n_samples = 0;
};

struct VariantReport {
  std::string variant;
  std::string rnn_type;   // "-" for baselines
  std::string max15;      // "Y"/"N"/"-"
  std::string look_back;
  std::vector<std::vector<EventCell>> fold_event_metrics;  // [fold][test event]
  double mae_m = 0.0;
  double rmse_m = 0.0;
  // Optional sensitivity variant: pooled over every sample instead of the
  // events-then-folds mean chain.
  bool has_pooled = false;
  double pooled_mae_m = 0.0;
  double pooled_rmse_m = 0.0;
};

// Reporting protocol: unweighted mean over test events inside each fold,
// then unweighted mean over folds.
Metrics aggregate_events_then_folds(const std::vector<std::vector<EventCell>>& fold_event_metrics);

struct MetricsReport {
  std::vector<VariantReport> rows;

  // Enforces rmse >= mae on every cell and that the stored aggregates
  // recompute from the per-fold cells to 1e-12.
  void validate() const;
};

// Scores one variant's rotation of fold models over the test events; every
// fold's batches are scaled with that fold's own scaler.
VariantReport evaluate_variant(const std::string& variant, const std::string& rnn_type,
                               const std::string& max15, const std::string& look_back,
                               std::span<const model::TrainedModel> fold_models,
                               const pipeline::PreparedData& data,
                               const std::vector<std::string>& test_event_ids, bool with_pooled);

// Zero-depth, train-mean and previous-hour persistence yardsticks computed
// under the same fold rotation and first-look_back-hours exclusion as the
// models.
std::vector<VariantReport> baseline_predictors(const pipeline::PreparedData& data,
                                               const windowing::SplitPlan& plan, int look_back,
                                               bool with_pooled);

inline constexpr std::array<std::string_view, 9> k_correlation_columns = {
    "depth_m", "rh_mm", "max15_mm", "hr2_mm", "hr72_mm", "td_hr_m", "elv_m", "twi", "dtw_cm"};

// Pearson correlations over the pooled rows of the given tables. Columns
// with zero variance get NaN entries.
Eigen::MatrixXd correlation_matrix(std::span<const features::EventFeatureTable> tables);

void write_correlations_csv(const std::filesystem::path& path, const Eigen::MatrixXd& matrix);
void write_report_csv(const std::filesystem::path& path, const MetricsReport& report);
void write_report_detail_csv(const std::filesystem::path& path, const MetricsReport& report);
void write_report_pooled_csv(const std::filesystem::path& path, const MetricsReport& report);

}  // namespace floodcast::eval
