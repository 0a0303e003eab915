#include "floodcast/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "floodcast/csv.hpp"
#include "floodcast/error.hpp"

namespace floodcast::eval {

namespace {

constexpr double k_recompute_tol = 1e-12;

struct PooledAccumulator {
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  long n = 0;

  void add(const Eigen::VectorXd& pred, const Eigen::VectorXd& target) {
    for (long i = 0; i < pred.size(); ++i) {
      const double e = pred(i) - target(i);
      abs_sum += std::abs(e);
      sq_sum += e * e;
    }
    n += pred.size();
  }
  Metrics metrics() const {
    return {abs_sum / static_cast<double>(n), std::sqrt(sq_sum / static_cast<double>(n))};
  }
};

}  // namespace

Metrics compute_metrics(const Eigen::VectorXd& pred, const Eigen::VectorXd& target) {
  if (pred.size() == 0) {
    raise(Errc::empty_input, "metrics of an empty prediction vector");
  }
  if (pred.size() != target.size()) {
    raise(Errc::length_mismatch, "prediction and target lengths differ (" +
                                     std::to_string(pred.size()) + " vs " +
                                     std::to_string(target.size()) + ")");
  }
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  for (long i = 0; i < pred.size(); ++i) {
    const double e = pred(i) - target(i);
    abs_sum += std::abs(e);
    sq_sum += e * e;
  }
  const double n = static_cast<double>(pred.size());
  return {abs_sum / n, std::sqrt(sq_sum / n)};
}

Metrics aggregate_events_then_folds(
    const std::vector<std::vector<EventCell>>& fold_event_metrics) {
  if (fold_event_metrics.empty()) {
    raise(Errc::empty_input, "no folds to aggregate");
  }
  double mae_sum = 0.0;
  double rmse_sum = 0.0;
  for (const auto& fold : fold_event_metrics) {
    if (fold.empty()) {
      raise(Errc::empty_input, "fold without event metrics");
    }
    double fold_mae = 0.0;
    double fold_rmse = 0.0;
    for (const auto& cell : fold) {
      fold_mae += cell.mae_m;
      fold_rmse += cell.rmse_m;
    }
    mae_sum += fold_mae / static_cast<double>(fold.size());
    rmse_sum += fold_rmse / static_cast<double>(fold.size());
  }
  const double folds = static_cast<double>(fold_event_metrics.size());
  return {mae_sum / folds, rmse_sum / folds};
}

void MetricsReport::validate() const {
  for (const auto& row : rows) {
    for (const auto& fold : row.fold_event_metrics) {
      for (const auto& cell : fold) {
        if (!(cell.rmse_m >= cell.mae_m) || !(cell.mae_m >= 0.0)) {
          raise(Errc::non_finite_value, "metric cell violates rmse >= mae >= 0 for variant '" +
                                            row.variant + "', event '" + cell.event_id + "'");
        }
      }
    }
    const auto recomputed = aggregate_events_then_folds(row.fold_event_metrics);
    if (std::abs(recomputed.mae_m - row.mae_m) > k_recompute_tol ||
        std::abs(recomputed.rmse_m - row.rmse_m) > k_recompute_tol) {
      raise(Errc::non_finite_value,
            "aggregates for variant '" + row.variant + "' do not recompute from their parts");
    }
  }
}

VariantReport evaluate_variant(const std::string& variant, const std::string& rnn_type,
                               const std::string& max15, const std::string& look_back,
                               std::span<const model::TrainedModel> fold_models,
                               const pipeline::PreparedData& data,
                               const std::vector<std::string>& test_event_ids, bool with_pooled) {
  if (fold_models.empty()) {
    raise(Errc::missing_fold_model, "variant '" + variant + "' has no trained fold models");
  }
  VariantReport report;
  report.variant = variant;
  report.rnn_type = rnn_type;
  report.max15 = max15;
  report.look_back = look_back;
  PooledAccumulator pooled;
  for (const auto& trained : fold_models) {
    const auto& config = trained.net.config();
    std::vector<EventCell> cells;
    cells.reserve(test_event_ids.size());
    for (const auto& event_id : test_event_ids) {
      const auto batch = pipeline::build_scaled_batch(data, trained.scaler, event_id,
                                                      config.look_back, config.include_max15);
      const auto pred = model::predict(trained, batch);
      const auto metrics = compute_metrics(pred, batch.targets);
      cells.push_back({event_id, metrics.mae_m, metrics.rmse_m, batch.size()});
      if (with_pooled) {
        pooled.add(pred, batch.targets);
      }
    }
    report.fold_event_metrics.push_back(std::move(cells));
  }
  const auto aggregate = aggregate_events_then_folds(report.fold_event_metrics);
  report.mae_m = aggregate.mae_m;
  report.rmse_m = aggregate.rmse_m;
  if (with_pooled) {
    report.has_pooled = true;
    const auto pooled_metrics = pooled.metrics();
    report.pooled_mae_m = pooled_metrics.mae_m;
    report.pooled_rmse_m = pooled_metrics.rmse_m;
  }
  return report;
}

std::vector<VariantReport> baseline_predictors(const pipeline::PreparedData& data,
                                               const windowing::SplitPlan& plan, int look_back,
                                               bool with_pooled) {
  if (plan.test_event_ids.empty() || plan.folds.empty()) {
    raise(Errc::empty_input, "baselines need at least one fold and one test event");
  }

  // Unscaled batches carry the targets and the sample exclusion; features
  // are irrelevant to these predictors.
  struct TestView {
    std::string event_id;
    Eigen::VectorXd targets;
    Eigen::VectorXd persistence;  // depth at the previous hour
  };
  std::vector<TestView> views;
  for (const auto& event_id : plan.test_event_ids) {
    const auto& table = data.table(event_id);
    if (!table.has_depth) {
      raise(Errc::empty_input, "event '" + event_id + "' has no depth targets");
    }
    const auto batch = windowing::build_samples(table, look_back, false);
    TestView view;
    view.event_id = event_id;
    view.targets = batch.targets;
    view.persistence.resize(batch.size());
    long at = 0;
    for (int s = 0; s < table.n_segments(); ++s) {
      for (int hour = look_back; hour < table.duration_hrs; ++hour) {
        view.persistence(at++) = table.row(s, hour - 1).depth_m;
      }
    }
    views.push_back(std::move(view));
  }

  VariantReport zero;
  zero.variant = "baseline-zero";
  VariantReport mean;
  mean.variant = "baseline-mean";
  VariantReport persistence;
  persistence.variant = "baseline-persistence";
  for (auto* row : {&zero, &mean, &persistence}) {
    row->rnn_type = "-";
    row->max15 = "-";
    row->look_back = std::to_string(look_back);
  }

  PooledAccumulator zero_pool, mean_pool, persist_pool;
  for (const auto& fold : plan.folds) {
    double target_sum = 0.0;
    long target_n = 0;
    for (const auto& event_id : fold.train_event_ids) {
      const auto& table = data.table(event_id);
      const auto batch = windowing::build_samples(table, look_back, false);
      target_sum += batch.targets.sum();
      target_n += batch.size();
    }
    const double train_mean = target_sum / static_cast<double>(target_n);

    std::vector<EventCell> zero_cells, mean_cells, persist_cells;
    for (const auto& view : views) {
      const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(view.targets.size());
      const Eigen::VectorXd means =
          Eigen::VectorXd::Constant(view.targets.size(), train_mean);
      const auto zero_metrics = compute_metrics(zeros, view.targets);
      const auto mean_metrics = compute_metrics(means, view.targets);
      const auto persist_metrics = compute_metrics(view.persistence, view.targets);
      zero_cells.push_back(
          {view.event_id, zero_metrics.mae_m, zero_metrics.rmse_m, view.targets.size()});
      mean_cells.push_back(
          {view.event_id, mean_metrics.mae_m, mean_metrics.rmse_m, view.targets.size()});
      persist_cells.push_back(
          {view.event_id, persist_metrics.mae_m, persist_metrics.rmse_m, view.targets.size()});
      if (with_pooled) {
        zero_pool.add(zeros, view.targets);
        mean_pool.add(means, view.targets);
        persist_pool.add(view.persistence, view.targets);
      }
    }
    zero.fold_event_metrics.push_back(std::move(zero_cells));
    mean.fold_event_metrics.push_back(std::move(mean_cells));
    persistence.fold_event_metrics.push_back(std::move(persist_cells));
  }

  std::vector<VariantReport> out;
  for (auto* row : {&zero, &mean, &persistence}) {
    const auto aggregate = aggregate_events_then_folds(row->fold_event_metrics);
    row->mae_m = aggregate.mae_m;
    row->rmse_m = aggregate.rmse_m;
  }
  if (with_pooled) {
    zero.has_pooled = mean.has_pooled = persistence.has_pooled = true;
    const auto zp = zero_pool.metrics();
    zero.pooled_mae_m = zp.mae_m;
    zero.pooled_rmse_m = zp.rmse_m;
    const auto mp = mean_pool.metrics();
    mean.pooled_mae_m = mp.mae_m;
    mean.pooled_rmse_m = mp.rmse_m;
    const auto pp = persist_pool.metrics();
    persistence.pooled_mae_m = pp.mae_m;
    persistence.pooled_rmse_m = pp.rmse_m;
  }
  out.push_back(std::move(zero));
  out.push_back(std::move(mean));
  out.push_back(std::move(persistence));
  return out;
}

Eigen::MatrixXd correlation_matrix(std::span<const features::EventFeatureTable> tables) {
  long n = 0;
  for (const auto& table : tables) {
    n += static_cast<long>(table.rows.size());
  }
  if (n < 2) {
    raise(Errc::insufficient_rows, "correlation needs at least 2 rows");
  }
  const int cols = static_cast<int>(k_correlation_columns.size());
  bool all_depth = true;
  for (const auto& table : tables) {
    all_depth = all_depth && table.has_depth;
  }

  Eigen::MatrixXd values(n, cols);
  long at = 0;
  for (const auto& table : tables) {
    for (const auto& row : table.rows) {
      values(at, 0) = table.has_depth ? row.depth_m : std::numeric_limits<double>::quiet_NaN();
      for (int c = 1; c < cols; ++c) {
        values(at, c) = features::get_feature(row, k_correlation_columns[static_cast<std::size_t>(c)]);
      }
      ++at;
    }
  }

  const Eigen::RowVectorXd means = values.colwise().mean();
  Eigen::MatrixXd centered = values.rowwise() - means;
  Eigen::VectorXd norms(cols);
  for (int c = 0; c < cols; ++c) {
    norms(c) = centered.col(c).norm();
  }
  Eigen::MatrixXd corr(cols, cols);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int a = 0; a < cols; ++a) {
    for (int b = 0; b < cols; ++b) {
      if (norms(a) == 0.0 || norms(b) == 0.0 || (a == 0 && !all_depth) ||
          (b == 0 && !all_depth)) {
        corr(a, b) = nan;
      } else if (a == b) {
        corr(a, b) = 1.0;
      } else {
        corr(a, b) = centered.col(a).dot(centered.col(b)) / (norms(a) * norms(b));
      }
    }
  }
  return corr;
}

void write_correlations_csv(const std::filesystem::path& path, const Eigen::MatrixXd& matrix) {
  std::string header;
  for (const auto& name : k_correlation_columns) {
    header += ",";
    header += name;
  }
  csv::Writer w(path, header);
  for (int r = 0; r < matrix.rows(); ++r) {
    std::vector<std::string> cells;
    cells.emplace_back(k_correlation_columns[static_cast<std::size_t>(r)]);
    for (int c = 0; c < matrix.cols(); ++c) {
      cells.push_back(std::isnan(matrix(r, c)) ? "nan" : csv::format_double(matrix(r, c)));
    }
    w.row(cells);
  }
  w.finish();
}

void write_report_csv(const std::filesystem::path& path, const MetricsReport& report) {
  report.validate();
  csv::Writer w(path, "variant,rnn_type,max15,look_back,mae_m,rmse_m");
  for (const auto& row : report.rows) {
    w.row({row.variant, row.rnn_type, row.max15, row.look_back, csv::format_double(row.mae_m),
           csv::format_double(row.rmse_m)});
  }
  w.finish();
}

void write_report_detail_csv(const std::filesystem::path& path, const MetricsReport& report) {
  csv::Writer w(path, "variant,fold,event_id,mae_m,rmse_m,n_samples");
  for (const auto& row : report.rows) {
    for (std::size_t fold = 0; fold < row.fold_event_metrics.size(); ++fold) {
      for (const auto& cell : row.fold_event_metrics[fold]) {
        w.row({row.variant, std::to_string(fold), cell.event_id, csv::format_double(cell.mae_m),
               csv::format_double(cell.rmse_m), std::to_string(cell.n_samples)});
      }
    }
  }
  w.finish();
}

void write_report_pooled_csv(const std::filesystem::path& path, const MetricsReport& report) {
  csv::Writer w(path, "variant,rnn_type,max15,look_back,mae_m,rmse_m");
  for (const auto& row : report.rows) {
    if (!row.has_pooled) continue;
    w.row({row.variant, row.rnn_type, row.max15, row.look_back,
           csv::format_double(row.pooled_mae_m), csv::format_double(row.pooled_rmse_m)});
  }
  w.finish();
}

}  // namespace floodcast::eval
