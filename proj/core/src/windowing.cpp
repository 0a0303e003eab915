#include "floodcast/windowing.hpp"

#include <algorithm>
#include <set>

#include "floodcast/error.hpp"

namespace floodcast::windowing {

SampleBatch SampleBatch::gather(std::span<const long> order) const {
  SampleBatch out;
  out.look_back = look_back;
  out.include_max15 = include_max15;
  out.temporal_features = temporal_features;
  out.scaler_fingerprint = scaler_fingerprint;
  const long n = static_cast<long>(order.size());
  out.temporal.reserve(temporal.size());
  for (const auto& step : temporal) {
    Eigen::MatrixXd gathered(n, step.cols());
    for (long i = 0; i < n; ++i) {
      gathered.row(i) = step.row(order[static_cast<std::size_t>(i)]);
    }
    out.temporal.push_back(std::move(gathered));
  }
  out.spatial.resize(n, spatial.cols());
  out.targets.resize(n);
  out.index.resize(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    const long src = order[static_cast<std::size_t>(i)];
    out.spatial.row(i) = spatial.row(src);
    out.targets(i) = targets(src);
    out.index[static_cast<std::size_t>(i)] = index[static_cast<std::size_t>(src)];
  }
  return out;
}

SampleBatch SampleBatch::concat(std::span<const SampleBatch> batches) {
  if (batches.empty()) {
    raise(Errc::empty_batch, "cannot concatenate zero batches");
  }
  const auto& first = batches.front();
  long total = 0;
  for (const auto& batch : batches) {
    if (batch.look_back != first.look_back || batch.include_max15 != first.include_max15 ||
        batch.scaler_fingerprint != first.scaler_fingerprint) {
      raise(Errc::shape_mismatch, "batches disagree on look_back/features/scaler");
    }
    total += batch.size();
  }
  SampleBatch out;
  out.look_back = first.look_back;
  out.include_max15 = first.include_max15;
  out.temporal_features = first.temporal_features;
  out.scaler_fingerprint = first.scaler_fingerprint;
  out.temporal.resize(static_cast<std::size_t>(first.look_back));
  for (std::size_t t = 0; t < out.temporal.size(); ++t) {
    out.temporal[t].resize(total, first.temporal[t].cols());
  }
  out.spatial.resize(total, first.spatial.cols());
  out.targets.resize(total);
  out.index.reserve(static_cast<std::size_t>(total));
  long at = 0;
  for (const auto& batch : batches) {
    for (std::size_t t = 0; t < out.temporal.size(); ++t) {
      out.temporal[t].middleRows(at, batch.size()) = batch.temporal[t];
    }
    out.spatial.middleRows(at, batch.size()) = batch.spatial;
    out.targets.segment(at, batch.size()) = batch.targets;
    out.index.insert(out.index.end(), batch.index.begin(), batch.index.end());
    at += batch.size();
  }
  return out;
}

SampleBatch build_samples(const features::EventFeatureTable& table, int look_back,
                          bool include_max15) {
  if (look_back < 1) {
    raise(Errc::invalid_config, "look_back must be >= 1");
  }
  if (table.duration_hrs <= look_back) {
    raise(Errc::event_too_short, "event '" + table.event_id + "' lasts " +
                                     std::to_string(table.duration_hrs) +
                                     " h, need more than look_back=" + std::to_string(look_back));
  }
  SampleBatch batch;
  batch.look_back = look_back;
  batch.include_max15 = include_max15;
  batch.scaler_fingerprint = table.scaler_fingerprint;
  batch.temporal_features = include_max15
                                ? std::vector<std::string>{"rh_mm", "max15_mm", "hr2_mm",
                                                           "hr72_mm", "td_hr_m"}
                                : std::vector<std::string>{"rh_mm", "hr2_mm", "hr72_mm", "td_hr_m"};
  const int n_temporal = static_cast<int>(batch.temporal_features.size());
  const int per_segment = table.duration_hrs - look_back;
  const long n = static_cast<long>(per_segment) * table.n_segments();

  batch.temporal.assign(static_cast<std::size_t>(look_back), Eigen::MatrixXd(n, n_temporal));
  batch.spatial.resize(n, 3);
  batch.targets.resize(n);
  batch.index.reserve(static_cast<std::size_t>(n));

  long sample = 0;
  for (int s = 0; s < table.n_segments(); ++s) {
    for (int target_hour = look_back; target_hour < table.duration_hrs; ++target_hour) {
      const auto& target_row = table.row(s, target_hour);
      for (int step = 0; step < look_back; ++step) {
        const auto& src = table.row(s, target_hour - look_back + step);
        auto row = batch.temporal[static_cast<std::size_t>(step)].row(sample);
        int c = 0;
        row(c++) = src.rh_mm;
        if (include_max15) row(c++) = src.max15_mm;
        row(c++) = src.hr2_mm;
        row(c++) = src.hr72_mm;
        row(c++) = src.td_hr_m;
      }
      batch.spatial(sample, 0) = target_row.elv_m;
      batch.spatial(sample, 1) = target_row.twi;
      batch.spatial(sample, 2) = target_row.dtw_cm;
      batch.targets(sample) = target_row.depth_m;
      batch.index.push_back({table.event_id, target_row.segment_id, target_row.ts});
      ++sample;
    }
  }
  return batch;
}

SplitPlan loeo_splits(const std::vector<std::string>& train_events,
                      const std::vector<std::string>& test_events) {
  std::set<std::string> train_set(train_events.begin(), train_events.end());
  if (train_set.size() != train_events.size()) {
    raise(Errc::duplicate_id, "duplicate event id in the training roster");
  }
  for (const auto& id : test_events) {
    if (train_set.count(id) != 0) {
      raise(Errc::overlapping_splits, "event '" + id + "' appears in both train and test");
    }
  }
  SplitPlan plan;
  plan.test_event_ids = test_events;
  plan.folds.reserve(train_events.size());
  for (const auto& validation : train_events) {
    Fold fold;
    fold.validation_event_id = validation;
    for (const auto& id : train_events) {
      if (id != validation) fold.train_event_ids.push_back(id);
    }
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

}  // namespace floodcast::windowing
