#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "floodcast/features.hpp"

namespace floodcast::windowing {

struct SampleKey {
  std::string event_id;
  int segment_id = 0;
  timeutil::Timestamp ts = 0;  // the predicted hour

  bool operator==(const SampleKey&) const = default;
};

// RNN-ready rows. temporal[t] holds the features of window step t for every
// sample, so the three tensors stay aligned row-for-row with `index`.
struct SampleBatch {
  std::vector<Eigen::MatrixXd> temporal;  // look_back matrices of [n, n_temporal]
  Eigen::MatrixXd spatial;                // [n, 3] = (elv, twi, dtw)
  Eigen::VectorXd targets;                // [n] depth in meters
  std::vector<SampleKey> index;
  int look_back = 0;
  bool include_max15 = false;
  std::vector<std::string> temporal_features;
  std::string scaler_fingerprint;

  long size() const { return targets.size(); }
  bool empty() const { return targets.size() == 0; }

  // Row gather; `order` may permute or repeat rows.
  SampleBatch gather(std::span<const long> order) const;

  static SampleBatch concat(std::span<const SampleBatch> batches);
};

// One sample per (segment, hour t) with t in [look_back, duration); the
// window covers hours [t - look_back, t - 1] only, so the first look_back
// hours of every event yield no samples and no window crosses an event
// boundary. Temporal features are (rh, hr2, hr72, td_hr) plus max15 when
// requested.
SampleBatch build_samples(const features::EventFeatureTable& table, int look_back,
                          bool include_max15);

struct Fold {
  std::vector<std::string> train_event_ids;
  std::string validation_event_id;
};

struct SplitPlan {
  std::vector<Fold> folds;
  std::vector<std::string> test_event_ids;
};

// One fold per training event: that event validates, the rest train.
SplitPlan loeo_splits(const std::vector<std::string>& train_events,
                      const std::vector<std::string>& test_events);

}  // namespace floodcast::windowing
