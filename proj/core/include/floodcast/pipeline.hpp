#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "floodcast/data_store.hpp"
#include "floodcast/features.hpp"
#include "floodcast/synth_hydro.hpp"
#include "floodcast/windowing.hpp"

namespace floodcast::pipeline {

struct GenConfig {
  std::uint64_t seed = 42;
  int n_segments = 50;
  int n_gauges = 8;
  synth::Bounds bounds;
  int n_events = 16;
  int n_test_events = -1;      // -1: one quarter of the roster, at least 1
  std::vector<int> durations;  // empty: cycle the default roster durations
  double peak_mm_min = 15.0;
  double peak_mm_max = 80.0;
  double idw_power = 2.0;
  synth::OracleParams oracle;
  synth::EventGenParams event_gen;
};

// In-memory view of a prepared dataset; feature tables are raw (unscaled)
// and aligned with the events order.
struct PreparedData {
  std::vector<data::StreetSegment> segments;
  std::vector<data::RainGauge> gauges;
  std::vector<data::RainfallEvent> events;
  std::vector<features::EventFeatureTable> tables;

  const features::EventFeatureTable& table(const std::string& event_id) const;
  const data::RainfallEvent& event(const std::string& event_id) const;
  // Training events long enough for the given look-back, roster order.
  std::vector<std::string> train_event_ids(int look_back) const;
  std::vector<std::string> test_event_ids() const;
};

// Synthesizes the study area, the event roster and forcing, derives features,
// runs the depth oracle and writes the full relational file set plus
// manifest.json into out_dir.
PreparedData generate_dataset(const GenConfig& config, const std::filesystem::path& out_dir);

// Re-derives features from the raw files, writes weather.csv and fits the
// train-split scaler into scaler.json. Byte-identical to what gen wrote.
void prepare_features(const std::filesystem::path& data_dir, double idw_power = 2.0);

PreparedData load_prepared(const std::filesystem::path& data_dir);

PreparedData subset_segments(const PreparedData& data, const std::vector<int>& segment_ids);

windowing::SplitPlan split_plan(const PreparedData& data, int look_back);

struct FoldBatches {
  features::Scaler scaler;
  windowing::SampleBatch train;
  windowing::SampleBatch val;
  std::map<std::string, windowing::SampleBatch> test;
};

// Scaler fitted on the fold's training events only, then applied unchanged
// to validation and test batches.
FoldBatches build_fold_batches(const PreparedData& data, const windowing::Fold& fold,
                               const std::vector<std::string>& test_event_ids, int look_back,
                               bool include_max15);

windowing::SampleBatch build_scaled_batch(const PreparedData& data,
                                          const features::Scaler& scaler,
                                          const std::string& event_id, int look_back,
                                          bool include_max15);

}  // namespace floodcast::pipeline
