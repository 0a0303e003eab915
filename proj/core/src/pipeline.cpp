#include "floodcast/pipeline.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "floodcast/error.hpp"
#include "floodcast/rng.hpp"

namespace floodcast::pipeline {

namespace {

using json = nlohmann::ordered_json;

// Realistic spread of storm-event lengths, cycled when more events are asked
// for; includes one long multi-day event and one short 11-hour burst.
const std::vector<int>& default_durations() {
  static const std::vector<int> durations = {28, 34, 16, 28, 60, 37, 23, 22,
                                             34, 25, 29, 24, 26, 37, 11, 24};
  return durations;
}

std::string event_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "ev%03d", index + 1);
  return std::string(buf);
}

}  // namespace

const features::EventFeatureTable& PreparedData::table(const std::string& event_id) const {
  for (const auto& t : tables) {
    if (t.event_id == event_id) return t;
  }
  raise(Errc::unknown_event, "no feature table for event '" + event_id + "'");
}

const data::RainfallEvent& PreparedData::event(const std::string& event_id) const {
  for (const auto& e : events) {
    if (e.event_id == event_id) return e;
  }
  raise(Errc::unknown_event, "event '" + event_id + "' is not in the roster");
}

std::vector<std::string> PreparedData::train_event_ids(int look_back) const {
  std::vector<std::string> ids;
  for (const auto& e : events) {
    if (e.split == data::Split::train && e.usable_for_training(look_back)) {
      ids.push_back(e.event_id);
    }
  }
  return ids;
}

std::vector<std::string> PreparedData::test_event_ids() const {
  std::vector<std::string> ids;
  for (const auto& e : events) {
    if (e.split == data::Split::test) {
      ids.push_back(e.event_id);
    }
  }
  return ids;
}

PreparedData generate_dataset(const GenConfig& config, const std::filesystem::path& out_dir) {
  if (config.n_events < 2) {
    raise(Errc::invalid_count, "need at least 2 events (one train, one test)");
  }
  PreparedData out;
  const auto area =
      synth::gen_study_area(config.n_segments, config.n_gauges, config.bounds, config.seed);
  out.segments = area.segments;
  out.gauges = area.gauges;

  const auto& duration_pool = config.durations.empty() ? default_durations() : config.durations;
  const int n_test = config.n_test_events >= 0 ? config.n_test_events
                                               : std::max(1, config.n_events / 4);
  if (n_test >= config.n_events) {
    raise(Errc::invalid_count, "test events must leave at least one training event");
  }

  Rng peak_rng(derive_seed(config.seed, "peaks"));
  auto start = timeutil::parse_iso("2016-06-05T00:00:00");
  std::map<std::string, data::EventSeries> series;
  for (int i = 0; i < config.n_events; ++i) {
    data::RainfallEvent event;
    event.event_id = event_name(i);
    event.duration_hrs = duration_pool[static_cast<std::size_t>(i) % duration_pool.size()];
    event.start = start;
    event.end = start + (event.duration_hrs - 1) * timeutil::k_hour_s;
    event.split = i >= config.n_events - n_test ? data::Split::test : data::Split::train;
    const double peak_mm = peak_rng.uniform(config.peak_mm_min, config.peak_mm_max);
    series.emplace(event.event_id,
                   synth::gen_event(area, event, peak_mm, config.seed, config.event_gen));
    out.events.push_back(event);
    // Space rosters a week-plus apart so tide rows never collide.
    start += ((event.duration_hrs + 23) / 24 + 6) * 86400;
  }

  out.tables.reserve(out.events.size());
  for (const auto& event : out.events) {
    const auto& ev_series = series.at(event.event_id);
    auto table = features::derive_rainfall_features(ev_series, out.segments, out.gauges, event,
                                                    config.idw_power);
    features::attach_static_and_tide(table, out.segments, ev_series.tide);
    synth::oracle_depths(area, table, config.oracle);
    out.tables.push_back(std::move(table));
  }

  data::save_relational(out.segments, out.gauges, out.events, series, out.tables, out_dir);
  {
    json manifest{{"seed", config.seed},
                  {"n_segments", config.n_segments},
                  {"n_gauges", config.n_gauges},
                  {"oracle_params",
                   json{{"retention", config.oracle.retention},
                        {"rain_gain", config.oracle.rain_gain},
                        {"twi_gain", config.oracle.twi_gain},
                        {"tide_gain", config.oracle.tide_gain},
                        {"dtw_gain", config.oracle.dtw_gain}}}};
    std::ofstream manifest_out(out_dir / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!manifest_out) {
      raise(Errc::io_failure, "cannot write '" + (out_dir / "manifest.json").string() + "'");
    }
    manifest_out << manifest.dump(2) << "\n";
  }
  return out;
}

void prepare_features(const std::filesystem::path& data_dir, double idw_power) {
  auto [segments, gauges] = data::load_study_area(data_dir / "segments.csv",
                                                  data_dir / "gauges.csv");
  const auto events = data::load_events(data_dir / "events.csv");
  const auto series = data::load_event_series(data_dir / "raw_rain.csv", data_dir / "tide.csv",
                                              data_dir / "events.csv");
  std::vector<features::EventFeatureTable> tables;
  tables.reserve(events.size());
  for (const auto& event : events) {
    auto table = features::derive_rainfall_features(series.at(event.event_id), segments, gauges,
                                                    event, idw_power);
    features::attach_static_and_tide(table, segments, series.at(event.event_id).tide);
    tables.push_back(std::move(table));
  }
  features::write_weather_csv(data_dir / "weather.csv", tables);

  std::vector<features::EventFeatureTable> train_tables;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (events[i].split == data::Split::train) {
      train_tables.push_back(tables[i]);
    }
  }
  if (train_tables.empty()) {
    raise(Errc::empty_table, "no training events in the manifest");
  }
  std::vector<std::string> all_features(features::k_all_features.begin(),
                                        features::k_all_features.end());
  const auto scaler = features::fit_scaler(train_tables, all_features);
  features::save_scaler_json(data_dir / "scaler.json", scaler);
}

PreparedData load_prepared(const std::filesystem::path& data_dir) {
  PreparedData out;
  auto area = data::load_study_area(data_dir / "segments.csv", data_dir / "gauges.csv");
  out.segments = std::move(area.first);
  out.gauges = std::move(area.second);
  out.events = data::load_events(data_dir / "events.csv");
  const auto series = data::load_event_series(data_dir / "raw_rain.csv", data_dir / "tide.csv",
                                              data_dir / "events.csv");
  out.tables = features::load_feature_tables(data_dir, out.segments, out.events, series);
  return out;
}

PreparedData subset_segments(const PreparedData& data, const std::vector<int>& segment_ids) {
  std::vector<int> wanted = segment_ids;
  std::sort(wanted.begin(), wanted.end());
  PreparedData out;
  out.gauges = data.gauges;
  out.events = data.events;
  for (const auto& seg : data.segments) {
    if (std::binary_search(wanted.begin(), wanted.end(), seg.segment_id)) {
      out.segments.push_back(seg);
    }
  }
  if (out.segments.size() != wanted.size()) {
    raise(Errc::unknown_segment, "subset references segments outside the study area");
  }
  out.tables.reserve(data.tables.size());
  for (const auto& table : data.tables) {
    features::EventFeatureTable sub;
    sub.event_id = table.event_id;
    sub.start = table.start;
    sub.duration_hrs = table.duration_hrs;
    sub.has_depth = table.has_depth;
    sub.scaler_fingerprint = table.scaler_fingerprint;
    for (int s = 0; s < table.n_segments(); ++s) {
      if (!std::binary_search(wanted.begin(), wanted.end(), table.segment_ids[s])) continue;
      sub.segment_ids.push_back(table.segment_ids[s]);
      for (int h = 0; h < table.duration_hrs; ++h) {
        sub.rows.push_back(table.row(s, h));
      }
    }
    out.tables.push_back(std::move(sub));
  }
  return out;
}

windowing::SplitPlan split_plan(const PreparedData& data, int look_back) {
  return windowing::loeo_splits(data.train_event_ids(look_back), data.test_event_ids());
}

FoldBatches build_fold_batches(const PreparedData& data, const windowing::Fold& fold,
                               const std::vector<std::string>& test_event_ids, int look_back,
                               bool include_max15) {
  std::vector<features::EventFeatureTable> train_tables;
  train_tables.reserve(fold.train_event_ids.size());
  for (const auto& id : fold.train_event_ids) {
    train_tables.push_back(data.table(id));
  }
  std::vector<std::string> all_features(features::k_all_features.begin(),
                                        features::k_all_features.end());
  FoldBatches out;
  out.scaler = features::fit_scaler(train_tables, all_features);

  std::vector<windowing::SampleBatch> train_batches;
  train_batches.reserve(train_tables.size());
  for (const auto& table : train_tables) {
    train_batches.push_back(windowing::build_samples(features::apply_scaler(out.scaler, table),
                                                     look_back, include_max15));
  }
  out.train = windowing::SampleBatch::concat(train_batches);
  out.val = build_scaled_batch(data, out.scaler, fold.validation_event_id, look_back,
                               include_max15);
  for (const auto& id : test_event_ids) {
    out.test.emplace(id, build_scaled_batch(data, out.scaler, id, look_back, include_max15));
  }
  return out;
}

windowing::SampleBatch build_scaled_batch(const PreparedData& data,
                                          const features::Scaler& scaler,
                                          const std::string& event_id, int look_back,
                                          bool include_max15) {
  return windowing::build_samples(features::apply_scaler(scaler, data.table(event_id)), look_back,
                                  include_max15);
}

}  // namespace floodcast::pipeline
