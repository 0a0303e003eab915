#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "floodcast/timeutil.hpp"

namespace floodcast::features {
struct EventFeatureTable;
}

namespace floodcast::data {

// One 50 m road segment with its static terrain descriptors.
struct StreetSegment {
  int segment_id = 0;
  double x_m = 0.0, y_m = 0.0;
  std::string street_name;
  double elv_m = 0.0;   // mean elevation, m
  double twi = 0.0;     // topographic wetness index, dimensionless
  double dtw_cm = 0.0;  // depth to water table, cm

  bool operator==(const StreetSegment&) const = default;
};

struct RainGauge {
  int gauge_id = 0;
  double x_m = 0.0, y_m = 0.0;

  bool operator==(const RainGauge&) const = default;
};

enum class Split { train, test };

std::string split_name(Split split);
Split parse_split(std::string_view text);

struct RainfallEvent {
  std::string event_id;
  timeutil::Timestamp start = 0;
  timeutil::Timestamp end = 0;  // inclusive final hour
  Split split = Split::train;
  int duration_hrs = 0;

  // An event must provide at least two windowed samples per segment to be
  // worth training on; shorter events stay loadable but are skipped.
  bool usable_for_training(int look_back) const { return duration_hrs >= look_back + 2; }

  bool operator==(const RainfallEvent&) const = default;
};

struct TidePoint {
  timeutil::Timestamp ts = 0;
  double td_hr_m = 0.0;

  bool operator==(const TidePoint&) const = default;
};
using TideSeries = std::vector<TidePoint>;

struct RainPoint {
  timeutil::Timestamp ts = 0;  // 15-minute grid
  double rain_mm = 0.0;

  bool operator==(const RainPoint&) const = default;
};
using QuarterHourRainSeries = std::vector<RainPoint>;

// Raw forcing for one event, trimmed exactly to its window.
struct EventSeries {
  std::map<int, QuarterHourRainSeries> rain_by_gauge;
  TideSeries tide;

  bool operator==(const EventSeries&) const = default;
};

// CSV schemas. All numeric fields use plain decimal notation.
inline constexpr std::string_view k_segments_header = "segment_id,x_m,y_m,street_name,elv_m,twi,dtw_cm";
inline constexpr std::string_view k_gauges_header = "gauge_id,x_m,y_m";
inline constexpr std::string_view k_raw_rain_header = "gauge_id,timestamp,rain_mm";
inline constexpr std::string_view k_tide_header = "timestamp,td_hr_m";
inline constexpr std::string_view k_events_header = "event_id,start,end,split";
inline constexpr std::string_view k_weather_header = "segment_id,timestamp,rh_mm,max15_mm,hr2_mm,hr72_mm";
inline constexpr std::string_view k_depths_header = "segment_id,timestamp,depth_m";

std::pair<std::vector<StreetSegment>, std::vector<RainGauge>> load_study_area(
    const std::filesystem::path& segments_csv, const std::filesystem::path& gauges_csv);

std::vector<RainfallEvent> load_events(const std::filesystem::path& events_csv);

// Loads raw gauge rain and tide rows and slices them per event. Every event
// window must be fully covered (CoverageGap otherwise). When `only_events`
// is non-null, restricts to those ids (UnknownEvent if one is absent).
std::map<std::string, EventSeries> load_event_series(
    const std::filesystem::path& raw_rain_csv, const std::filesystem::path& tide_csv,
    const std::filesystem::path& events_csv,
    const std::vector<std::string>* only_events = nullptr);

// Writes the whole relational file set (segments/gauges/events/raw_rain/tide
// plus weather/depths when feature tables are given). Validates foreign keys
// and window disjointness before touching the filesystem.
void save_relational(const std::vector<StreetSegment>& segments,
                     const std::vector<RainGauge>& gauges,
                     const std::vector<RainfallEvent>& events,
                     const std::map<std::string, EventSeries>& series,
                     const std::vector<features::EventFeatureTable>& feature_tables,
                     const std::filesystem::path& out_dir);

}  // namespace floodcast::data
