#pragma once

#include <array>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "floodcast/data_store.hpp"
#include "floodcast/timeutil.hpp"

namespace floodcast::features {

// One (segment, hour) row of engineered model inputs plus the optional
// water-depth target. Rainfall fields are already interpolated to the
// segment location.
struct FeatureRow {
  int segment_id = 0;
  timeutil::Timestamp ts = 0;
  double rh_mm = 0.0;     // total rainfall in the hour
  double max15_mm = 0.0;  // largest quarter-hour total within the hour
  double hr2_mm = 0.0;    // cumulative rain, current + previous hour
  double hr72_mm = 0.0;   // cumulative rain over the trailing 72 hours
  double td_hr_m = 0.0;   // hourly tide level
  double elv_m = 0.0;
  double twi = 0.0;
  double dtw_cm = 0.0;
  double depth_m = std::numeric_limits<double>::quiet_NaN();

  bool operator==(const FeatureRow&) const = default;
};

inline constexpr std::array<std::string_view, 8> k_all_features = {
    "rh_mm", "max15_mm", "hr2_mm", "hr72_mm", "td_hr_m", "elv_m", "twi", "dtw_cm"};

double get_feature(const FeatureRow& row, std::string_view name);
void set_feature(FeatureRow& row, std::string_view name, double value);

// Rows are segment-major with hours ascending inside each segment, so
// row index = segment_index * duration_hrs + hour.
struct EventFeatureTable {
  std::string event_id;
  timeutil::Timestamp start = 0;
  int duration_hrs = 0;
  std::vector<int> segment_ids;  // ascending
  std::vector<FeatureRow> rows;
  bool has_depth = false;
  std::string scaler_fingerprint;  // empty while unscaled

  int n_segments() const { return static_cast<int>(segment_ids.size()); }
  FeatureRow& row(int segment_index, int hour) {
    return rows[static_cast<std::size_t>(segment_index) * duration_hrs + hour];
  }
  const FeatureRow& row(int segment_index, int hour) const {
    return rows[static_cast<std::size_t>(segment_index) * duration_hrs + hour];
  }

  bool operator==(const EventFeatureTable&) const = default;
};

struct GaugeValue {
  double x_m = 0.0, y_m = 0.0;
  double value = 0.0;
};

// Inverse-distance weighting with w_i = d_i^(-power). A target closer than
// 1e-9 m to a gauge takes that gauge's value exactly.
double idw_interpolate(std::span<const GaugeValue> gauges, double target_x_m, double target_y_m,
                       double power = 2.0);

// Builds the rainfall feature columns (RH, MAX15, HR_2, HR_72) for every
// segment-hour of the event. Per gauge: RH is the sum and MAX15 the max of
// the hour's four quarters; HR_2 and HR_72 are trailing sums inclusive of
// the current hour with pre-event hours counted as zero. Each per-gauge
// hourly feature is then IDW-interpolated to the segment locations.
EventFeatureTable derive_rainfall_features(const data::EventSeries& series,
                                           const std::vector<data::StreetSegment>& segments,
                                           const std::vector<data::RainGauge>& gauges,
                                           const data::RainfallEvent& event,
                                           double idw_power = 2.0);

void attach_static_and_tide(EventFeatureTable& table,
                            const std::vector<data::StreetSegment>& segments,
                            const data::TideSeries& tide);

// Fitted on training rows only; transform(x) = (x - mean) / std with the
// population standard deviation.
struct Scaler {
  std::vector<std::string> feature_names;
  std::vector<double> mean;
  std::vector<double> std_dev;

  std::string fingerprint() const;
  int feature_index(std::string_view name) const;  // -1 if absent
  double transform(int feature, double x) const { return (x - mean[feature]) / std_dev[feature]; }
  double inverse(int feature, double x) const { return x * std_dev[feature] + mean[feature]; }

  bool operator==(const Scaler&) const = default;
};

Scaler fit_scaler(std::span<const EventFeatureTable> training_tables,
                  const std::vector<std::string>& feature_set);

// Returns a scaled copy; the depth target is never scaled.
EventFeatureTable apply_scaler(const Scaler& scaler, const EventFeatureTable& table);

void save_scaler_json(const std::filesystem::path& path, const Scaler& scaler);
Scaler load_scaler_json(const std::filesystem::path& path);

// weather.csv / depths.csv round trip (the spatio-temporal slices of the
// relational layout; statics and tide live in their own files).
void write_weather_csv(const std::filesystem::path& path,
                       std::span<const EventFeatureTable> tables);
void write_depths_csv(const std::filesystem::path& path,
                      std::span<const EventFeatureTable> tables);

// Reassembles per-event tables by joining weather.csv with segments, tide
// and (when present) depths.csv.
std::vector<EventFeatureTable> load_feature_tables(
    const std::filesystem::path& dir, const std::vector<data::StreetSegment>& segments,
    const std::vector<data::RainfallEvent>& events,
    const std::map<std::string, data::EventSeries>& series);

}  // namespace floodcast::features
