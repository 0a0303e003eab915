#include "floodcast/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "floodcast/csv.hpp"
#include "floodcast/error.hpp"

namespace floodcast::features {

namespace {

using json = nlohmann::ordered_json;

constexpr double k_coincident_m = 1e-9;

std::uint64_t fnv1a(std::uint64_t h, std::string_view text) {
  for (const char c : text) {
    h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

double get_feature(const FeatureRow& row, std::string_view name) {
  if (name == "rh_mm") return row.rh_mm;
  if (name == "max15_mm") return row.max15_mm;
  if (name == "hr2_mm") return row.hr2_mm;
  if (name == "hr72_mm") return row.hr72_mm;
  if (name == "td_hr_m") return row.td_hr_m;
  if (name == "elv_m") return row.elv_m;
  if (name == "twi") return row.twi;
  if (name == "dtw_cm") return row.dtw_cm;
  raise(Errc::schema_mismatch, "unknown feature '" + std::string(name) + "'");
}

void set_feature(FeatureRow& row, std::string_view name, double value) {
  if (name == "rh_mm") {
    row.rh_mm = value;
  } else if (name == "max15_mm") {
    row.max15_mm = value;
  } else if (name == "hr2_mm") {
    row.hr2_mm = value;
  } else if (name == "hr72_mm") {
    row.hr72_mm = value;
  } else if (name == "td_hr_m") {
    row.td_hr_m = value;
  } else if (name == "elv_m") {
    row.elv_m = value;
  } else if (name == "twi") {
    row.twi = value;
  } else if (name == "dtw_cm") {
    row.dtw_cm = value;
  } else {
    raise(Errc::schema_mismatch, "unknown feature '" + std::string(name) + "'");
  }
}

double idw_interpolate(std::span<const GaugeValue> gauges, double target_x_m, double target_y_m,
                       double power) {
  if (gauges.empty()) {
    raise(Errc::no_gauges, "interpolation needs at least one gauge");
  }
  if (!(power > 0.0)) {
    raise(Errc::invalid_config, "IDW power must be > 0");
  }
  double weight_sum = 0.0;
  double value_sum = 0.0;
  for (const auto& gauge : gauges) {
    const double dist = std::hypot(gauge.x_m - target_x_m, gauge.y_m - target_y_m);
    if (dist < k_coincident_m) {
      return gauge.value;
    }
    const double weight = std::pow(dist, -power);
    weight_sum += weight;
    value_sum += weight * gauge.value;
  }
  return value_sum / weight_sum;
}

EventFeatureTable derive_rainfall_features(const data::EventSeries& series,
                                           const std::vector<data::StreetSegment>& segments,
                                           const std::vector<data::RainGauge>& gauges,
                                           const data::RainfallEvent& event,
                                           double idw_power) {
  const int hours = event.duration_hrs;

  // Per-gauge hourly features first.
  struct GaugeFeatures {
    double x_m, y_m;
    std::vector<double> rh, max15, hr2, hr72;
  };
  std::vector<GaugeFeatures> per_gauge;
  per_gauge.reserve(gauges.size());
  for (const auto& gauge : gauges) {
    const auto it = series.rain_by_gauge.find(gauge.gauge_id);
    if (it == series.rain_by_gauge.end()) {
      raise(Errc::coverage_gap, "event '" + event.event_id + "': no rain series for gauge " +
                                    std::to_string(gauge.gauge_id));
    }
    const auto& quarters = it->second;
    if (static_cast<int>(quarters.size()) != hours * 4) {
      raise(Errc::coverage_gap, "event '" + event.event_id + "': gauge " +
                                    std::to_string(gauge.gauge_id) + " covers " +
                                    std::to_string(quarters.size()) + " quarters, expected " +
                                    std::to_string(hours * 4));
    }
    GaugeFeatures gf{gauge.x_m, gauge.y_m, {}, {}, {}, {}};
    gf.rh.resize(hours);
    gf.max15.resize(hours);
    gf.hr2.resize(hours);
    gf.hr72.resize(hours);
    for (int h = 0; h < hours; ++h) {
      double sum = 0.0;
      double peak = 0.0;
      for (int q = 0; q < 4; ++q) {
        const auto ts = event.start + h * timeutil::k_hour_s + q * timeutil::k_quarter_s;
        const auto& point = quarters[static_cast<std::size_t>(h) * 4 + q];
        if (point.ts != ts) {
          raise(Errc::coverage_gap, "event '" + event.event_id + "': gauge " +
                                        std::to_string(gauge.gauge_id) + " expected quarter " +
                                        timeutil::format_iso(ts) + ", found " +
                                        timeutil::format_iso(point.ts));
        }
        sum += point.rain_mm;
        peak = std::max(peak, point.rain_mm);
      }
      gf.rh[h] = sum;
      gf.max15[h] = peak;
    }
    // Trailing windows inclusive of the current hour; hours before the event
    // window contribute zero.
    for (int h = 0; h < hours; ++h) {
      gf.hr2[h] = gf.rh[h] + (h >= 1 ? gf.rh[h - 1] : 0.0);
      double total = 0.0;
      for (int k = 0; k < 72 && h - k >= 0; ++k) {
        total += gf.rh[h - k];
      }
      gf.hr72[h] = total;
    }
    per_gauge.push_back(std::move(gf));
  }

  EventFeatureTable table;
  table.event_id = event.event_id;
  table.start = event.start;
  table.duration_hrs = hours;
  std::vector<data::StreetSegment> ordered = segments;
  std::sort(ordered.begin(), ordered.end(),
            [](const auto& a, const auto& b) { return a.segment_id < b.segment_id; });
  table.segment_ids.reserve(ordered.size());
  for (const auto& seg : ordered) {
    table.segment_ids.push_back(seg.segment_id);
  }
  table.rows.resize(ordered.size() * static_cast<std::size_t>(hours));

  std::vector<GaugeValue> scratch(per_gauge.size());
  for (std::size_t s = 0; s < ordered.size(); ++s) {
    const auto& seg = ordered[s];
    for (int h = 0; h < hours; ++h) {
      auto& row = table.row(static_cast<int>(s), h);
      row.segment_id = seg.segment_id;
      row.ts = event.start + h * timeutil::k_hour_s;
      const auto interpolate = [&](auto member) {
        for (std::size_t g = 0; g < per_gauge.size(); ++g) {
          scratch[g] = {per_gauge[g].x_m, per_gauge[g].y_m, (per_gauge[g].*member)[h]};
        }
        return idw_interpolate(scratch, seg.x_m, seg.y_m, idw_power);
      };
      row.rh_mm = interpolate(&GaugeFeatures::rh);
      row.max15_mm = interpolate(&GaugeFeatures::max15);
      row.hr2_mm = interpolate(&GaugeFeatures::hr2);
      row.hr72_mm = interpolate(&GaugeFeatures::hr72);
    }
  }
  return table;
}

void attach_static_and_tide(EventFeatureTable& table,
                            const std::vector<data::StreetSegment>& segments,
                            const data::TideSeries& tide) {
  std::unordered_map<timeutil::Timestamp, double> tide_by_ts;
  for (const auto& point : tide) {
    tide_by_ts[point.ts] = point.td_hr_m;
  }
  std::unordered_map<int, const data::StreetSegment*> seg_by_id;
  for (const auto& seg : segments) {
    seg_by_id[seg.segment_id] = &seg;
  }
  for (auto& row : table.rows) {
    const auto seg_it = seg_by_id.find(row.segment_id);
    if (seg_it == seg_by_id.end()) {
      raise(Errc::unknown_segment,
            "segment_id " + std::to_string(row.segment_id) + " is not in the study area");
    }
    const auto tide_it = tide_by_ts.find(row.ts);
    if (tide_it == tide_by_ts.end()) {
      raise(Errc::missing_tide, "no tide value for " + timeutil::format_iso(row.ts));
    }
    row.td_hr_m = tide_it->second;
    row.elv_m = seg_it->second->elv_m;
    row.twi = seg_it->second->twi;
    row.dtw_cm = seg_it->second->dtw_cm;
  }
}

std::string Scaler::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < feature_names.size(); ++i) {
    h = fnv1a(h, feature_names[i]);
    h = fnv1a(h, csv::format_double(mean[i]));
    h = fnv1a(h, csv::format_double(std_dev[i]));
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

int Scaler::feature_index(std::string_view name) const {
  for (std::size_t i = 0; i < feature_names.size(); ++i) {
    if (feature_names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

Scaler fit_scaler(std::span<const EventFeatureTable> training_tables,
                  const std::vector<std::string>& feature_set) {
  std::size_t n = 0;
  for (const auto& table : training_tables) {
    n += table.rows.size();
  }
  if (n == 0) {
    raise(Errc::empty_table, "scaler needs at least one training row");
  }
  Scaler scaler;
  scaler.feature_names = feature_set;
  scaler.mean.resize(feature_set.size(), 0.0);
  scaler.std_dev.resize(feature_set.size(), 0.0);
  for (std::size_t f = 0; f < feature_set.size(); ++f) {
    double sum = 0.0;
    for (const auto& table : training_tables) {
      for (const auto& row : table.rows) {
        sum += get_feature(row, feature_set[f]);
      }
    }
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (const auto& table : training_tables) {
      for (const auto& row : table.rows) {
        const double d = get_feature(row, feature_set[f]) - mean;
        sq += d * d;
      }
    }
    const double var = sq / static_cast<double>(n);
    if (var <= 0.0) {
      raise(Errc::degenerate_feature,
            "feature '" + feature_set[f] + "' is constant over the training rows");
    }
    scaler.mean[f] = mean;
    scaler.std_dev[f] = std::sqrt(var);
  }
  return scaler;
}

EventFeatureTable apply_scaler(const Scaler& scaler, const EventFeatureTable& table) {
  EventFeatureTable out = table;
  for (auto& row : out.rows) {
    for (std::size_t f = 0; f < scaler.feature_names.size(); ++f) {
      const double raw = get_feature(row, scaler.feature_names[f]);
      set_feature(row, scaler.feature_names[f], scaler.transform(static_cast<int>(f), raw));
    }
  }
  out.scaler_fingerprint = scaler.fingerprint();
  return out;
}

void save_scaler_json(const std::filesystem::path& path, const Scaler& scaler) {
  json doc = json::object();
  for (std::size_t i = 0; i < scaler.feature_names.size(); ++i) {
    doc[scaler.feature_names[i]] = {{"mean", scaler.mean[i]}, {"std", scaler.std_dev[i]}};
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    raise(Errc::io_failure, "cannot write '" + path.string() + "'");
  }
  out << doc.dump(2) << "\n";
  if (!out) {
    raise(Errc::io_failure, "write failed for '" + path.string() + "'");
  }
}

Scaler load_scaler_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    raise(Errc::missing_file, "cannot open '" + path.string() + "'");
  }
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    raise(Errc::schema_mismatch, path.string() + ": " + e.what());
  }
  Scaler scaler;
  for (const auto& [name, entry] : doc.items()) {
    scaler.feature_names.push_back(name);
    scaler.mean.push_back(entry.at("mean").get<double>());
    scaler.std_dev.push_back(entry.at("std").get<double>());
  }
  return scaler;
}

void write_weather_csv(const std::filesystem::path& path,
                       std::span<const EventFeatureTable> tables) {
  csv::Writer w(path, data::k_weather_header);
  for (const auto& table : tables) {
    for (const auto& row : table.rows) {
      w.row({std::to_string(row.segment_id), timeutil::format_iso(row.ts),
             csv::format_double(row.rh_mm), csv::format_double(row.max15_mm),
             csv::format_double(row.hr2_mm), csv::format_double(row.hr72_mm)});
    }
  }
  w.finish();
}

void write_depths_csv(const std::filesystem::path& path,
                      std::span<const EventFeatureTable> tables) {
  csv::Writer w(path, data::k_depths_header);
  for (const auto& table : tables) {
    if (!table.has_depth) continue;
    for (const auto& row : table.rows) {
      w.row({std::to_string(row.segment_id), timeutil::format_iso(row.ts),
             csv::format_double(row.depth_m)});
    }
  }
  w.finish();
}

std::vector<EventFeatureTable> load_feature_tables(
    const std::filesystem::path& dir, const std::vector<data::StreetSegment>& segments,
    const std::vector<data::RainfallEvent>& events,
    const std::map<std::string, data::EventSeries>& series) {
  struct WeatherCell {
    double rh, max15, hr2, hr72;
  };
  std::map<int, std::unordered_map<timeutil::Timestamp, WeatherCell>> weather;
  {
    const auto table = csv::read_file(dir / "weather.csv", data::k_weather_header);
    for (const auto& cells : table.rows) {
      const int segment_id = static_cast<int>(csv::parse_int(cells[0], "segment_id"));
      const auto ts = timeutil::parse_iso(cells[1]);
      weather[segment_id][ts] = {
          csv::parse_double(cells[2], "rh_mm"), csv::parse_double(cells[3], "max15_mm"),
          csv::parse_double(cells[4], "hr2_mm"), csv::parse_double(cells[5], "hr72_mm")};
    }
  }
  std::map<int, std::unordered_map<timeutil::Timestamp, double>> depths;
  bool have_depths = false;
  if (std::filesystem::exists(dir / "depths.csv")) {
    have_depths = true;
    const auto table = csv::read_file(dir / "depths.csv", data::k_depths_header);
    for (const auto& cells : table.rows) {
      const int segment_id = static_cast<int>(csv::parse_int(cells[0], "segment_id"));
      const auto ts = timeutil::parse_iso(cells[1]);
      depths[segment_id][ts] = csv::parse_double(cells[2], "depth_m");
    }
  }

  std::vector<EventFeatureTable> tables;
  tables.reserve(events.size());
  for (const auto& event : events) {
    const auto series_it = series.find(event.event_id);
    if (series_it == series.end()) {
      raise(Errc::unknown_event, "no raw series loaded for event '" + event.event_id + "'");
    }
    EventFeatureTable table;
    table.event_id = event.event_id;
    table.start = event.start;
    table.duration_hrs = event.duration_hrs;
    for (const auto& [segment_id, by_ts] : weather) {
      if (by_ts.count(event.start) != 0) {
        table.segment_ids.push_back(segment_id);
      }
    }
    if (table.segment_ids.empty()) {
      raise(Errc::coverage_gap, "weather.csv has no rows for event '" + event.event_id + "'");
    }
    table.rows.resize(table.segment_ids.size() * static_cast<std::size_t>(event.duration_hrs));
    for (std::size_t s = 0; s < table.segment_ids.size(); ++s) {
      const int segment_id = table.segment_ids[s];
      const auto& by_ts = weather.at(segment_id);
      for (int h = 0; h < event.duration_hrs; ++h) {
        const auto ts = event.start + h * timeutil::k_hour_s;
        const auto cell_it = by_ts.find(ts);
        if (cell_it == by_ts.end()) {
          raise(Errc::coverage_gap, "weather.csv misses segment " + std::to_string(segment_id) +
                                        " at " + timeutil::format_iso(ts));
        }
        auto& row = table.row(static_cast<int>(s), h);
        row.segment_id = segment_id;
        row.ts = ts;
        row.rh_mm = cell_it->second.rh;
        row.max15_mm = cell_it->second.max15;
        row.hr2_mm = cell_it->second.hr2;
        row.hr72_mm = cell_it->second.hr72;
      }
    }
    attach_static_and_tide(table, segments, series_it->second.tide);
    if (have_depths) {
      table.has_depth = true;
      for (auto& row : table.rows) {
        const auto seg_it = depths.find(row.segment_id);
        if (seg_it == depths.end() || seg_it->second.count(row.ts) == 0) {
          raise(Errc::coverage_gap, "depths.csv misses segment " + std::to_string(row.segment_id) +
                                        " at " + timeutil::format_iso(row.ts));
        }
        row.depth_m = seg_it->second.at(row.ts);
      }
    }
    tables.push_back(std::move(table));
  }
  return tables;
}

}  // namespace floodcast::features
