#include "floodcast/data_store.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "floodcast/csv.hpp"
#include "floodcast/error.hpp"
#include "floodcast/features.hpp"

namespace floodcast::data {

namespace {

void require_finite(double value, const std::string& what) {
  if (!std::isfinite(value)) {
    raise(Errc::non_finite_value, what + " is not finite");
  }
}

}  // namespace

std::string split_name(Split split) { return split == Split::train ? "train" : "test"; }

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "test") return Split::test;
  raise(Errc::schema_mismatch, "split must be 'train' or 'test', got '" + std::string(text) + "'");
}

std::pair<std::vector<StreetSegment>, std::vector<RainGauge>> load_study_area(
    const std::filesystem::path& segments_csv, const std::filesystem::path& gauges_csv) {
  std::vector<StreetSegment> segments;
  {
    const auto table = csv::read_file(segments_csv, k_segments_header);
    std::unordered_set<int> seen;
    for (const auto& cells : table.rows) {
      StreetSegment seg;
      seg.segment_id = static_cast<int>(csv::parse_int(cells[0], "segment_id"));
      seg.x_m = csv::parse_double(cells[1], "x_m");
      seg.y_m = csv::parse_double(cells[2], "y_m");
      seg.street_name = cells[3];
      seg.elv_m = csv::parse_double(cells[4], "elv_m");
      seg.twi = csv::parse_double(cells[5], "twi");
      seg.dtw_cm = csv::parse_double(cells[6], "dtw_cm");
      if (!seen.insert(seg.segment_id).second) {
        raise(Errc::duplicate_id,
              "segment_id " + std::to_string(seg.segment_id) + " appears more than once");
      }
      require_finite(seg.x_m, "segment x_m");
      require_finite(seg.y_m, "segment y_m");
      require_finite(seg.elv_m, "elv_m");
      require_finite(seg.twi, "twi");
      require_finite(seg.dtw_cm, "dtw_cm");
      if (seg.dtw_cm < 0.0) {
        raise(Errc::non_finite_value,
              "dtw_cm must be >= 0, got " + csv::format_double(seg.dtw_cm));
      }
      segments.push_back(std::move(seg));
    }
  }
  std::vector<RainGauge> gauges;
  {
    const auto table = csv::read_file(gauges_csv, k_gauges_header);
    std::unordered_set<int> seen;
    for (const auto& cells : table.rows) {
      RainGauge gauge;
      gauge.gauge_id = static_cast<int>(csv::parse_int(cells[0], "gauge_id"));
      gauge.x_m = csv::parse_double(cells[1], "x_m");
      gauge.y_m = csv::parse_double(cells[2], "y_m");
      if (!seen.insert(gauge.gauge_id).second) {
        raise(Errc::duplicate_id,
              "gauge_id " + std::to_string(gauge.gauge_id) + " appears more than once");
      }
      require_finite(gauge.x_m, "gauge x_m");
      require_finite(gauge.y_m, "gauge y_m");
      gauges.push_back(gauge);
    }
  }
  return {std::move(segments), std::move(gauges)};
}

std::vector<RainfallEvent> load_events(const std::filesystem::path& events_csv) {
  const auto table = csv::read_file(events_csv, k_events_header);
  std::vector<RainfallEvent> events;
  std::unordered_set<std::string> seen;
  for (const auto& cells : table.rows) {
    RainfallEvent event;
    event.event_id = cells[0];
    event.start = timeutil::parse_iso(cells[1]);
    event.end = timeutil::parse_iso(cells[2]);
    event.split = parse_split(cells[3]);
    event.duration_hrs = timeutil::hours_inclusive(event.start, event.end);
    if (!seen.insert(event.event_id).second) {
      raise(Errc::duplicate_id, "event_id '" + event.event_id + "' appears more than once");
    }
    events.push_back(std::move(event));
  }
  return events;
}

std::map<std::string, EventSeries> load_event_series(
    const std::filesystem::path& raw_rain_csv, const std::filesystem::path& tide_csv,
    const std::filesystem::path& events_csv, const std::vector<std::string>* only_events) {
  auto events = load_events(events_csv);
  if (only_events != nullptr) {
    std::vector<RainfallEvent> filtered;
    for (const auto& id : *only_events) {
      const auto it = std::find_if(events.begin(), events.end(),
                                   [&](const RainfallEvent& e) { return e.event_id == id; });
      if (it == events.end()) {
        raise(Errc::unknown_event, "event '" + id + "' is not in the events manifest");
      }
      filtered.push_back(*it);
    }
    events = std::move(filtered);
  }

  std::unordered_map<int, std::unordered_map<timeutil::Timestamp, double>> rain;
  {
    const auto table = csv::read_file(raw_rain_csv, k_raw_rain_header);
    for (const auto& cells : table.rows) {
      const int gauge_id = static_cast<int>(csv::parse_int(cells[0], "gauge_id"));
      const auto ts = timeutil::parse_iso(cells[1]);
      const double mm = csv::parse_double(cells[2], "rain_mm");
      if (ts % timeutil::k_quarter_s != 0) {
        raise(Errc::schema_mismatch,
              "rain timestamp " + timeutil::format_iso(ts) + " is off the 15-minute grid");
      }
      require_finite(mm, "rain_mm");
      if (mm < 0.0) {
        raise(Errc::non_finite_value, "rain_mm must be >= 0, got " + csv::format_double(mm));
      }
      rain[gauge_id][ts] = mm;
    }
  }
  std::unordered_map<timeutil::Timestamp, double> tide;
  {
    const auto table = csv::read_file(tide_csv, k_tide_header);
    for (const auto& cells : table.rows) {
      const auto ts = timeutil::parse_iso(cells[0]);
      const double m = csv::parse_double(cells[1], "td_hr_m");
      if (ts % timeutil::k_hour_s != 0) {
        raise(Errc::schema_mismatch,
              "tide timestamp " + timeutil::format_iso(ts) + " is off the hourly grid");
      }
      require_finite(m, "td_hr_m");
      tide[ts] = m;
    }
  }

  std::map<std::string, EventSeries> out;
  for (const auto& event : events) {
    EventSeries series;
    for (int hour = 0; hour < event.duration_hrs; ++hour) {
      const auto ts = event.start + hour * timeutil::k_hour_s;
      const auto it = tide.find(ts);
      if (it == tide.end()) {
        raise(Errc::coverage_gap, "event '" + event.event_id + "': tide row missing for " +
                                      timeutil::format_iso(ts));
      }
      series.tide.push_back({ts, it->second});
    }
    for (const auto& [gauge_id, by_ts] : rain) {
      QuarterHourRainSeries quarters;
      quarters.reserve(static_cast<std::size_t>(event.duration_hrs) * 4);
      for (int q = 0; q < event.duration_hrs * 4; ++q) {
        const auto ts = event.start + q * timeutil::k_quarter_s;
        const auto it = by_ts.find(ts);
        if (it == by_ts.end()) {
          raise(Errc::coverage_gap, "event '" + event.event_id + "': gauge " +
                                        std::to_string(gauge_id) + " rain row missing for " +
                                        timeutil::format_iso(ts));
        }
        quarters.push_back({ts, it->second});
      }
      series.rain_by_gauge.emplace(gauge_id, std::move(quarters));
    }
    out.emplace(event.event_id, std::move(series));
  }
  return out;
}

void save_relational(const std::vector<StreetSegment>& segments,
                     const std::vector<RainGauge>& gauges,
                     const std::vector<RainfallEvent>& events,
                     const std::map<std::string, EventSeries>& series,
                     const std::vector<features::EventFeatureTable>& feature_tables,
                     const std::filesystem::path& out_dir) {
  std::set<int> segment_ids;
  for (const auto& seg : segments) {
    if (!segment_ids.insert(seg.segment_id).second) {
      raise(Errc::duplicate_id, "segment_id " + std::to_string(seg.segment_id) + " is duplicated");
    }
  }
  std::set<int> gauge_ids;
  for (const auto& gauge : gauges) {
    if (!gauge_ids.insert(gauge.gauge_id).second) {
      raise(Errc::duplicate_id, "gauge_id " + std::to_string(gauge.gauge_id) + " is duplicated");
    }
  }

  // Tide rows are shared per timestamp, so event windows must be disjoint.
  std::vector<const RainfallEvent*> by_start;
  std::unordered_map<std::string, const RainfallEvent*> event_by_id;
  for (const auto& event : events) {
    if (!event_by_id.emplace(event.event_id, &event).second) {
      raise(Errc::duplicate_id, "event_id '" + event.event_id + "' is duplicated");
    }
    by_start.push_back(&event);
  }
  std::sort(by_start.begin(), by_start.end(),
            [](const auto* a, const auto* b) { return a->start < b->start; });
  for (std::size_t i = 1; i < by_start.size(); ++i) {
    if (by_start[i]->start <= by_start[i - 1]->end) {
      raise(Errc::foreign_key_violation, "events '" + by_start[i - 1]->event_id + "' and '" +
                                             by_start[i]->event_id + "' have overlapping windows");
    }
  }
  for (const auto& event : events) {
    const auto it = series.find(event.event_id);
    if (it == series.end()) {
      raise(Errc::foreign_key_violation,
            "event '" + event.event_id + "' has no rain/tide series");
    }
    if (static_cast<int>(it->second.tide.size()) != event.duration_hrs) {
      raise(Errc::foreign_key_violation,
            "event '" + event.event_id + "': tide series length does not match duration");
    }
    for (const auto& [gauge_id, quarters] : it->second.rain_by_gauge) {
      if (gauge_ids.count(gauge_id) == 0) {
        raise(Errc::foreign_key_violation, "event '" + event.event_id + "' references gauge " +
                                               std::to_string(gauge_id) + " absent from gauges");
      }
      if (static_cast<int>(quarters.size()) != event.duration_hrs * 4) {
        raise(Errc::foreign_key_violation, "event '" + event.event_id + "': gauge " +
                                               std::to_string(gauge_id) +
                                               " rain series length does not match duration");
      }
    }
  }
  for (const auto& it : series) {
    if (event_by_id.count(it.first) == 0) {
      raise(Errc::foreign_key_violation,
            "series for unknown event '" + it.first + "'");
    }
  }
  for (const auto& table : feature_tables) {
    const auto it = event_by_id.find(table.event_id);
    if (it == event_by_id.end()) {
      raise(Errc::foreign_key_violation,
            "feature table for unknown event '" + table.event_id + "'");
    }
    if (table.start != it->second->start || table.duration_hrs != it->second->duration_hrs) {
      raise(Errc::foreign_key_violation,
            "feature table window does not match event '" + table.event_id + "'");
    }
    for (const int id : table.segment_ids) {
      if (segment_ids.count(id) == 0) {
        raise(Errc::foreign_key_violation, "feature table for event '" + table.event_id +
                                               "' references unknown segment_id " +
                                               std::to_string(id));
      }
    }
    if (table.rows.size() !=
        table.segment_ids.size() * static_cast<std::size_t>(table.duration_hrs)) {
      raise(Errc::foreign_key_violation,
            "feature table for event '" + table.event_id + "' has an incomplete row grid");
    }
  }

  std::filesystem::create_directories(out_dir);

  {
    csv::Writer w(out_dir / "segments.csv", k_segments_header);
    for (const auto& seg : segments) {
      w.row({std::to_string(seg.segment_id), csv::format_double(seg.x_m),
             csv::format_double(seg.y_m), seg.street_name, csv::format_double(seg.elv_m),
             csv::format_double(seg.twi), csv::format_double(seg.dtw_cm)});
    }
    w.finish();
  }
  {
    csv::Writer w(out_dir / "gauges.csv", k_gauges_header);
    for (const auto& gauge : gauges) {
      w.row({std::to_string(gauge.gauge_id), csv::format_double(gauge.x_m),
             csv::format_double(gauge.y_m)});
    }
    w.finish();
  }
  {
    csv::Writer w(out_dir / "events.csv", k_events_header);
    for (const auto& event : events) {
      w.row({event.event_id, timeutil::format_iso(event.start), timeutil::format_iso(event.end),
             split_name(event.split)});
    }
    w.finish();
  }
  {
    // Deterministic row order: gauge id, then timestamp across all events.
    std::map<int, std::map<timeutil::Timestamp, double>> merged;
    for (const auto& [event_id, ev_series] : series) {
      for (const auto& [gauge_id, quarters] : ev_series.rain_by_gauge) {
        for (const auto& point : quarters) {
          merged[gauge_id][point.ts] = point.rain_mm;
        }
      }
    }
    csv::Writer w(out_dir / "raw_rain.csv", k_raw_rain_header);
    for (const auto& [gauge_id, by_ts] : merged) {
      for (const auto& [ts, mm] : by_ts) {
        w.row({std::to_string(gauge_id), timeutil::format_iso(ts), csv::format_double(mm)});
      }
    }
    w.finish();
  }
  {
    std::map<timeutil::Timestamp, double> merged;
    for (const auto& [event_id, ev_series] : series) {
      for (const auto& point : ev_series.tide) {
        merged[point.ts] = point.td_hr_m;
      }
    }
    csv::Writer w(out_dir / "tide.csv", k_tide_header);
    for (const auto& [ts, m] : merged) {
      w.row({timeutil::format_iso(ts), csv::format_double(m)});
    }
    w.finish();
  }
  if (!feature_tables.empty()) {
    features::write_weather_csv(out_dir / "weather.csv", feature_tables);
    const bool any_depth = std::any_of(feature_tables.begin(), feature_tables.end(),
                                       [](const auto& t) { return t.has_depth; });
    if (any_depth) {
      features::write_depths_csv(out_dir / "depths.csv", feature_tables);
    }
  }
}

}  // namespace floodcast::data
