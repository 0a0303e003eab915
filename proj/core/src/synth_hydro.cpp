#include "floodcast/synth_hydro.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "floodcast/error.hpp"

namespace floodcast::synth {

namespace {

constexpr double k_two_pi = 6.283185307179586476925286766559;
constexpr double k_tide_period_hrs = 12.42;  // principal lunar semidiurnal
constexpr double k_elevation_shape = 2.2;    // skews mass toward low ground
constexpr int k_n_waves = 6;

const char* k_street_names[] = {"Maple", "Oak", "Elm", "Cedar", "Pine",  "Willow",
                                "Birch", "Ash", "Bay", "River", "Marsh", "Harbor"};

}  // namespace

ElevationField::ElevationField(const Bounds& bounds, Rng& rng) {
  const double min_side = std::min(bounds.width_m, bounds.height_m);
  waves_.reserve(k_n_waves);
  double weight_sum = 0.0;
  for (int i = 0; i < k_n_waves; ++i) {
    const double wavelength = rng.uniform(0.25 * min_side, 1.0 * min_side);
    const double direction = rng.uniform(0.0, k_two_pi);
    const double k = k_two_pi / wavelength;
    Wave wave;
    wave.kx = k * std::cos(direction);
    wave.ky = k * std::sin(direction);
    wave.phase = rng.uniform(0.0, k_two_pi);
    wave.weight = rng.uniform(0.5, 1.0);
    weight_sum += wave.weight;
    waves_.push_back(wave);
  }
  for (auto& wave : waves_) {
    wave.weight /= weight_sum;
  }
}

double ElevationField::field(double x_m, double y_m) const {
  double value = 0.0;
  for (const auto& wave : waves_) {
    value += wave.weight * std::sin(wave.kx * x_m + wave.ky * y_m + wave.phase);
  }
  return value;
}

double ElevationField::elevation(double x_m, double y_m) const {
  const double unit = 0.5 * (1.0 + field(x_m, y_m));  // [0, 1]
  return k_max_elevation_m * std::pow(unit, k_elevation_shape);
}

double ElevationField::slope(double x_m, double y_m) const {
  double gx = 0.0;
  double gy = 0.0;
  for (const auto& wave : waves_) {
    const double c = wave.weight * std::cos(wave.kx * x_m + wave.ky * y_m + wave.phase);
    gx += wave.kx * c;
    gy += wave.ky * c;
  }
  const double unit = 0.5 * (1.0 + field(x_m, y_m));
  const double chain = k_max_elevation_m * k_elevation_shape *
                       std::pow(unit, k_elevation_shape - 1.0) * 0.5;
  return chain * std::hypot(gx, gy);
}

double ElevationField::slope_upper_bound() const {
  double k_sum = 0.0;
  for (const auto& wave : waves_) {
    k_sum += wave.weight * std::hypot(wave.kx, wave.ky);
  }
  return k_max_elevation_m * k_elevation_shape * 0.5 * k_sum;
}

SyntheticArea gen_study_area(int n_segments, int n_gauges, const Bounds& bounds,
                             std::uint64_t seed) {
  if (n_segments < 1 || n_gauges < 1) {
    raise(Errc::invalid_count, "need at least one segment and one gauge, got " +
                                   std::to_string(n_segments) + " / " + std::to_string(n_gauges));
  }
  Rng rng(derive_seed(seed, "study-area"));
  const ElevationField field(bounds, rng);
  const double slope_bound = field.slope_upper_bound();

  SyntheticArea area;
  area.seed = seed;
  area.bounds = bounds;
  area.segments.reserve(static_cast<std::size_t>(n_segments));
  const int n_names = static_cast<int>(std::size(k_street_names));
  for (int i = 0; i < n_segments; ++i) {
    data::StreetSegment seg;
    seg.segment_id = i + 1;
    seg.x_m = rng.uniform(0.0, bounds.width_m);
    seg.y_m = rng.uniform(0.0, bounds.height_m);
    const int name_idx = static_cast<int>(rng.uniform_int(0, n_names - 1));
    const int block = static_cast<int>(rng.uniform_int(1, 48));
    seg.street_name = std::string(k_street_names[name_idx]) + " St blk " + std::to_string(block);
    seg.elv_m = field.elevation(seg.x_m, seg.y_m);
    const double slope_norm = std::clamp(field.slope(seg.x_m, seg.y_m) / slope_bound, 0.0, 1.0);
    seg.twi = 3.0 + 14.0 * (1.0 - slope_norm) + rng.normal(0.0, 0.4);
    seg.dtw_cm = std::max(0.0, 15.0 + 140.0 * (seg.elv_m / ElevationField::k_max_elevation_m) +
                                   rng.normal(0.0, 10.0));
    area.segments.push_back(std::move(seg));
  }
  area.gauges.reserve(static_cast<std::size_t>(n_gauges));
  for (int i = 0; i < n_gauges; ++i) {
    data::RainGauge gauge;
    gauge.gauge_id = i + 1;
    gauge.x_m = rng.uniform(0.0, bounds.width_m);
    gauge.y_m = rng.uniform(0.0, bounds.height_m);
    area.gauges.push_back(gauge);
  }
  return area;
}

data::EventSeries gen_event(const SyntheticArea& area, const data::RainfallEvent& event,
                            double peak_intensity_mm, std::uint64_t seed,
                            const EventGenParams& params) {
  const int hours = event.duration_hrs;
  if (hours < 6) {
    raise(Errc::invalid_duration,
          "event '" + event.event_id + "' lasts " + std::to_string(hours) + " h, minimum is 6");
  }
  Rng rng(derive_seed(derive_seed(seed, "event"), event.event_id));

  struct Pulse {
    double center_hr, sigma_hr, x_m, y_m, length_m, peak_quarter_mm;
  };
  const int n_pulses = static_cast<int>(rng.uniform_int(1, 3));
  std::vector<Pulse> pulses;
  pulses.reserve(static_cast<std::size_t>(n_pulses));
  double weight_sum = 0.0;
  std::vector<double> weights(static_cast<std::size_t>(n_pulses));
  for (auto& w : weights) {
    w = rng.uniform(0.4, 1.0);
    weight_sum += w;
  }
  const double diag = std::hypot(area.bounds.width_m, area.bounds.height_m);
  for (int p = 0; p < n_pulses; ++p) {
    Pulse pulse;
    pulse.center_hr = rng.uniform(2.5, static_cast<double>(hours) - 2.5);
    pulse.sigma_hr = rng.uniform(params.pulse_sigma_min_hrs, params.pulse_sigma_max_hrs);
    pulse.x_m = rng.uniform(0.0, area.bounds.width_m);
    pulse.y_m = rng.uniform(0.0, area.bounds.height_m);
    pulse.length_m = rng.uniform(0.3 * diag, 0.8 * diag);
    // peak_intensity_mm is an hourly total; a quarter carries roughly 1/4.
    pulse.peak_quarter_mm = 0.25 * peak_intensity_mm * weights[static_cast<std::size_t>(p)] / weight_sum;
    pulses.push_back(pulse);
  }

  // The pulse envelope is evaluated at hour centers; each hour's total is
  // then split over its four quarters with random per-hour weights. The
  // within-hour pattern is therefore independent of every other hour.
  data::EventSeries series;
  for (const auto& gauge : area.gauges) {
    data::QuarterHourRainSeries quarters;
    quarters.reserve(static_cast<std::size_t>(hours) * 4);
    for (int hour = 0; hour < hours; ++hour) {
      double hourly_mm = 0.0;
      if (hour >= 2 && hour < hours - 2) {  // dry lead-in and tail
        for (const auto& pulse : pulses) {
          const double dt = (hour + 0.5 - pulse.center_hr) / pulse.sigma_hr;
          const double dist = std::hypot(gauge.x_m - pulse.x_m, gauge.y_m - pulse.y_m);
          const double spatial = std::exp(-0.5 * (dist / pulse.length_m) * (dist / pulse.length_m));
          hourly_mm += 4.0 * pulse.peak_quarter_mm * spatial * std::exp(-0.5 * dt * dt);
        }
      }
      double weights[4];
      double weight_total = 0.0;
      for (auto& w : weights) {
        w = rng.uniform(0.35, 1.0);
        weight_total += w;
      }
      for (int q = 0; q < 4; ++q) {
        const auto ts = event.start + (hour * 4 + q) * timeutil::k_quarter_s;
        quarters.push_back({ts, hourly_mm * weights[q] / weight_total});
      }
    }
    series.rain_by_gauge.emplace(gauge.gauge_id, std::move(quarters));
  }

  const double phase = rng.uniform(0.0, k_two_pi);
  std::vector<double> raw(static_cast<std::size_t>(hours));
  double raw_min = std::numeric_limits<double>::infinity();
  double raw_max = -std::numeric_limits<double>::infinity();
  for (int h = 0; h < hours; ++h) {
    raw[static_cast<std::size_t>(h)] = std::sin(k_two_pi * h / k_tide_period_hrs + phase);
    raw_min = std::min(raw_min, raw[static_cast<std::size_t>(h)]);
    raw_max = std::max(raw_max, raw[static_cast<std::size_t>(h)]);
  }
  // Affine rescale: sampled range == 2 * amplitude regardless of how the
  // hourly grid lands on the sinusoid.
  const double scale = 2.0 * params.tide_amplitude_m / (raw_max - raw_min);
  series.tide.reserve(static_cast<std::size_t>(hours));
  for (int h = 0; h < hours; ++h) {
    const auto ts = event.start + h * timeutil::k_hour_s;
    const double centered = raw[static_cast<std::size_t>(h)] - 0.5 * (raw_min + raw_max);
    series.tide.push_back({ts, params.tide_offset_m + scale * centered});
  }
  return series;
}

void oracle_depths(const SyntheticArea& area, features::EventFeatureTable& table,
                   const OracleParams& params) {
  if (!(params.retention > 0.0 && params.retention < 1.0)) {
    raise(Errc::invalid_config, "oracle retention must lie in (0, 1)");
  }
  if (params.rain_gain < 0.0 || params.twi_gain < 0.0 || params.tide_gain < 0.0 ||
      params.dtw_gain < 0.0) {
    raise(Errc::invalid_config, "oracle gains must be >= 0");
  }
  double twi_min = std::numeric_limits<double>::infinity();
  double twi_max = -std::numeric_limits<double>::infinity();
  double dtw_min = std::numeric_limits<double>::infinity();
  double dtw_max = -std::numeric_limits<double>::infinity();
  std::unordered_map<int, const data::StreetSegment*> seg_by_id;
  for (const auto& seg : area.segments) {
    twi_min = std::min(twi_min, seg.twi);
    twi_max = std::max(twi_max, seg.twi);
    dtw_min = std::min(dtw_min, seg.dtw_cm);
    dtw_max = std::max(dtw_max, seg.dtw_cm);
    seg_by_id[seg.segment_id] = &seg;
  }
  const double twi_span = twi_max > twi_min ? twi_max - twi_min : 1.0;
  const double dtw_span = dtw_max > dtw_min ? dtw_max - dtw_min : 1.0;

  table.has_depth = true;
  for (std::size_t s = 0; s < table.segment_ids.size(); ++s) {
    const auto it = seg_by_id.find(table.segment_ids[s]);
    if (it == seg_by_id.end()) {
      raise(Errc::incomplete_features, "feature table references segment " +
                                           std::to_string(table.segment_ids[s]) +
                                           " outside the study area");
    }
    const auto& seg = *it->second;
    const double twi_norm = (seg.twi - twi_min) / twi_span;
    const double dtw_norm = (seg.dtw_cm - dtw_min) / dtw_span;
    const double static_term =
        std::min(0.0, params.twi_gain * twi_norm - params.dtw_gain * dtw_norm);
    double storage = 0.0;
    for (int h = 0; h < table.duration_hrs; ++h) {
      auto& row = table.row(static_cast<int>(s), h);
      if (!std::isfinite(row.rh_mm) || !std::isfinite(row.td_hr_m)) {
        raise(Errc::incomplete_features,
              "missing rainfall or tide features for segment " + std::to_string(row.segment_id) +
                  " at " + timeutil::format_iso(row.ts));
      }
      storage = params.retention * storage + row.rh_mm;
      const double overtop = std::max(0.0, row.td_hr_m - seg.elv_m);
      row.depth_m =
          std::max(0.0, params.rain_gain * storage + params.tide_gain * overtop + static_term);
    }
  }
}

std::vector<int> select_flood_prone(std::span<const features::EventFeatureTable> depth_tables,
                                    int k) {
  std::unordered_map<int, std::pair<double, long>> totals;  // id -> (sum, count)
  for (const auto& table : depth_tables) {
    if (!table.has_depth) {
      raise(Errc::empty_table, "table for event '" + table.event_id + "' carries no depths");
    }
    for (const auto& row : table.rows) {
      auto& slot = totals[row.segment_id];
      slot.first += row.depth_m;
      slot.second += 1;
    }
  }
  if (totals.empty()) {
    raise(Errc::empty_table, "no depth rows to rank");
  }
  if (k < 1 || static_cast<std::size_t>(k) > totals.size()) {
    raise(Errc::invalid_count, "k=" + std::to_string(k) + " but table has " +
                                   std::to_string(totals.size()) + " segments");
  }
  struct Ranked {
    int segment_id;
    double mean_depth;
  };
  std::vector<Ranked> ranked;
  ranked.reserve(totals.size());
  for (const auto& [id, slot] : totals) {
    ranked.push_back({id, slot.first / static_cast<double>(slot.second)});
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.mean_depth != b.mean_depth) return a.mean_depth > b.mean_depth;
    return a.segment_id < b.segment_id;
  });
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    out.push_back(ranked[static_cast<std::size_t>(i)].segment_id);
  }
  return out;
}

}  // namespace floodcast::synth
