#include <doctest.h>

#include <cmath>

#include "floodcast/error.hpp"
#include "floodcast/synth_hydro.hpp"

using namespace floodcast;

namespace {

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

data::RainfallEvent make_event(const std::string& id, int hours) {
  data::RainfallEvent event;
  event.event_id = id;
  event.start = timeutil::parse_iso("2016-06-05T00:00:00");
  event.end = event.start + (hours - 1) * timeutil::k_hour_s;
  event.duration_hrs = hours;
  return event;
}

// Minimal single-segment feature table with hand-set rainfall.
features::EventFeatureTable single_segment_table(const std::vector<double>& rh,
                                                 double td_hr_m = 0.0) {
  features::EventFeatureTable table;
  table.event_id = "ev";
  table.start = 0;
  table.duration_hrs = static_cast<int>(rh.size());
  table.segment_ids = {1};
  table.rows.resize(rh.size());
  for (std::size_t h = 0; h < rh.size(); ++h) {
    auto& row = table.rows[h];
    row.segment_id = 1;
    row.ts = static_cast<timeutil::Timestamp>(h) * timeutil::k_hour_s;
    row.rh_mm = rh[h];
    row.td_hr_m = td_hr_m;
  }
  return table;
}

}  // namespace

TEST_CASE("gen_study_area is deterministic") {
  const auto one = synth::gen_study_area(1, 1, {500, 500}, 7);
  const auto two = synth::gen_study_area(1, 1, {500, 500}, 7);
  CHECK(one.segments == two.segments);
  CHECK(one.gauges == two.gauges);

  const auto big_a = synth::gen_study_area(200, 5, {2000, 2000}, 9);
  const auto big_b = synth::gen_study_area(200, 5, {2000, 2000}, 9);
  CHECK(big_a.segments == big_b.segments);
}

TEST_CASE("gen_study_area rejects empty areas") {
  try {
    synth::gen_study_area(0, 1, {500, 500}, 1);
    FAIL("expected InvalidCount");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_count);
  }
}

TEST_CASE("elevations stay inside [0, 12.5] m") {
  const auto area = synth::gen_study_area(2000, 4, {2000, 2000}, 1);
  for (const auto& seg : area.segments) {
    CHECK(seg.elv_m >= 0.0);
    CHECK(seg.elv_m <= 12.5);
    CHECK(seg.x_m >= 0.0);
    CHECK(seg.x_m <= 2000.0);
    CHECK(seg.y_m >= 0.0);
    CHECK(seg.y_m <= 2000.0);
    CHECK(seg.dtw_cm >= 0.0);
    CHECK(std::isfinite(seg.twi));
  }
}

TEST_CASE("terrain correlations: DTW rises with ELV, TWI falls with slope") {
  const auto area = synth::gen_study_area(500, 4, {2000, 2000}, 3);
  std::vector<double> elv, dtw, twi;
  for (const auto& seg : area.segments) {
    elv.push_back(seg.elv_m);
    dtw.push_back(seg.dtw_cm);
    twi.push_back(seg.twi);
  }
  CHECK(pearson(elv, dtw) > 0.0);

  Rng rng(derive_seed(3, "study-area"));
  const synth::ElevationField field({2000, 2000}, rng);
  std::vector<double> slope;
  for (const auto& seg : area.segments) {
    slope.push_back(field.slope(seg.x_m, seg.y_m));
  }
  CHECK(pearson(twi, slope) < 0.0);
}

TEST_CASE("gen_event counts, dry lead-in and tide range") {
  const auto area = synth::gen_study_area(10, 3, {2000, 2000}, 5);
  const auto event = make_event("ev1", 28);
  synth::EventGenParams params;
  const auto series = synth::gen_event(area, event, 40.0, 5, params);

  REQUIRE(series.rain_by_gauge.size() == 3);
  for (const auto& [gauge_id, quarters] : series.rain_by_gauge) {
    CHECK(quarters.size() == 112);
    for (int q = 0; q < 8; ++q) {
      CHECK(quarters[static_cast<std::size_t>(q)].rain_mm == 0.0);
      CHECK(quarters[quarters.size() - 1 - q].rain_mm == 0.0);
    }
    for (const auto& point : quarters) {
      CHECK(point.rain_mm >= 0.0);
    }
  }
  CHECK(series.tide.size() == 28);
  double lo = series.tide.front().td_hr_m, hi = lo;
  for (const auto& point : series.tide) {
    lo = std::min(lo, point.td_hr_m);
    hi = std::max(hi, point.td_hr_m);
  }
  CHECK(hi - lo == doctest::Approx(2.0 * params.tide_amplitude_m).epsilon(1e-9));

  const auto again = synth::gen_event(area, event, 40.0, 5, params);
  CHECK(series == again);
}

TEST_CASE("gen_event rejects events shorter than 6 hours") {
  const auto area = synth::gen_study_area(2, 1, {500, 500}, 2);
  try {
    synth::gen_event(area, make_event("short", 5), 40.0, 2);
    FAIL("expected InvalidDuration");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_duration);
  }
}

TEST_CASE("oracle: zero rain and low tide give exactly zero depth") {
  const auto area = synth::gen_study_area(50, 3, {2000, 2000}, 8);
  const auto event = make_event("dry", 12);
  auto series = synth::gen_event(area, event, 30.0, 8);
  features::EventFeatureTable table;
  table.event_id = "dry";
  table.start = event.start;
  table.duration_hrs = 12;
  for (const auto& seg : area.segments) table.segment_ids.push_back(seg.segment_id);
  table.rows.resize(area.segments.size() * 12);
  double min_elv = 1e9;
  for (const auto& seg : area.segments) min_elv = std::min(min_elv, seg.elv_m);
  for (std::size_t s = 0; s < area.segments.size(); ++s) {
    for (int h = 0; h < 12; ++h) {
      auto& row = table.row(static_cast<int>(s), h);
      row.segment_id = area.segments[s].segment_id;
      row.ts = event.start + h * timeutil::k_hour_s;
      row.rh_mm = 0.0;
      row.td_hr_m = min_elv - 0.1;  // below every elevation
    }
  }
  synth::oracle_depths(area, table);
  for (const auto& row : table.rows) {
    CHECK(row.depth_m == 0.0);
  }
}

TEST_CASE("oracle: hand-evaluated two-step recurrence") {
  synth::SyntheticArea area;
  area.bounds = {100, 100};
  data::StreetSegment seg;
  seg.segment_id = 1;
  seg.elv_m = 5.0;
  seg.twi = 10.0;
  seg.dtw_cm = 30.0;
  area.segments.push_back(seg);

  auto table = single_segment_table({10.0, 0.0});
  synth::OracleParams params;
  params.retention = 0.6;
  params.rain_gain = 0.004;
  params.twi_gain = 0.0;
  params.tide_gain = 0.0;
  params.dtw_gain = 0.0;
  synth::oracle_depths(area, table, params);
  // S = [10, 6]; depth = rain_gain * S
  CHECK(table.rows[0].depth_m == doctest::Approx(0.04).epsilon(1e-12));
  CHECK(table.rows[1].depth_m == doctest::Approx(0.024).epsilon(1e-12));
}

TEST_CASE("oracle: lower elevation floods at least as deep when tide matters") {
  synth::SyntheticArea area;
  area.bounds = {100, 100};
  for (int i = 0; i < 2; ++i) {
    data::StreetSegment seg;
    seg.segment_id = i + 1;
    seg.x_m = seg.y_m = 50.0;
    seg.elv_m = i == 0 ? 0.4 : 1.2;
    seg.twi = 10.0;
    seg.dtw_cm = 30.0;
    area.segments.push_back(seg);
  }
  features::EventFeatureTable table;
  table.event_id = "tide";
  table.duration_hrs = 10;
  table.segment_ids = {1, 2};
  table.rows.resize(20);
  Rng rng(99);
  for (int s = 0; s < 2; ++s) {
    for (int h = 0; h < 10; ++h) {
      auto& row = table.row(s, h);
      row.segment_id = s + 1;
      row.ts = h * timeutil::k_hour_s;
      row.rh_mm = table.segment_ids[0] == 1 && s == 1 ? table.row(0, h).rh_mm
                                                      : rng.uniform(0.0, 8.0);
      row.td_hr_m = s == 1 ? table.row(0, h).td_hr_m : rng.uniform(0.0, 1.5);
    }
  }
  synth::oracle_depths(area, table);
  for (int h = 0; h < 10; ++h) {
    CHECK(table.row(0, h).depth_m >= table.row(1, h).depth_m);
  }
}

TEST_CASE("oracle: depth is monotone in any single RH value") {
  synth::SyntheticArea area;
  area.bounds = {100, 100};
  data::StreetSegment seg;
  seg.segment_id = 1;
  seg.elv_m = 2.0;
  seg.twi = 9.0;
  seg.dtw_cm = 25.0;
  area.segments.push_back(seg);

  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> rh(14);
    for (auto& v : rh) v = rng.uniform(0.0, 12.0);
    auto base = single_segment_table(rh, 1.0);
    synth::oracle_depths(area, base);
    const int bump_at = static_cast<int>(rng.uniform_int(0, 13));
    auto bumped_rh = rh;
    bumped_rh[static_cast<std::size_t>(bump_at)] += rng.uniform(0.1, 5.0);
    auto bumped = single_segment_table(bumped_rh, 1.0);
    synth::oracle_depths(area, bumped);
    for (std::size_t h = 0; h < rh.size(); ++h) {
      CHECK(bumped.rows[h].depth_m >= base.rows[h].depth_m);
    }
  }
}

TEST_CASE("oracle determinism is bitwise") {
  const auto area = synth::gen_study_area(20, 2, {1000, 1000}, 21);
  std::vector<double> rh(16);
  Rng rng(5);
  for (auto& v : rh) v = rng.uniform(0.0, 20.0);
  features::EventFeatureTable table;
  table.duration_hrs = 16;
  for (const auto& seg : area.segments) table.segment_ids.push_back(seg.segment_id);
  table.rows.resize(area.segments.size() * 16);
  for (std::size_t s = 0; s < area.segments.size(); ++s) {
    for (int h = 0; h < 16; ++h) {
      auto& row = table.row(static_cast<int>(s), h);
      row.segment_id = area.segments[s].segment_id;
      row.ts = h * timeutil::k_hour_s;
      row.rh_mm = rh[static_cast<std::size_t>(h)];
      row.td_hr_m = 0.8;
    }
  }
  auto a = table;
  auto b = table;
  synth::oracle_depths(area, a);
  synth::oracle_depths(area, b);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].depth_m == b.rows[i].depth_m);
  }
}

TEST_CASE("select_flood_prone ranks by mean depth with id tie-break") {
  synth::SyntheticArea area;
  area.bounds = {100, 100};

  features::EventFeatureTable table;
  table.event_id = "ev";
  table.duration_hrs = 2;
  table.segment_ids = {1, 2, 3};
  table.has_depth = true;
  table.rows.resize(6);
  const double depths[3][2] = {{0.1, 0.1}, {0.3, 0.3}, {0.1, 0.1}};  // 1 and 3 tie
  for (int s = 0; s < 3; ++s) {
    for (int h = 0; h < 2; ++h) {
      auto& row = table.row(s, h);
      row.segment_id = s + 1;
      row.ts = h * timeutil::k_hour_s;
      row.depth_m = depths[s][h];
    }
  }
  std::vector<features::EventFeatureTable> tables = {table};

  CHECK(synth::select_flood_prone(tables, 1) == std::vector<int>{2});
  CHECK(synth::select_flood_prone(tables, 2) == std::vector<int>{2, 1});
  CHECK(synth::select_flood_prone(tables, 3) == std::vector<int>{2, 1, 3});
  try {
    synth::select_flood_prone(tables, 4);
    FAIL("expected InvalidCount");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_count);
  }
}

TEST_CASE("flood-prone selection sits below the area's mean elevation") {
  const auto area = synth::gen_study_area(60, 5, {2000, 2000}, 33);
  std::vector<features::EventFeatureTable> tables;
  for (int ev = 0; ev < 3; ++ev) {
    const auto event = make_event("ev" + std::to_string(ev), 20);
    const auto series = synth::gen_event(area, event, 50.0, 33 + ev);
    features::EventFeatureTable table;
    table.event_id = event.event_id;
    table.start = event.start;
    table.duration_hrs = 20;
    for (const auto& seg : area.segments) table.segment_ids.push_back(seg.segment_id);
    table.rows.resize(area.segments.size() * 20);
    for (std::size_t s = 0; s < area.segments.size(); ++s) {
      const auto& quarters = series.rain_by_gauge.begin()->second;
      for (int h = 0; h < 20; ++h) {
        auto& row = table.row(static_cast<int>(s), h);
        row.segment_id = area.segments[s].segment_id;
        row.ts = event.start + h * timeutil::k_hour_s;
        double hour_sum = 0.0;
        for (int q = 0; q < 4; ++q) hour_sum += quarters[static_cast<std::size_t>(h * 4 + q)].rain_mm;
        row.rh_mm = hour_sum;
        row.td_hr_m = series.tide[static_cast<std::size_t>(h)].td_hr_m;
      }
    }
    synth::oracle_depths(area, table);
    tables.push_back(std::move(table));
  }
  const auto chosen = synth::select_flood_prone(tables, 6);
  REQUIRE(chosen.size() == 6);
  double chosen_elv = 0.0, area_elv = 0.0;
  for (const auto& seg : area.segments) {
    area_elv += seg.elv_m;
    if (std::find(chosen.begin(), chosen.end(), seg.segment_id) != chosen.end()) {
      chosen_elv += seg.elv_m;
    }
  }
  CHECK(chosen_elv / 6.0 < area_elv / static_cast<double>(area.segments.size()));
}
