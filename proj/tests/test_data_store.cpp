#include <doctest.h>

#include "floodcast/data_store.hpp"
#include "floodcast/error.hpp"
#include "floodcast/features.hpp"
#include "floodcast/pipeline.hpp"
#include "floodcast/synth_hydro.hpp"
#include "test_support.hpp"

using namespace floodcast;
using test::TempDir;

namespace {

std::string segments_csv_6rows() {
  return "segment_id,x_m,y_m,street_name,elv_m,twi,dtw_cm\n"
         "1,10,20,Maple St,1.5,8.2,30\n"
         "2,40,25,Maple St,2.5,9.1,45\n"
         "3,70,30,Oak St,0.8,11.0,22\n"
         "4,90,35,Oak St,3.1,7.7,60\n"
         "5,120,41,Bay St,1.1,10.4,28\n"
         "6,150,48,Bay St,2.2,8.8,39\n";
}

std::string gauges_csv_2rows() {
  return "gauge_id,x_m,y_m\n1,0,0\n2,100,100\n";
}

}  // namespace

TEST_CASE("load_study_area parses all rows and preserves ids") {
  TempDir dir("ds-load");
  test::write_text(dir / "segments.csv", segments_csv_6rows());
  test::write_text(dir / "gauges.csv", gauges_csv_2rows());
  const auto [segments, gauges] = data::load_study_area(dir / "segments.csv", dir / "gauges.csv");
  REQUIRE(segments.size() == 6);
  REQUIRE(gauges.size() == 2);
  CHECK(segments[2].segment_id == 3);
  CHECK(segments[2].street_name == "Oak St");
  CHECK(segments[2].elv_m == doctest::Approx(0.8));
  CHECK(gauges[1].gauge_id == 2);
}

TEST_CASE("load_study_area rejects duplicate segment ids") {
  TempDir dir("ds-dup");
  test::write_text(dir / "segments.csv",
                   "segment_id,x_m,y_m,street_name,elv_m,twi,dtw_cm\n"
                   "3,10,20,A St,1.5,8.2,30\n"
                   "3,40,25,B St,2.5,9.1,45\n");
  test::write_text(dir / "gauges.csv", gauges_csv_2rows());
  try {
    data::load_study_area(dir / "segments.csv", dir / "gauges.csv");
    FAIL("expected DuplicateId");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::duplicate_id);
  }
}

TEST_CASE("load_study_area surfaces missing files and schema drift") {
  TempDir dir("ds-schema");
  test::write_text(dir / "gauges.csv", gauges_csv_2rows());
  try {
    data::load_study_area(dir / "absent.csv", dir / "gauges.csv");
    FAIL("expected MissingFile");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::missing_file);
  }
  test::write_text(dir / "segments.csv", "segment_id,x_m,y_m,name,elv_m,twi,dtw_cm\n");
  try {
    data::load_study_area(dir / "segments.csv", dir / "gauges.csv");
    FAIL("expected SchemaMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::schema_mismatch);
  }
  test::write_text(dir / "segments.csv",
                   "segment_id,x_m,y_m,street_name,elv_m,twi,dtw_cm\n1,0,0,A,nan,1,2\n");
  try {
    data::load_study_area(dir / "segments.csv", dir / "gauges.csv");
    FAIL("expected NonFiniteValue");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::non_finite_value);
  }
}

TEST_CASE("event series load trims windows and flags short events") {
  TempDir dir("ds-events");
  // One 28 h event; a second 5 h event that stays loadable but is unusable
  // for a 4-step look-back.
  std::string events =
      "event_id,start,end,split\n"
      "ev1,2016-06-05T00:00:00,2016-06-06T03:00:00,train\n"
      "ev2,2016-07-01T00:00:00,2016-07-01T04:00:00,train\n";
  test::write_text(dir / "events.csv", events);
  std::string rain = "gauge_id,timestamp,rain_mm\n";
  std::string tide = "timestamp,td_hr_m\n";
  for (const auto& [start, hours] :
       std::vector<std::pair<std::string, int>>{{"2016-06-05T00:00:00", 28},
                                                {"2016-07-01T00:00:00", 5}}) {
    const auto start_ts = timeutil::parse_iso(start);
    for (int h = 0; h < hours; ++h) {
      tide += timeutil::format_iso(start_ts + h * 3600) + ",0.5\n";
      for (int q = 0; q < 4; ++q) {
        rain += "1," + timeutil::format_iso(start_ts + h * 3600 + q * 900) + ",0.25\n";
      }
    }
  }
  test::write_text(dir / "raw_rain.csv", rain);
  test::write_text(dir / "tide.csv", tide);

  const auto series = data::load_event_series(dir / "raw_rain.csv", dir / "tide.csv",
                                              dir / "events.csv");
  REQUIRE(series.size() == 2);
  CHECK(series.at("ev1").tide.size() == 28);
  CHECK(series.at("ev1").rain_by_gauge.at(1).size() == 112);
  CHECK(series.at("ev2").tide.size() == 5);

  const auto events_loaded = data::load_events(dir / "events.csv");
  CHECK(events_loaded[0].usable_for_training(4));
  CHECK_FALSE(events_loaded[1].usable_for_training(4));
  CHECK(events_loaded[1].usable_for_training(1));

  SUBCASE("unknown event filter") {
    const std::vector<std::string> want = {"nope"};
    try {
      data::load_event_series(dir / "raw_rain.csv", dir / "tide.csv", dir / "events.csv", &want);
      FAIL("expected UnknownEvent");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::unknown_event);
    }
  }
}

TEST_CASE("missing tide hour inside a window is a coverage gap") {
  TempDir dir("ds-gap");
  test::write_text(dir / "events.csv",
                   "event_id,start,end,split\nev1,2016-06-05T00:00:00,2016-06-05T07:00:00,train\n");
  std::string rain = "gauge_id,timestamp,rain_mm\n";
  std::string tide = "timestamp,td_hr_m\n";
  const auto start_ts = timeutil::parse_iso("2016-06-05T00:00:00");
  for (int h = 0; h < 8; ++h) {
    if (h != 2) {  // hole at hour 2
      tide += timeutil::format_iso(start_ts + h * 3600) + ",0.5\n";
    }
    for (int q = 0; q < 4; ++q) {
      rain += "1," + timeutil::format_iso(start_ts + h * 3600 + q * 900) + ",0\n";
    }
  }
  test::write_text(dir / "raw_rain.csv", rain);
  test::write_text(dir / "tide.csv", tide);
  try {
    data::load_event_series(dir / "raw_rain.csv", dir / "tide.csv", dir / "events.csv");
    FAIL("expected CoverageGap");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::coverage_gap);
  }
}

TEST_CASE("generated dataset round-trips through save and load") {
  TempDir dir("ds-roundtrip");
  pipeline::GenConfig config;
  config.seed = 11;
  config.n_segments = 100;
  config.n_gauges = 10;
  config.n_events = 4;
  config.durations = {28, 16, 24, 11};
  const auto written = pipeline::generate_dataset(config, dir.path());

  const auto [segments, gauges] = data::load_study_area(dir / "segments.csv", dir / "gauges.csv");
  CHECK(segments.size() == 100);
  CHECK(gauges.size() == 10);
  CHECK(segments == written.segments);
  CHECK(gauges == written.gauges);

  const auto events = data::load_events(dir / "events.csv");
  CHECK(events == written.events);

  const auto loaded = pipeline::load_prepared(dir.path());
  REQUIRE(loaded.tables.size() == written.tables.size());
  for (std::size_t i = 0; i < loaded.tables.size(); ++i) {
    CHECK(loaded.tables[i] == written.tables[i]);
  }

  SUBCASE("second save is byte-stable") {
    const auto first = test::read_text(dir / "segments.csv");
    const auto first_weather = test::read_text(dir / "weather.csv");
    TempDir second("ds-roundtrip2");
    pipeline::generate_dataset(config, second.path());
    CHECK(test::read_text(second / "segments.csv") == first);
    CHECK(test::read_text(second / "weather.csv") == first_weather);
  }

  SUBCASE("tide rows are shared across segments, not repeated") {
    int total_hours = 0;
    for (const auto& event : events) {
      total_hours += event.duration_hrs;
    }
    const auto tide_text = test::read_text(dir / "tide.csv");
    const long tide_rows = std::count(tide_text.begin(), tide_text.end(), '\n') - 1;
    CHECK(tide_rows == total_hours);
    const auto weather_text = test::read_text(dir / "weather.csv");
    const long weather_rows = std::count(weather_text.begin(), weather_text.end(), '\n') - 1;
    CHECK(weather_rows == static_cast<long>(total_hours) * 100);
  }
}

TEST_CASE("save_relational rejects feature rows for unknown segments") {
  TempDir dir("ds-fk");
  pipeline::GenConfig config;
  config.seed = 3;
  config.n_segments = 5;
  config.n_gauges = 2;
  config.n_events = 2;
  config.durations = {12, 12};
  auto data_set = pipeline::generate_dataset(config, dir.path());

  auto series = data::load_event_series(dir / "raw_rain.csv", dir / "tide.csv",
                                        dir / "events.csv");
  auto tables = data_set.tables;
  for (auto& row : tables[0].rows) {
    if (row.segment_id == 5) row.segment_id = 99;
  }
  tables[0].segment_ids.back() = 99;
  TempDir out("ds-fk-out");
  try {
    data::save_relational(data_set.segments, data_set.gauges, data_set.events, series, tables,
                          out.path());
    FAIL("expected ForeignKeyViolation");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::foreign_key_violation);
  }
}

TEST_CASE("save_relational rejects overlapping event windows") {
  TempDir dir("ds-overlap");
  pipeline::GenConfig config;
  config.seed = 5;
  config.n_segments = 3;
  config.n_gauges = 2;
  config.n_events = 2;
  config.durations = {12, 12};
  auto data_set = pipeline::generate_dataset(config, dir.path());
  auto series = data::load_event_series(dir / "raw_rain.csv", dir / "tide.csv",
                                        dir / "events.csv");
  auto events = data_set.events;
  events[1].start = events[0].start + 3600;  // collide with event 0
  events[1].end = events[1].start + (events[1].duration_hrs - 1) * 3600;
  TempDir out("ds-overlap-out");
  try {
    data::save_relational(data_set.segments, data_set.gauges, events, series, {}, out.path());
    FAIL("expected ForeignKeyViolation");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::foreign_key_violation);
  }
}
