#include <benchmark/benchmark.h>

#include "floodcast/features.hpp"
#include "floodcast/synth_hydro.hpp"

using namespace floodcast;

namespace {

data::RainfallEvent bench_event(int hours) {
  data::RainfallEvent event;
  event.event_id = "bench";
  event.start = 0;
  event.end = (hours - 1) * timeutil::k_hour_s;
  event.duration_hrs = hours;
  return event;
}

void BM_IdwInterpolate(benchmark::State& state) {
  Rng rng(5);
  std::vector<features::GaugeValue> gauges(static_cast<std::size_t>(state.range(0)));
  for (auto& gauge : gauges) {
    gauge = {rng.uniform(0.0, 2000.0), rng.uniform(0.0, 2000.0), rng.uniform(0.0, 30.0)};
  }
  double x = 0.0;
  for (auto _ : state) {
    x += features::idw_interpolate(gauges, 1234.5, 987.6);
  }
  benchmark::DoNotOptimize(x);
  state.SetItemsProcessed(state.iterations());
}

void BM_DeriveRainfallFeatures(benchmark::State& state) {
  const auto area = synth::gen_study_area(static_cast<int>(state.range(0)), 10, {2000, 2000}, 9);
  const auto event = bench_event(28);
  const auto series = synth::gen_event(area, event, 50.0, 9);
  for (auto _ : state) {
    auto table = features::derive_rainfall_features(series, area.segments, area.gauges, event);
    benchmark::DoNotOptimize(table);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * 28);
}

void BM_OracleDepths(benchmark::State& state) {
  const auto area = synth::gen_study_area(static_cast<int>(state.range(0)), 10, {2000, 2000}, 9);
  const auto event = bench_event(28);
  const auto series = synth::gen_event(area, event, 50.0, 9);
  auto table = features::derive_rainfall_features(series, area.segments, area.gauges, event);
  features::attach_static_and_tide(table, area.segments, series.tide);
  for (auto _ : state) {
    auto scratch = table;
    synth::oracle_depths(area, scratch);
    benchmark::DoNotOptimize(scratch);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * 28);
}

}  // namespace

BENCHMARK(BM_IdwInterpolate)->Arg(10)->Arg(100);
BENCHMARK(BM_DeriveRainfallFeatures)->Arg(50)->Arg(500);
BENCHMARK(BM_OracleDepths)->Arg(50)->Arg(500);
