#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "floodcast/data_store.hpp"
#include "floodcast/features.hpp"
#include "floodcast/rng.hpp"

namespace floodcast::synth {

struct Bounds {
  double width_m = 2000.0;
  double height_m = 2000.0;
};

// Smooth sum-of-sinusoids terrain, skewed low so most ground sits a few
// meters above datum while peaks reach the 12.5 m cap.
class ElevationField {
 public:
  ElevationField(const Bounds& bounds, Rng& rng);

  double elevation(double x_m, double y_m) const;
  // |gradient| of the elevation surface.
  double slope(double x_m, double y_m) const;
  double slope_upper_bound() const;

  static constexpr double k_max_elevation_m = 12.5;

 private:
  struct Wave {
    double kx, ky, phase, weight;
  };
  std::vector<Wave> waves_;
  double field(double x_m, double y_m) const;  // in [-1, 1]
};

struct SyntheticArea {
  std::vector<data::StreetSegment> segments;
  std::vector<data::RainGauge> gauges;
  std::uint64_t seed = 0;
  Bounds bounds;
};

SyntheticArea gen_study_area(int n_segments, int n_gauges, const Bounds& bounds,
                             std::uint64_t seed);

struct EventGenParams {
  double tide_amplitude_m = 0.5;
  double tide_offset_m = 0.6;
  // Storm pulse shape ranges (hours).
  double pulse_sigma_min_hrs = 0.75;
  double pulse_sigma_max_hrs = 2.5;
};

// Synthesizes one event's forcing: per-gauge quarter-hour rainfall built from
// 1-3 Gaussian-in-time storm pulses with spatially correlated amplitudes and
// a forced dry lead-in/tail of 2 hours, plus an hourly tide curve on the
// 12.42 h principal lunar semidiurnal period. The sampled tide curve is
// rescaled so its range equals exactly twice the configured amplitude.
data::EventSeries gen_event(const SyntheticArea& area, const data::RainfallEvent& event,
                            double peak_intensity_mm, std::uint64_t seed,
                            const EventGenParams& params = {});

struct OracleParams {
  double retention = 0.6;    // leak factor per hour, in (0, 1)
  double rain_gain = 0.004;  // m of depth per mm of accumulated rain
  double twi_gain = 0.02;    // m per unit of normalized TWI
  double tide_gain = 0.5;    // dimensionless overtopping factor
  double dtw_gain = 0.03;    // m per unit of normalized DTW
};

// Fills the target depth column of `table` from the deterministic
// leaky-accumulator + tide-overtopping recurrence:
//   S(t) = retention * S(t-1) + RH(t),          S(start) = 0
//   depth(t) = max(0, rain_gain * S(t)
//                     + tide_gain * max(0, TD_HR(t) - ELV)
//                     + min(0, twi_gain * TWI' - dtw_gain * DTW'))
// with TWI'/DTW' min-max normalized over the whole study area. The static
// term is clamped non-positive so a dry, low-tide hour is exactly 0.
void oracle_depths(const SyntheticArea& area, features::EventFeatureTable& table,
                   const OracleParams& params = {});

// The k segments with the highest mean depth over the given tables,
// ties broken toward the lower segment id.
std::vector<int> select_flood_prone(std::span<const features::EventFeatureTable> depth_tables,
                                    int k);

}  // namespace floodcast::synth
