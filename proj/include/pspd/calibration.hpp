#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pspd/sensor.hpp"

namespace pspd {

// Per-TDC occupancy of fine codes under uniform illumination. Mergeable:
// partial histograms built on disjoint data shards combine associatively.
struct DensityHistogram {
  int n_tdcs = 0;
  int n_bins = 0;
  std::vector<std::uint64_t> counts; // n_tdcs * n_bins
  std::uint64_t total = 0;

  DensityHistogram() = default;
  explicit DensityHistogram(const SensorConfig& cfg);

  void add(const RawHit& hit, const SensorConfig& cfg);
  void add_all(std::span<const RawHit> hits, const SensorConfig& cfg);
  void merge(const DensityHistogram& other);

  std::uint64_t count(int tdc, int fine) const {
    return counts[static_cast<std::size_t>(tdc) * n_bins + fine];
  }
  std::uint64_t tdc_total(int tdc) const;
};

// Throws InsufficientStatsError on an empty stream.
DensityHistogram accumulate_density(std::span<const RawHit> hits, const SensorConfig& cfg);

struct TdcFitReport {
  TdcCalibration calibration;
  std::vector<std::string> warnings; // zero-occupancy bins
};

// Code-density estimate: width_b = coarse_period * n_b / N_tdc, cumulative
// edges by prefix sum, renormalized to the coarse period. Throws
// InsufficientStatsError naming every under-populated TDC and its deficit.
TdcFitReport fit_tdc_calibration(const DensityHistogram& hist, const SensorConfig& cfg,
                                 std::uint64_t min_counts_per_tdc = 100000);

// Mean time differences between co-detections of pixel pairs in a
// pulsed-laser run. Entries are stored for i < j with dt = t_i - t_j;
// mean_dt(j, i) = -mean_dt(i, j) by construction.
class PairDifferenceMatrix {
public:
  PairDifferenceMatrix() = default;
  explicit PairDifferenceMatrix(int n_pixels);

  int n_pixels() const { return n_pixels_; }
  std::uint64_t count(int i, int j) const { return n_[tri(i, j)]; }
  double mean_dt_ps(int i, int j) const;
  double stderr_ps(int i, int j) const; // infinity when count < 2

  void add_observation(int i, int j, double dt_i_minus_j_ps);

  // Clusters hits of one cycle into same-pulse groups (a new group starts
  // when a hit is more than window_ps after the group's first hit), keeps
  // the earliest hit per pixel per group, and accumulates all pixel pairs.
  // Hits must be sorted by time.
  void add_cycle(std::span<const CalibratedHit> cycle_hits, double window_ps);

  void merge(const PairDifferenceMatrix& other);

  // Direct construction from known offsets: mean_dt(i,j) = o_i - o_j with
  // the given per-pair count and spread (test / gauge-check helper).
  static PairDifferenceMatrix from_offsets(const std::vector<double>& offsets_ps,
                                           std::uint64_t count_per_pair,
                                           double stderr_scale_ps = 0.0);

private:
  std::size_t tri(int i, int j) const;

  int n_pixels_ = 0;
  std::vector<std::uint64_t> n_;
  std::vector<double> mean_;
  std::vector<double> m2_; // sum of squared deviations (Welford)
};

// Accumulates pair differences over a full hit stream (hits sorted by
// (cycle, time); DNL-corrected, offsets not yet applied).
PairDifferenceMatrix accumulate_pair_differences(std::span<const CalibratedHit> hits,
                                                 double window_ps, const SensorConfig& cfg);

struct SolveOffsetsOptions {
  std::uint64_t min_pair_count = 30;
  double stderr_floor_ps = 1e-3; // avoids infinite weights on noiseless input
};

// Weighted least squares for per-pixel offsets o with equations
// o_i - o_j = mean_dt(i, j), weights 1/stderr^2, gauge o_0 = 0. Returns
// offsets and per-pixel uncertainties. Throws DomainError naming the
// disconnected pixels when the pair graph does not connect to pixel 0.
OffsetTable solve_offsets(const PairDifferenceMatrix& m, const SensorConfig& cfg,
                          const SolveOffsetsOptions& opts = {});

} // namespace pspd
