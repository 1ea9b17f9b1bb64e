#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pspd/errors.hpp"

namespace pspd {

// Geometry and timing parameters of the SPAD line sensor + TDC array.
//
// The fine time code of a hit indexes one of fine_bins_per_tdc delay-line
// bins inside a coarse clock period; nominally all bins have the same width
// coarse_period_ps / fine_bins_per_tdc.
struct SensorConfig {
  int n_pixels = 256;
  int n_tdcs = 64;
  int fine_bins_per_tdc = 140;
  double coarse_period_ps = 2500.0;
  double nominal_lsb_ps = 2500.0 / 140.0; // 17.857... ps
  double cycle_length_ps = 4.0e9;         // 4 ms acquisition cycle
  double dead_time_ps = 50000.0;
  int buffer_cap_per_pixel_per_cycle = 512;
  double trigger_rate_hz = 250.0;

  int pixels_per_tdc() const { return n_pixels / n_tdcs; }

  // Largest valid coarse count: coarse * coarse_period_ps < cycle_length_ps.
  std::uint32_t max_coarse() const;

  // Throws ConfigError if any invariant is violated.
  void validate() const;
};

// One detection as emitted by the acquisition electronics.
struct RawHit {
  std::uint32_t cycle_index = 0;
  std::uint32_t coarse = 0;
  std::uint16_t pixel = 0;
  std::uint8_t fine = 0;
  std::uint8_t flags = 0; // bit 0: time was clamped to a cycle boundary

  static constexpr std::uint8_t kEdgeFlag = 0x01;

  friend bool operator==(const RawHit&, const RawHit&) = default;
};

// Canonical record order: (cycle, pixel, coarse, fine).
bool raw_hit_order(const RawHit& a, const RawHit& b);

// Throws DomainError if the hit violates the RawHit invariants for cfg.
void validate_hit(const RawHit& hit, const SensorConfig& cfg);

// A hit converted to physical time within its cycle, optionally with a
// wavelength attached after spectral calibration.
struct CalibratedHit {
  std::uint32_t cycle_index = 0;
  std::uint16_t pixel = 0;
  double time_ps = 0.0;
  std::optional<double> wavelength_nm;
  // Set when offset subtraction pushed the time outside [0, cycle_length),
  // or when the raw hit carried the hardware edge flag. Such hits are kept.
  bool edge = false;
};

// Per-TDC fine-bin widths and cumulative edges. Construction renormalizes
// the widths so that they always sum to the coarse period: edges are scaled
// so the last one is exactly coarse_period_ps and widths are re-derived as
// edge differences (the sum then telescopes).
class TdcCalibration {
public:
  TdcCalibration() = default;

  static TdcCalibration identity(const SensorConfig& cfg);
  static TdcCalibration from_widths(const std::vector<std::vector<double>>& widths_per_tdc,
                                    double coarse_period_ps);

  int n_tdcs() const { return n_tdcs_; }
  int n_bins() const { return n_bins_; }
  double coarse_period_ps() const { return period_; }

  std::span<const double> widths(int tdc) const;
  std::span<const double> edges(int tdc) const; // n_bins + 1 values

  double bin_width(int tdc, int fine) const;
  double bin_center(int tdc, int fine) const;

  // Fine code whose bin contains the remainder (time modulo coarse period).
  int fine_of_remainder(int tdc, double remainder_ps) const;

  bool matches(const SensorConfig& cfg) const;
  friend bool operator==(const TdcCalibration&, const TdcCalibration&) = default;

private:
  int n_tdcs_ = 0;
  int n_bins_ = 0;
  double period_ = 0.0;
  std::vector<double> widths_; // n_tdcs * n_bins
  std::vector<double> edges_;  // n_tdcs * (n_bins + 1)
};

// Per-pixel static time offsets [ps]. Offsets are only defined up to a
// global constant; calibration products fix the gauge as offset[0] == 0.
// Tables describing injected simulation truth may use any gauge.
struct OffsetTable {
  std::vector<double> offset_ps;
  std::vector<double> sigma_ps; // per-pixel uncertainty; empty if unknown

  static OffsetTable zeros(int n_pixels);

  int size() const { return static_cast<int>(offset_ps.size()); }
  bool gauge_fixed() const { return !offset_ps.empty() && offset_ps[0] == 0.0; }

  friend bool operator==(const OffsetTable& a, const OffsetTable& b) {
    return a.offset_ps == b.offset_ps;
  }
};

// TDC serving a pixel. Pixels are assigned in blocks of n_pixels / n_tdcs
// consecutive pixels per TDC.
int tdc_of_pixel(int pixel, const SensorConfig& cfg);

// Nominal decode: coarse * coarse_period + (fine + 0.5) * nominal_lsb.
// Bin-center convention; validates the hit.
double decode_nominal(const RawHit& hit, const SensorConfig& cfg);

// Full decode through measured bin edges and per-pixel offsets:
//   t = coarse * coarse_period + midpoint(fine bin of the pixel's TDC)
//       - offset[pixel]
// Times below zero are clamped to 0 and flagged; times at or past the cycle
// end are flagged but kept.
CalibratedHit decode_calibrated(const RawHit& hit, const SensorConfig& cfg,
                                const TdcCalibration& tdc_cal,
                                const OffsetTable& offsets);

} // namespace pspd
