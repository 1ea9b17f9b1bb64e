#include "pspd/sensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <tuple>

namespace pspd {

namespace {

std::string fmt(const char* format, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), format, args...);
  return std::string(buf);
}

} // namespace

std::uint32_t SensorConfig::max_coarse() const {
  // Largest c with c * coarse_period < cycle_length.
  auto c = static_cast<std::uint64_t>(std::ceil(cycle_length_ps / coarse_period_ps)) - 1;
  while (static_cast<double>(c) * coarse_period_ps >= cycle_length_ps) --c;
  return static_cast<std::uint32_t>(c);
}

void SensorConfig::validate() const {
  if (n_pixels <= 0 || n_tdcs <= 0 || fine_bins_per_tdc <= 0)
    throw ConfigError("sensor config: pixel/TDC/bin counts must be positive");
  if (n_pixels % n_tdcs != 0)
    throw ConfigError(fmt("sensor config: n_pixels (%d) not divisible by n_tdcs (%d)",
                          n_pixels, n_tdcs));
  if (coarse_period_ps <= 0.0 || nominal_lsb_ps <= 0.0)
    throw ConfigError("sensor config: coarse period and LSB must be positive");
  double prod = fine_bins_per_tdc * nominal_lsb_ps;
  if (std::abs(prod - coarse_period_ps) > 0.01)
    throw ConfigError(fmt("sensor config: fine_bins_per_tdc * nominal_lsb_ps = %.6f ps "
                          "does not match coarse_period_ps = %.6f ps within 0.01 ps",
                          prod, coarse_period_ps));
  if (cycle_length_ps <= 0.0)
    throw ConfigError("sensor config: cycle_length_ps must be positive");
  if (buffer_cap_per_pixel_per_cycle < 1)
    throw ConfigError("sensor config: buffer cap must be at least 1");
  if (dead_time_ps < 0.0 || trigger_rate_hz < 0.0)
    throw ConfigError("sensor config: dead time and trigger rate must be non-negative");
}

bool raw_hit_order(const RawHit& a, const RawHit& b) {
  return std::tie(a.cycle_index, a.pixel, a.coarse, a.fine) <
         std::tie(b.cycle_index, b.pixel, b.coarse, b.fine);
}

void validate_hit(const RawHit& hit, const SensorConfig& cfg) {
  if (hit.pixel >= cfg.n_pixels)
    throw DomainError(fmt("raw hit: pixel %u out of range [0, %d)", hit.pixel, cfg.n_pixels));
  if (hit.fine >= cfg.fine_bins_per_tdc)
    throw DomainError(fmt("raw hit: fine code %u out of range [0, %d)", hit.fine,
                          cfg.fine_bins_per_tdc));
  if (static_cast<double>(hit.coarse) * cfg.coarse_period_ps >= cfg.cycle_length_ps)
    throw DomainError(fmt("raw hit: coarse count %u places the hit at/after cycle end",
                          hit.coarse));
}

TdcCalibration TdcCalibration::identity(const SensorConfig& cfg) {
  std::vector<double> w(cfg.fine_bins_per_tdc, cfg.coarse_period_ps / cfg.fine_bins_per_tdc);
  return from_widths(std::vector<std::vector<double>>(cfg.n_tdcs, w), cfg.coarse_period_ps);
}

TdcCalibration TdcCalibration::from_widths(const std::vector<std::vector<double>>& widths_per_tdc,
                                           double coarse_period_ps) {
  if (widths_per_tdc.empty() || widths_per_tdc[0].empty())
    throw ConfigError("tdc calibration: empty width table");
  if (coarse_period_ps <= 0.0)
    throw ConfigError("tdc calibration: coarse period must be positive");

  TdcCalibration cal;
  cal.n_tdcs_ = static_cast<int>(widths_per_tdc.size());
  cal.n_bins_ = static_cast<int>(widths_per_tdc[0].size());
  cal.period_ = coarse_period_ps;
  cal.widths_.resize(static_cast<std::size_t>(cal.n_tdcs_) * cal.n_bins_);
  cal.edges_.resize(static_cast<std::size_t>(cal.n_tdcs_) * (cal.n_bins_ + 1));

  for (int t = 0; t < cal.n_tdcs_; ++t) {
    const auto& w = widths_per_tdc[t];
    if (static_cast<int>(w.size()) != cal.n_bins_)
      throw ConfigError(fmt("tdc calibration: TDC %d has %zu widths, expected %d",
                            t, w.size(), cal.n_bins_));
    double sum = 0.0;
    for (double x : w) {
      if (!(x >= 0.0))
        throw ConfigError(fmt("tdc calibration: negative bin width in TDC %d", t));
      sum += x;
    }
    if (sum <= 0.0)
      throw ConfigError(fmt("tdc calibration: TDC %d has zero total width", t));

    double* e = &cal.edges_[static_cast<std::size_t>(t) * (cal.n_bins_ + 1)];
    e[0] = 0.0;
    double acc = 0.0;
    for (int b = 0; b < cal.n_bins_; ++b) {
      acc += w[b];
      e[b + 1] = acc * (coarse_period_ps / sum);
    }
    e[cal.n_bins_] = coarse_period_ps; // exact by construction
    double* wc = &cal.widths_[static_cast<std::size_t>(t) * cal.n_bins_];
    for (int b = 0; b < cal.n_bins_; ++b) wc[b] = e[b + 1] - e[b];
  }
  return cal;
}

std::span<const double> TdcCalibration::widths(int tdc) const {
  return {&widths_[static_cast<std::size_t>(tdc) * n_bins_], static_cast<std::size_t>(n_bins_)};
}

std::span<const double> TdcCalibration::edges(int tdc) const {
  return {&edges_[static_cast<std::size_t>(tdc) * (n_bins_ + 1)],
          static_cast<std::size_t>(n_bins_ + 1)};
}

double TdcCalibration::bin_width(int tdc, int fine) const {
  return widths_[static_cast<std::size_t>(tdc) * n_bins_ + fine];
}

double TdcCalibration::bin_center(int tdc, int fine) const {
  const double* e = &edges_[static_cast<std::size_t>(tdc) * (n_bins_ + 1)];
  return 0.5 * (e[fine] + e[fine + 1]);
}

int TdcCalibration::fine_of_remainder(int tdc, double remainder_ps) const {
  const double* e = &edges_[static_cast<std::size_t>(tdc) * (n_bins_ + 1)];
  if (remainder_ps <= 0.0) {
    // First bin with nonzero width.
    for (int b = 0; b < n_bins_; ++b)
      if (e[b + 1] > e[b]) return b;
    return 0;
  }
  if (remainder_ps >= period_) remainder_ps = std::nextafter(period_, 0.0);
  const double* hi = std::upper_bound(e, e + n_bins_ + 1, remainder_ps);
  int b = static_cast<int>(hi - e) - 1;
  return std::clamp(b, 0, n_bins_ - 1);
}

bool TdcCalibration::matches(const SensorConfig& cfg) const {
  return n_tdcs_ == cfg.n_tdcs && n_bins_ == cfg.fine_bins_per_tdc &&
         period_ == cfg.coarse_period_ps;
}

OffsetTable OffsetTable::zeros(int n_pixels) {
  OffsetTable t;
  t.offset_ps.assign(static_cast<std::size_t>(n_pixels), 0.0);
  return t;
}

int tdc_of_pixel(int pixel, const SensorConfig& cfg) {
  if (pixel < 0 || pixel >= cfg.n_pixels)
    throw DomainError(fmt("tdc_of_pixel: pixel %d out of range [0, %d)", pixel, cfg.n_pixels));
  return pixel / cfg.pixels_per_tdc();
}

double decode_nominal(const RawHit& hit, const SensorConfig& cfg) {
  validate_hit(hit, cfg);
  return static_cast<double>(hit.coarse) * cfg.coarse_period_ps +
         (hit.fine + 0.5) * cfg.nominal_lsb_ps;
}

CalibratedHit decode_calibrated(const RawHit& hit, const SensorConfig& cfg,
                                const TdcCalibration& tdc_cal, const OffsetTable& offsets) {
  if (!tdc_cal.matches(cfg))
    throw ConfigError("decode_calibrated: TDC calibration does not match sensor config");
  if (offsets.size() != cfg.n_pixels)
    throw ConfigError(fmt("decode_calibrated: offset table has %d pixels, expected %d",
                          offsets.size(), cfg.n_pixels));
  validate_hit(hit, cfg);

  int tdc = hit.pixel / cfg.pixels_per_tdc();
  double t = static_cast<double>(hit.coarse) * cfg.coarse_period_ps +
             tdc_cal.bin_center(tdc, hit.fine) - offsets.offset_ps[hit.pixel];

  CalibratedHit out;
  out.cycle_index = hit.cycle_index;
  out.pixel = hit.pixel;
  out.edge = (hit.flags & RawHit::kEdgeFlag) != 0;
  if (t < 0.0) {
    t = 0.0;
    out.edge = true;
  } else if (t >= cfg.cycle_length_ps) {
    out.edge = true;
  }
  out.time_ps = t;
  return out;
}

} // namespace pspd
