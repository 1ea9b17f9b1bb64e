#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <variant>
#include <vector>

#include "pspd/sensor.hpp"

namespace pspd {

// Linear pixel -> wavelength map of the grating + lens assembly.
struct Dispersion {
  double lambda_at_pixel0_nm = 790.0;
  double nm_per_pixel = 0.11;

  void validate() const {
    if (nm_per_pixel == 0.0) throw ConfigError("dispersion: nm_per_pixel must be nonzero");
  }
};

// Pixel hit by a photon of the given wavelength, or nullopt when the photon
// lands outside the array.
std::optional<int> pixel_of_wavelength(double lambda_nm, const Dispersion& disp,
                                       const SensorConfig& cfg);

// Detector response parameters. true_offsets / true_dnl are the injected
// ground truth the calibration procedures are later asked to recover; when
// unset they default to zeros / identity.
struct DetectorEffects {
  double pde = 0.30;
  double dcr_hz_per_pixel = 100.0;
  double jitter_sigma_ps = 40.0;
  std::optional<OffsetTable> true_offsets;
  std::optional<TdcCalibration> true_dnl;
  double dead_time_ps = 50000.0;
  int buffer_cap = 512;

  void validate(const SensorConfig& cfg) const;
};

struct ThermalLines {
  struct Line {
    double center_nm = 0.0;
    double relative_intensity = 1.0;
  };
  std::vector<Line> lines;
  // Single effective optical blur applied per photon.
  double instrument_sigma_nm = 0.042;
  double total_rate_hz = 0.0;
};

struct SpdcSource {
  double pump_center_nm = 405.0;
  double pump_sigma_rad_s = 0.0;   // pump spectral width
  double filter_sigma_rad_s = 0.0; // per-arm filter width
  double arm_delay_ps = 18300.0;   // extra path delay of the idler arm
  double pair_rate_hz = 0.0;
  double splitter_loss = 0.0; // per-photon loss at the combining splitter
};

struct UniformSource {
  double rate_hz_per_pixel = 0.0;
};

struct PulsedLaser {
  double rep_rate_hz = 0.0;
  double pulse_sigma_ps = 0.0;
};

using SourceSpec = std::variant<ThermalLines, SpdcSource, UniformSource, PulsedLaser>;

void validate_source(const SourceSpec& source);
const char* source_type_name(const SourceSpec& source);

// Ground-truth record for one generated photon, or for one detected dark
// count. emission_time_ps is absolute (cycle_index * cycle_length + in-cycle
// time). pixel is set only when the event produced a raw hit.
struct TruthRecord {
  enum class Kind : std::uint8_t { photon, dark };

  double emission_time_ps = 0.0;
  std::optional<double> wavelength_nm;
  std::optional<std::uint16_t> pixel;
  Kind kind = Kind::photon;
  std::optional<std::uint64_t> pair_id;
};

struct SpdcPairSample {
  double omega_s_rad_s = 0.0;
  double omega_i_rad_s = 0.0;
  double t_emit_ps = 0.0;
};

// Widths of the (omega_s + omega_i) and (omega_i - omega_s) distributions
// sampled by the SPDC source: the Gaussian-product reduction of a pump
// envelope of width pump_sigma and two per-arm filters of width filter_sigma.
// A narrow pump gives a narrow sum (energy conservation / anti-correlation).
struct SpdcSamplingWidths {
  double sum_sigma_rad_s = 0.0;  // width of omega_s + omega_i
  double diff_sigma_rad_s = 0.0; // width of omega_i - omega_s
};
SpdcSamplingWidths spdc_sampling_widths(const SpdcSource& source);

// Draws one pair from the joint spectral density: the frequency sum is
// Normal(omega_p, sum_sigma), the difference Normal(0, diff_sigma), emission
// uniform in the cycle, both photons simultaneous.
SpdcPairSample sample_spdc_pair(const SpdcSource& source, std::mt19937_64& rng,
                                double cycle_length_ps);

// One photon handed to the detector stage. Sources that know wavelengths set
// lambda_nm (pixel resolved through the dispersion); sources that address
// pixels directly set pixel.
struct Emission {
  double t_ps = 0.0;
  std::optional<double> lambda_nm;
  std::optional<std::uint16_t> pixel;
  std::optional<std::uint64_t> pair_id;
  bool lost_at_source = false; // e.g. absorbed in the combining splitter
};

struct CycleData {
  std::uint32_t cycle_index = 0;
  std::vector<RawHit> hits;        // sorted by (pixel, coarse, fine)
  std::vector<TruthRecord> truth;
};

struct SimSummary {
  std::uint32_t n_cycles = 0;
  std::uint64_t photons_emitted = 0;
  std::uint64_t photons_detected = 0;
  std::uint64_t darks_detected = 0;
  std::uint64_t thinned_pde = 0;
  std::uint64_t splitter_lost = 0;
  std::uint64_t off_sensor = 0;
  std::uint64_t dead_time_dropped = 0;
  std::uint64_t buffer_dropped = 0;
  std::uint64_t edge_clamped = 0;
  std::uint64_t saturated_pixel_cycles = 0;
  std::uint64_t raw_hits = 0;

  void add(const SimSummary& other);
};

struct SimOptions {
  bool collect_truth = true;
};

using CycleSink = std::function<void(CycleData&&)>;

// Detector stage for one cycle: PDE thinning, dispersion mapping, per-photon
// jitter, dark counts, true offsets, non-paralyzable dead time, buffer cap,
// and quantization through the true DNL bin edges. Deterministic given
// (seed, cycle_index); randomness comes from per-(cycle, channel) substreams
// so cycles may be generated in any order.
CycleData apply_detector(std::uint32_t cycle_index, const std::vector<Emission>& emissions,
                         const SensorConfig& cfg, const DetectorEffects& effects,
                         const Dispersion& disp, std::uint64_t seed, SimSummary& summary,
                         const SimOptions& opts = {});

// Full simulation: generates arrivals for each cycle from the source and runs
// the detector stage, handing each cycle to sink in cycle order.
SimSummary simulate(const SensorConfig& cfg, const DetectorEffects& effects,
                    const SourceSpec& source, const Dispersion& disp, std::uint32_t n_cycles,
                    std::uint64_t seed, const CycleSink& sink, const SimOptions& opts = {});

struct SimResult {
  std::vector<RawHit> hits;
  std::vector<TruthRecord> truth;
  SimSummary summary;
};

// Convenience wrapper collecting everything in memory.
SimResult simulate_collect(const SensorConfig& cfg, const DetectorEffects& effects,
                           const SourceSpec& source, const Dispersion& disp,
                           std::uint32_t n_cycles, std::uint64_t seed,
                           const SimOptions& opts = {});

} // namespace pspd
