#include "pspd/sim.hpp"

#include <algorithm>
#include <cmath>

#include "pspd/constants.hpp"
#include "pspd/rng.hpp"

namespace pspd {

std::optional<int> pixel_of_wavelength(double lambda_nm, const Dispersion& disp,
                                       const SensorConfig& cfg) {
  disp.validate();
  long p = std::lround((lambda_nm - disp.lambda_at_pixel0_nm) / disp.nm_per_pixel);
  if (p < 0 || p >= cfg.n_pixels) return std::nullopt;
  return static_cast<int>(p);
}

void DetectorEffects::validate(const SensorConfig& cfg) const {
  if (!(pde >= 0.0 && pde <= 1.0)) throw ConfigError("effects: pde must be in [0, 1]");
  if (dcr_hz_per_pixel < 0.0) throw ConfigError("effects: dark count rate must be >= 0");
  if (jitter_sigma_ps < 0.0) throw ConfigError("effects: jitter sigma must be >= 0");
  if (dead_time_ps < 0.0) throw ConfigError("effects: dead time must be >= 0");
  if (buffer_cap < 1) throw ConfigError("effects: buffer cap must be >= 1");
  if (true_offsets && true_offsets->size() != cfg.n_pixels)
    throw ConfigError("effects: true_offsets size does not match n_pixels");
  if (true_dnl && !true_dnl->matches(cfg))
    throw ConfigError("effects: true_dnl does not match sensor config");
}

void validate_source(const SourceSpec& source) {
  std::visit(
      [](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, ThermalLines>) {
          if (s.lines.empty()) throw ConfigError("thermal source: needs at least one line");
          for (const auto& l : s.lines)
            if (!(l.relative_intensity > 0.0))
              throw ConfigError("thermal source: line intensities must be positive");
          if (s.instrument_sigma_nm < 0.0 || s.total_rate_hz < 0.0)
            throw ConfigError("thermal source: rate and blur must be non-negative");
        } else if constexpr (std::is_same_v<T, SpdcSource>) {
          if (!(s.pump_center_nm > 0.0)) throw ConfigError("spdc source: pump center must be positive");
          if (!(s.filter_sigma_rad_s > 0.0))
            throw DomainError("spdc source: filter width must be positive");
          if (s.pump_sigma_rad_s < 0.0)
            throw DomainError("spdc source: pump width must be non-negative");
          if (s.pair_rate_hz < 0.0 || s.arm_delay_ps < 0.0)
            throw ConfigError("spdc source: rate and delay must be non-negative");
          if (!(s.splitter_loss >= 0.0 && s.splitter_loss <= 1.0))
            throw ConfigError("spdc source: splitter loss must be in [0, 1]");
        } else if constexpr (std::is_same_v<T, UniformSource>) {
          if (s.rate_hz_per_pixel < 0.0) throw ConfigError("uniform source: rate must be >= 0");
        } else {
          if (s.rep_rate_hz < 0.0 || s.pulse_sigma_ps < 0.0)
            throw ConfigError("pulsed source: rate and pulse width must be non-negative");
        }
      },
      source);
}

const char* source_type_name(const SourceSpec& source) {
  switch (source.index()) {
    case 0: return "thermal_lines";
    case 1: return "spdc";
    case 2: return "uniform";
    default: return "pulsed_laser";
  }
}

SpdcSamplingWidths spdc_sampling_widths(const SpdcSource& s) {
  double dp = s.pump_sigma_rad_s;
  double df = s.filter_sigma_rad_s;
  double sum_sigma = dp == 0.0 ? 0.0 : dp * df / std::sqrt(dp * dp + 2.0 * df * df);
  return {sum_sigma, df};
}

SpdcPairSample sample_spdc_pair(const SpdcSource& source, std::mt19937_64& rng,
                                double cycle_length_ps) {
  if (!(source.filter_sigma_rad_s > 0.0))
    throw DomainError("sample_spdc_pair: filter width must be positive");
  if (source.pump_sigma_rad_s < 0.0)
    throw DomainError("sample_spdc_pair: pump width must be non-negative");

  const double omega_p = constants::omega_of_lambda_nm(source.pump_center_nm);
  const auto widths = spdc_sampling_widths(source);

  SpdcPairSample out;
  out.t_emit_ps = std::uniform_real_distribution<double>(0.0, cycle_length_ps)(rng);
  double sum = omega_p;
  if (widths.sum_sigma_rad_s > 0.0)
    sum = std::normal_distribution<double>(omega_p, widths.sum_sigma_rad_s)(rng);
  double diff = std::normal_distribution<double>(0.0, widths.diff_sigma_rad_s)(rng);
  out.omega_s_rad_s = 0.5 * (sum - diff);
  out.omega_i_rad_s = 0.5 * (sum + diff);
  return out;
}

void SimSummary::add(const SimSummary& o) {
  n_cycles += o.n_cycles;
  photons_emitted += o.photons_emitted;
  photons_detected += o.photons_detected;
  darks_detected += o.darks_detected;
  thinned_pde += o.thinned_pde;
  splitter_lost += o.splitter_lost;
  off_sensor += o.off_sensor;
  dead_time_dropped += o.dead_time_dropped;
  buffer_dropped += o.buffer_dropped;
  edge_clamped += o.edge_clamped;
  saturated_pixel_cycles += o.saturated_pixel_cycles;
  raw_hits += o.raw_hits;
}

namespace {

struct Candidate {
  double arrival_ps;      // physical arrival at the pixel (jitter included)
  std::int64_t truth_idx; // kDarkIdx for darks, kNoTruthIdx for untracked photons
};

constexpr std::int64_t kDarkIdx = -1;
constexpr std::int64_t kNoTruthIdx = -2;

// Generate source arrivals for one cycle. All draws come from the per-cycle
// source substream in a fixed order.
void generate_cycle(const SourceSpec& source, std::uint32_t cycle, const SensorConfig& cfg,
                    std::uint64_t seed, std::vector<Emission>& out) {
  out.clear();
  auto rng = rng::substream(seed, cycle, rng::kSourceChannel);
  const double cycle_s = cfg.cycle_length_ps * 1e-12;
  std::uniform_real_distribution<double> in_cycle(0.0, cfg.cycle_length_ps);

  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, ThermalLines>) {
          double total_intensity = 0.0;
          for (const auto& l : s.lines) total_intensity += l.relative_intensity;
          std::uint64_t n = std::poisson_distribution<std::uint64_t>(s.total_rate_hz * cycle_s)(rng);
          out.reserve(n);
          for (std::uint64_t k = 0; k < n; ++k) {
            Emission e;
            e.t_ps = in_cycle(rng);
            double pick = std::uniform_real_distribution<double>(0.0, total_intensity)(rng);
            std::size_t li = 0;
            for (; li + 1 < s.lines.size(); ++li) {
              pick -= s.lines[li].relative_intensity;
              if (pick <= 0.0) break;
            }
            double lambda = s.lines[li].center_nm;
            if (s.instrument_sigma_nm > 0.0)
              lambda = std::normal_distribution<double>(lambda, s.instrument_sigma_nm)(rng);
            e.lambda_nm = lambda;
            out.push_back(e);
          }
        } else if constexpr (std::is_same_v<T, SpdcSource>) {
          std::uint64_t n = std::poisson_distribution<std::uint64_t>(s.pair_rate_hz * cycle_s)(rng);
          out.reserve(2 * n);
          std::uniform_real_distribution<double> unit(0.0, 1.0);
          for (std::uint64_t k = 0; k < n; ++k) {
            SpdcPairSample pair = sample_spdc_pair(s, rng, cfg.cycle_length_ps);
            bool keep_s = s.splitter_loss == 0.0 || unit(rng) >= s.splitter_loss;
            bool keep_i = s.splitter_loss == 0.0 || unit(rng) >= s.splitter_loss;
            std::uint64_t pair_id = (static_cast<std::uint64_t>(cycle) << 32) | k;
            // The source couples the shorter-wavelength photon into the
            // undelayed (signal) arm and the longer-wavelength photon into
            // the delayed (idler) arm.
            double omega_sig = std::max(pair.omega_s_rad_s, pair.omega_i_rad_s);
            double omega_idl = std::min(pair.omega_s_rad_s, pair.omega_i_rad_s);
            Emission es;
            es.t_ps = pair.t_emit_ps;
            es.lambda_nm = constants::lambda_nm_of_omega(omega_sig);
            es.pair_id = pair_id;
            es.lost_at_source = !keep_s;
            out.push_back(es);
            Emission ei;
            ei.t_ps = pair.t_emit_ps + s.arm_delay_ps;
            ei.lambda_nm = constants::lambda_nm_of_omega(omega_idl);
            ei.pair_id = pair_id;
            ei.lost_at_source = !keep_i;
            out.push_back(ei);
          }
        } else if constexpr (std::is_same_v<T, UniformSource>) {
          std::poisson_distribution<std::uint64_t> per_pixel(s.rate_hz_per_pixel * cycle_s);
          for (int p = 0; p < cfg.n_pixels; ++p) {
            std::uint64_t n = per_pixel(rng);
            for (std::uint64_t k = 0; k < n; ++k) {
              Emission e;
              e.t_ps = in_cycle(rng);
              e.pixel = static_cast<std::uint16_t>(p);
              out.push_back(e);
            }
          }
        } else {
          if (s.rep_rate_hz <= 0.0) return;
          double period_ps = 1e12 / s.rep_rate_hz;
          for (double t0 = 0.5 * period_ps; t0 < cfg.cycle_length_ps; t0 += period_ps) {
            double t = t0;
            if (s.pulse_sigma_ps > 0.0)
              t += std::normal_distribution<double>(0.0, s.pulse_sigma_ps)(rng);
            // The flash illuminates the whole array.
            for (int p = 0; p < cfg.n_pixels; ++p) {
              Emission e;
              e.t_ps = t;
              e.pixel = static_cast<std::uint16_t>(p);
              out.push_back(e);
            }
          }
        }
      },
      source);
}

} // namespace

CycleData apply_detector(std::uint32_t cycle_index, const std::vector<Emission>& emissions,
                         const SensorConfig& cfg, const DetectorEffects& effects,
                         const Dispersion& disp, std::uint64_t seed, SimSummary& summary,
                         const SimOptions& opts) {
  cfg.validate();
  effects.validate(cfg);

  const OffsetTable offsets_default = OffsetTable::zeros(cfg.n_pixels);
  const OffsetTable& offsets = effects.true_offsets ? *effects.true_offsets : offsets_default;
  TdcCalibration dnl_default;
  if (!effects.true_dnl) dnl_default = TdcCalibration::identity(cfg);
  const TdcCalibration& dnl = effects.true_dnl ? *effects.true_dnl : dnl_default;

  CycleData data;
  data.cycle_index = cycle_index;
  const double cycle_base_ps = static_cast<double>(cycle_index) * cfg.cycle_length_ps;

  // Thin, map to pixels, add jitter.
  auto det_rng = rng::substream(seed, cycle_index, rng::kDetectorChannel);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, std::max(effects.jitter_sigma_ps, 1e-300));

  std::vector<std::vector<Candidate>> per_pixel(cfg.n_pixels);
  if (opts.collect_truth) data.truth.reserve(emissions.size());

  for (const Emission& e : emissions) {
    ++summary.photons_emitted;
    std::int64_t truth_idx = kNoTruthIdx;
    if (opts.collect_truth) {
      TruthRecord tr;
      tr.emission_time_ps = cycle_base_ps + e.t_ps;
      tr.wavelength_nm = e.lambda_nm;
      tr.kind = TruthRecord::Kind::photon;
      tr.pair_id = e.pair_id;
      truth_idx = static_cast<std::int64_t>(data.truth.size());
      data.truth.push_back(tr);
    }
    if (e.lost_at_source) {
      ++summary.splitter_lost;
      continue;
    }

    bool detected = effects.pde >= 1.0 || unit(det_rng) < effects.pde;
    if (!detected) {
      ++summary.thinned_pde;
      continue;
    }
    std::optional<int> pixel;
    if (e.pixel) {
      pixel = *e.pixel;
      if (*pixel >= cfg.n_pixels) throw DomainError("apply_detector: emission pixel out of range");
    } else if (e.lambda_nm) {
      pixel = pixel_of_wavelength(*e.lambda_nm, disp, cfg);
    }
    if (!pixel) {
      ++summary.off_sensor;
      continue;
    }
    double arrival = e.t_ps;
    if (effects.jitter_sigma_ps > 0.0) arrival += jitter(det_rng);
    per_pixel[*pixel].push_back({arrival, truth_idx});
  }

  // Dark counts: one substream per (cycle, pixel).
  if (effects.dcr_hz_per_pixel > 0.0) {
    const double mean_darks = effects.dcr_hz_per_pixel * cfg.cycle_length_ps * 1e-12;
    for (int p = 0; p < cfg.n_pixels; ++p) {
      auto dark_rng = rng::substream(seed, cycle_index, rng::kDarkChannelBase + p);
      std::uint64_t n = std::poisson_distribution<std::uint64_t>(mean_darks)(dark_rng);
      std::uniform_real_distribution<double> in_cycle(0.0, cfg.cycle_length_ps);
      for (std::uint64_t k = 0; k < n; ++k)
        per_pixel[p].push_back({in_cycle(dark_rng), kDarkIdx});
    }
  }

  // Per pixel: order by arrival, stamp (offset + clamp), quantize, dead time,
  // buffer cap.
  const double period = cfg.coarse_period_ps;
  const std::uint32_t max_coarse = cfg.max_coarse();
  for (int p = 0; p < cfg.n_pixels; ++p) {
    auto& cands = per_pixel[p];
    if (cands.empty()) continue;
    std::sort(cands.begin(), cands.end(),
              [](const Candidate& a, const Candidate& b) { return a.arrival_ps < b.arrival_ps; });

    const int tdc = p / cfg.pixels_per_tdc();
    const double offset = offsets.offset_ps[p];
    double last_kept = -1e300;
    int kept = 0;
    bool dropped_any = false;

    for (const Candidate& c : cands) {
      double stamped = c.arrival_ps + offset;
      bool edge = false;
      if (stamped < 0.0) {
        stamped = 0.0;
        edge = true;
      } else if (stamped >= cfg.cycle_length_ps) {
        stamped = std::nextafter(cfg.cycle_length_ps, 0.0);
        edge = true;
      }
      double coarse_f = std::floor(stamped / period);
      double rem = stamped - coarse_f * period;
      if (rem < 0.0) {
        coarse_f -= 1.0;
        rem += period;
      } else if (rem >= period) {
        coarse_f += 1.0;
        rem -= period;
      }
      auto coarse = static_cast<std::uint32_t>(coarse_f);
      if (coarse > max_coarse) {
        coarse = max_coarse;
        rem = std::nextafter(period, 0.0);
        edge = true;
      }
      int fine = dnl.fine_of_remainder(tdc, rem);
      double decoded = coarse * period + dnl.bin_center(tdc, fine);

      if (effects.dead_time_ps > 0.0 && decoded - last_kept < effects.dead_time_ps) {
        ++summary.dead_time_dropped;
        continue;
      }
      if (kept >= effects.buffer_cap) {
        ++summary.buffer_dropped;
        dropped_any = true;
        continue;
      }
      last_kept = decoded;
      ++kept;
      if (edge) ++summary.edge_clamped;

      RawHit hit;
      hit.cycle_index = cycle_index;
      hit.pixel = static_cast<std::uint16_t>(p);
      hit.coarse = coarse;
      hit.fine = static_cast<std::uint8_t>(fine);
      hit.flags = edge ? RawHit::kEdgeFlag : 0;
      data.hits.push_back(hit);

      if (c.truth_idx == kDarkIdx) {
        ++summary.darks_detected;
        if (opts.collect_truth) {
          TruthRecord tr;
          tr.emission_time_ps = cycle_base_ps + c.arrival_ps;
          tr.kind = TruthRecord::Kind::dark;
          tr.pixel = static_cast<std::uint16_t>(p);
          data.truth.push_back(tr);
        }
      } else {
        ++summary.photons_detected;
        if (c.truth_idx >= 0)
          data.truth[static_cast<std::size_t>(c.truth_idx)].pixel =
              static_cast<std::uint16_t>(p);
      }
    }
    if (dropped_any && kept >= effects.buffer_cap) ++summary.saturated_pixel_cycles;
  }

  summary.raw_hits += data.hits.size();
  return data;
}

SimSummary simulate(const SensorConfig& cfg, const DetectorEffects& effects,
                    const SourceSpec& source, const Dispersion& disp, std::uint32_t n_cycles,
                    std::uint64_t seed, const CycleSink& sink, const SimOptions& opts) {
  cfg.validate();
  effects.validate(cfg);
  validate_source(source);
  disp.validate();

  SimSummary summary;
  summary.n_cycles = n_cycles;
  std::vector<Emission> emissions;
  for (std::uint32_t cycle = 0; cycle < n_cycles; ++cycle) {
    generate_cycle(source, cycle, cfg, seed, emissions);
    CycleData data = apply_detector(cycle, emissions, cfg, effects, disp, seed, summary, opts);
    if (sink) sink(std::move(data));
  }
  return summary;
}

SimResult simulate_collect(const SensorConfig& cfg, const DetectorEffects& effects,
                           const SourceSpec& source, const Dispersion& disp,
                           std::uint32_t n_cycles, std::uint64_t seed, const SimOptions& opts) {
  SimResult result;
  result.summary = simulate(
      cfg, effects, source, disp, n_cycles, seed,
      [&](CycleData&& data) {
        result.hits.insert(result.hits.end(), data.hits.begin(), data.hits.end());
        result.truth.insert(result.truth.end(), data.truth.begin(), data.truth.end());
      },
      opts);
  return result;
}

} // namespace pspd
