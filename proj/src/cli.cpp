#include "pspd/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>

#include "pspd/biphoton.hpp"
#include "pspd/calibration.hpp"
#include "pspd/config_json.hpp"
#include "pspd/constants.hpp"
#include "pspd/manifest.hpp"
#include "pspd/raw_io.hpp"
#include "pspd/rng.hpp"
#include "pspd/spectro.hpp"

namespace pspd {

namespace {

using nlohmann::json;

json to_json(const SimSummary& s) {
  return json{{"n_cycles", s.n_cycles},
              {"photons_emitted", s.photons_emitted},
              {"photons_detected", s.photons_detected},
              {"darks_detected", s.darks_detected},
              {"thinned_pde", s.thinned_pde},
              {"splitter_lost", s.splitter_lost},
              {"off_sensor", s.off_sensor},
              {"dead_time_dropped", s.dead_time_dropped},
              {"buffer_dropped", s.buffer_dropped},
              {"edge_clamped", s.edge_clamped},
              {"saturated_pixel_cycles", s.saturated_pixel_cycles},
              {"raw_hits", s.raw_hits}};
}

json to_json(const GaussianFit& f) {
  return json{{"amplitude", f.amplitude},       {"mean", f.mean},
              {"sigma", f.sigma},               {"baseline", f.baseline},
              {"amplitude_err", f.amplitude_err}, {"mean_err", f.mean_err},
              {"sigma_err", f.sigma_err},       {"baseline_err", f.baseline_err},
              {"chi2", f.chi2},                 {"dof", f.dof},
              {"converged", f.converged},       {"sigma_at_bound", f.sigma_at_bound}};
}

json to_json(const HupResult& r) {
  return json{{"delta_e_ev", r.delta_e_ev},
              {"delta_t_s", r.delta_t_s},
              {"product_ev_s", r.product_ev_s},
              {"ratio_to_hbar_over_2", r.ratio_to_hbar_over_2}};
}

void write_histogram_csv(const std::string& path, const Histogram1D& h) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open " + path + " for writing");
  std::fputs("bin_low,bin_high,count\n", f);
  for (int i = 0; i < h.n_bins(); ++i)
    std::fprintf(f, "%.17g,%.17g,%llu\n", h.bin_low(i), h.bin_high(i),
                 static_cast<unsigned long long>(h.counts[i]));
  if (std::fclose(f) != 0) throw IoError("failed closing " + path);
}

void write_spectrum_csv(const std::string& path, const Spectrum& s) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open " + path + " for writing");
  std::fputs("bin_low,bin_high,count\n", f);
  for (int p = 0; p < s.n_pixels(); ++p)
    std::fprintf(f, "%.17g,%.17g,%llu\n", p - 0.5, p + 0.5,
                 static_cast<unsigned long long>(s.counts[p]));
  if (std::fclose(f) != 0) throw IoError("failed closing " + path);
}

void write_hist2d_csv(const std::string& path, const Hist2D& h) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open " + path + " for writing");
  std::fputs("lambda_a_low,lambda_a_high,lambda_b_low,lambda_b_high,count\n", f);
  for (int ia = 0; ia < h.n_a; ++ia)
    for (int ib = 0; ib < h.n_b; ++ib) {
      std::uint64_t c = h.at(ia, ib);
      if (!c) continue;
      std::fprintf(f, "%.17g,%.17g,%.17g,%.17g,%llu\n", h.a_axis_nm[ia],
                   ia + 1 < h.n_a ? h.a_axis_nm[ia + 1] : h.a_axis_nm[ia],
                   h.b_axis_nm[ib], ib + 1 < h.n_b ? h.b_axis_nm[ib + 1] : h.b_axis_nm[ib],
                   static_cast<unsigned long long>(c));
    }
  if (std::fclose(f) != 0) throw IoError("failed closing " + path);
}

// Groups a raw stream into whole cycles (files are cycle-ordered).
class CycleGrouper {
public:
  using Handler = std::function<void(std::uint32_t, std::vector<RawHit>&)>;

  explicit CycleGrouper(Handler handler) : handler_(std::move(handler)) {}

  void feed(const RawHit& h) {
    if (!current_.empty() && h.cycle_index != cycle_) flush();
    cycle_ = h.cycle_index;
    current_.push_back(h);
  }
  void finish() {
    if (!current_.empty()) flush();
  }

private:
  void flush() {
    handler_(cycle_, current_);
    current_.clear();
  }

  Handler handler_;
  std::vector<RawHit> current_;
  std::uint32_t cycle_ = 0;
};

// Streams a raw file cycle by cycle as time-sorted calibrated hits.
void for_each_decoded_cycle(RawReader& reader, const TdcCalibration& cal,
                            const OffsetTable& offsets,
                            const std::function<void(std::vector<CalibratedHit>&)>& fn) {
  std::vector<CalibratedHit> decoded;
  CycleGrouper grouper([&](std::uint32_t, std::vector<RawHit>& hits) {
    decoded.clear();
    decoded.reserve(hits.size());
    for (const RawHit& h : hits) decoded.push_back(decode_calibrated(h, reader.config(), cal, offsets));
    std::sort(decoded.begin(), decoded.end(),
              [](const CalibratedHit& a, const CalibratedHit& b) { return a.time_ps < b.time_ps; });
    fn(decoded);
  });
  std::vector<RawHit> chunk;
  while (true) {
    chunk.clear();
    if (reader.read_chunk(chunk, 1 << 16) == 0) break;
    for (const RawHit& h : chunk) grouper.feed(h);
  }
  grouper.finish();
}

void load_decode_tables(const std::string& calibration_path, const SensorConfig& cfg,
                        TdcCalibration& cal, OffsetTable& offsets) {
  cal = TdcCalibration::identity(cfg);
  offsets = OffsetTable::zeros(cfg.n_pixels);
  if (calibration_path.empty()) return;
  CalibrationDoc doc = load_calibration(calibration_path);
  if (doc.tdc) {
    if (!doc.tdc->matches(cfg))
      throw ConfigError(calibration_path + ": TDC calibration does not match the input file");
    cal = *doc.tdc;
  }
  if (doc.offsets) {
    if (doc.offsets->size() != cfg.n_pixels)
      throw ConfigError(calibration_path + ": offset table does not match the input file");
    offsets = *doc.offsets;
  }
}

void emit(const json& j, const std::string& format, const std::string& output_path) {
  std::string text;
  if (format == "csv") {
    // Flat single-row CSV of the top-level keys.
    std::string header, row;
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!header.empty()) {
        header += ',';
        row += ',';
      }
      header += it.key();
      if (it.value().is_number_float()) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", it.value().get<double>());
        row += buf;
      } else {
        row += it.value().dump();
      }
    }
    text = header + "\n" + row + "\n";
  } else {
    text = j.dump(2) + "\n";
  }
  std::cout << text;
  if (!output_path.empty()) {
    std::FILE* f = std::fopen(output_path.c_str(), "wb");
    if (!f) throw IoError("cannot open " + output_path + " for writing");
    std::fwrite(text.data(), 1, text.size(), f);
    if (std::fclose(f) != 0) throw IoError("failed closing " + output_path);
  }
}

struct CommandContext {
  std::vector<std::string> args; // full command line after the program name
};

void finalize_manifest(const CommandContext& ctx, const std::string& subcommand,
                       std::uint64_t seed, bool has_seed,
                       const std::vector<std::string>& inputs,
                       const std::vector<std::string>& outputs) {
  if (outputs.empty()) return;
  RunManifest m;
  m.subcommand = subcommand;
  m.args = ctx.args;
  m.seed = seed;
  m.has_seed = has_seed;
  for (const auto& p : inputs) m.inputs.emplace_back(p, digest_file(p));
  for (const auto& p : outputs) m.outputs.emplace_back(p, digest_file(p));
  write_manifest(outputs.front() + ".manifest.json", m);
}

// ---- simulate ----------------------------------------------------------

struct SimulateArgs {
  std::string config_path;
  std::string output;
  std::string truth;
  std::uint32_t cycles = 1;
  std::uint64_t seed = 0;
};

int cmd_simulate(const SimulateArgs& a, const CommandContext& ctx) {
  json config_json = load_json_file(a.config_path);
  SimConfig config = sim_config_from_json(config_json);

  json provenance{{"tool_version", kToolVersion},
                  {"seed", a.seed},
                  {"n_cycles", a.cycles},
                  {"source_type", source_type_name(config.source)},
                  {"sim_config", config_json}};
  RawWriter writer(a.output, config.sensor, provenance);
  std::unique_ptr<TruthCsvWriter> truth;
  if (!a.truth.empty()) truth = std::make_unique<TruthCsvWriter>(a.truth);

  SimOptions opts;
  opts.collect_truth = truth != nullptr;
  SimSummary summary = simulate(
      config.sensor, config.effects, config.source, config.dispersion, a.cycles, a.seed,
      [&](CycleData&& data) {
        writer.write(data.hits);
        if (truth) truth->write(data.truth);
      },
      opts);
  writer.close();
  if (truth) truth->close();

  std::vector<std::string> outputs{a.output};
  if (!a.truth.empty()) outputs.push_back(a.truth);
  finalize_manifest(ctx, "simulate", a.seed, true, {a.config_path}, outputs);
  std::cout << to_json(summary).dump(2) << '\n';
  return 0;
}

// ---- calibrate-tdc ------------------------------------------------------

struct CalibrateTdcArgs {
  std::string input;
  std::string output;
  std::uint64_t min_counts = 100000;
};

int cmd_calibrate_tdc(const CalibrateTdcArgs& a, const CommandContext& ctx) {
  RawReader reader(a.input);
  DensityHistogram hist(reader.config());
  std::vector<RawHit> chunk;
  while (true) {
    chunk.clear();
    if (reader.read_chunk(chunk, 1 << 16) == 0) break;
    for (const RawHit& h : chunk) hist.add(h, reader.config());
  }
  if (hist.total == 0)
    throw InsufficientStatsError("calibrate-tdc: insufficient statistics (empty input)");

  TdcFitReport report = fit_tdc_calibration(hist, reader.config(), a.min_counts);
  CalibrationDoc doc;
  doc.tdc = report.calibration;
  doc.provenance = json{{"input", a.input},
                        {"input_digest", digest_file(a.input)},
                        {"total_counts", hist.total},
                        {"min_counts_per_tdc", a.min_counts},
                        {"zero_width_bins", report.warnings.size()}};
  save_calibration(a.output, doc);
  finalize_manifest(ctx, "calibrate-tdc", 0, false, {a.input}, {a.output});

  for (const std::string& w : report.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << json{{"total_counts", hist.total}, {"warnings", report.warnings.size()}}.dump(2)
            << '\n';
  return 0;
}

// ---- calibrate-offset ---------------------------------------------------

struct CalibrateOffsetArgs {
  std::string input;
  std::string tdc_cal;
  std::string output;
  double window_ns = 5.0;
  std::uint64_t min_pair_count = 30;
};

int cmd_calibrate_offset(const CalibrateOffsetArgs& a, const CommandContext& ctx) {
  RawReader reader(a.input);
  const SensorConfig& cfg = reader.config();
  TdcCalibration cal;
  OffsetTable zero;
  load_decode_tables(a.tdc_cal, cfg, cal, zero);
  zero = OffsetTable::zeros(cfg.n_pixels); // offsets are what we solve for

  PairDifferenceMatrix matrix(cfg.n_pixels);
  const double window_ps = a.window_ns * 1000.0;
  for_each_decoded_cycle(reader, cal, zero, [&](std::vector<CalibratedHit>& hits) {
    matrix.add_cycle(hits, window_ps);
  });

  SolveOffsetsOptions opts;
  opts.min_pair_count = a.min_pair_count;
  OffsetTable offsets = solve_offsets(matrix, cfg, opts);

  CalibrationDoc doc;
  doc.offsets = offsets;
  if (!a.tdc_cal.empty()) doc.tdc = cal;
  doc.provenance = json{{"input", a.input},
                        {"input_digest", digest_file(a.input)},
                        {"window_ns", a.window_ns},
                        {"min_pair_count", a.min_pair_count}};
  save_calibration(a.output, doc);
  finalize_manifest(ctx, "calibrate-offset", 0, false, {a.input}, {a.output});

  double max_sigma = 0.0;
  for (double s : offsets.sigma_ps) max_sigma = std::max(max_sigma, s);
  std::cout << json{{"n_pixels", cfg.n_pixels}, {"max_offset_sigma_ps", max_sigma}}.dump(2)
            << '\n';
  return 0;
}

// ---- spectrum -----------------------------------------------------------

struct SpectrumArgs {
  std::string input;
  std::string output;
  std::string fits_out;
  std::string cal_out;
  bool fit_peaks = false;
  double min_peak_counts = 100.0;
  int peak_halfwidth = 5;
  std::vector<double> ref_lines;
  double guess_a = 0.0;
  double guess_b = 0.11;
  double match_tolerance_nm = 0.3;
};

int cmd_spectrum(const SpectrumArgs& a, const CommandContext& ctx) {
  RawReader reader(a.input);
  Spectrum spec(reader.config());
  std::vector<RawHit> chunk;
  std::uint32_t max_cycle = 0;
  while (true) {
    chunk.clear();
    if (reader.read_chunk(chunk, 1 << 16) == 0) break;
    for (const RawHit& h : chunk) {
      spec.add(h.pixel);
      max_cycle = std::max(max_cycle, h.cycle_index);
    }
  }
  spec.n_cycles = spec.total ? max_cycle + 1 : 0;
  spec.exposure_s = spec.n_cycles * reader.config().cycle_length_ps * 1e-12;

  std::vector<std::string> outputs;
  if (!a.output.empty()) {
    write_spectrum_csv(a.output, spec);
    outputs.push_back(a.output);
  }

  json out{{"total_counts", spec.total}, {"n_cycles", spec.n_cycles}};
  if (a.fit_peaks || !a.ref_lines.empty()) {
    std::vector<int> candidates = find_peak_candidates(spec, a.min_peak_counts);
    std::vector<GaussianFit> fits;
    json fits_json = json::array();
    for (int p : candidates) {
      try {
        GaussianFit fit = fit_gaussian_peak(spec, p, a.peak_halfwidth);
        fits.push_back(fit);
        fits_json.push_back(to_json(fit));
      } catch (const FitError&) {
        // skip unfittable candidates
      }
    }
    out["n_peaks"] = fits.size();
    if (!a.fits_out.empty()) {
      save_json_file(a.fits_out, fits_json);
      outputs.push_back(a.fits_out);
    }
    if (!a.ref_lines.empty()) {
      WavelengthCalOptions wopts;
      wopts.guess_a_nm = a.guess_a;
      wopts.guess_b_nm_per_pixel = a.guess_b;
      wopts.match_tolerance_nm = a.match_tolerance_nm;
      SpectralCalibration cal = calibrate_wavelength(fits, a.ref_lines, wopts);
      json matches = json::array();
      for (const auto& m : cal.matches)
        matches.push_back(json{{"pixel", m.pixel},
                               {"pixel_err", m.pixel_err},
                               {"reference_nm", m.reference_nm},
                               {"fitted_nm", m.fitted_nm},
                               {"residual_nm", m.residual_nm}});
      json cal_json{{"a_nm", cal.a_nm},
                    {"b_nm_per_pixel", cal.b_nm_per_pixel},
                    {"residual_rms_nm", cal.residual_rms_nm},
                    {"matches", matches}};
      out["spectral_calibration"] = cal_json;
      if (!a.cal_out.empty()) {
        save_json_file(a.cal_out, cal_json);
        outputs.push_back(a.cal_out);
      }
    }
  }
  finalize_manifest(ctx, "spectrum", 0, false, {a.input}, outputs);
  std::cout << out.dump(2) << '\n';
  return 0;
}

// ---- coincidence --------------------------------------------------------

struct CoincidenceArgs {
  std::string input;
  std::string output;
  std::string fit_out;
  std::string calibration;
  std::string group_a = "0-127";
  std::string group_b = "128-255";
  double window_ns = 20.0;
  double bin_width_ps = 2500.0 / 140.0;
  bool fit = false;
  int fit_halfwidth_bins = 25;
};

int cmd_coincidence(const CoincidenceArgs& a, const CommandContext& ctx) {
  RawReader reader(a.input);
  const SensorConfig& cfg = reader.config();
  TdcCalibration cal;
  OffsetTable offsets;
  load_decode_tables(a.calibration, cfg, cal, offsets);

  CoincidenceOptions copts;
  copts.hist_bin_width_ps = a.bin_width_ps;
  copts.collect_pairs = false;
  CoincidenceScanner scanner(a.window_ns * 1000.0, PixelSet::parse(a.group_a, cfg.n_pixels),
                             PixelSet::parse(a.group_b, cfg.n_pixels), copts);
  for_each_decoded_cycle(reader, cal, offsets, [&](std::vector<CalibratedHit>& hits) {
    scanner.feed_cycle(hits);
  });
  CoincidenceResult result = scanner.take();

  std::vector<std::string> outputs;
  if (!a.output.empty()) {
    write_histogram_csv(a.output, result.dt_hist);
    outputs.push_back(a.output);
  }
  json out{{"n_pairs", result.n_pairs}};
  if (a.fit || !a.fit_out.empty()) {
    PairTimeResolutionOptions popts;
    popts.fit_halfwidth_bins = a.fit_halfwidth_bins;
    PairTimeResolution res = pair_time_resolution(result.dt_hist, popts);
    json fit_json{{"center_ps", res.center_ps},
                  {"sigma_pair_ps", res.sigma_pair_ps},
                  {"sigma_single_ps", res.sigma_single_ps},
                  {"fit", to_json(res.fit)}};
    out["resolution"] = fit_json;
    if (!a.fit_out.empty()) {
      save_json_file(a.fit_out, fit_json);
      outputs.push_back(a.fit_out);
    }
  }
  finalize_manifest(ctx, "coincidence", 0, false, {a.input}, outputs);
  std::cout << out.dump(2) << '\n';
  return 0;
}

// ---- anticorr -----------------------------------------------------------

struct AnticorrArgs {
  std::string input;
  std::string output;
  std::string calibration;
  std::string spectral_cal_file;
  std::vector<double> spectral_cal; // a_nm, b_nm_per_pixel
  std::string group_a = "0-127";
  std::string group_b = "128-255";
  double window_ns = 20.0;
  double pump_nm = 405.0;
};

int cmd_anticorr(const AnticorrArgs& a, const CommandContext& ctx) {
  RawReader reader(a.input);
  const SensorConfig& cfg = reader.config();
  TdcCalibration cal;
  OffsetTable offsets;
  load_decode_tables(a.calibration, cfg, cal, offsets);

  SpectralCalibration scal;
  if (!a.spectral_cal_file.empty()) {
    json j = load_json_file(a.spectral_cal_file);
    scal.a_nm = j.at("a_nm").get<double>();
    scal.b_nm_per_pixel = j.at("b_nm_per_pixel").get<double>();
  } else if (a.spectral_cal.size() == 2) {
    scal.a_nm = a.spectral_cal[0];
    scal.b_nm_per_pixel = a.spectral_cal[1];
  } else {
    throw DomainError("anticorr: provide --spectral-cal a,b or --spectral-cal-file");
  }

  CoincidenceScanner scanner(a.window_ns * 1000.0, PixelSet::parse(a.group_a, cfg.n_pixels),
                             PixelSet::parse(a.group_b, cfg.n_pixels), {});
  for_each_decoded_cycle(reader, cal, offsets, [&](std::vector<CalibratedHit>& hits) {
    scanner.feed_cycle(hits);
  });
  CoincidenceResult pairs = scanner.take();
  AnticorrResult result = anticorrelation(pairs.pairs, scal, a.pump_nm);

  std::vector<std::string> outputs;
  if (!a.output.empty()) {
    write_hist2d_csv(a.output, result.hist);
    outputs.push_back(a.output);
  }
  finalize_manifest(ctx, "anticorr", 0, false, {a.input}, outputs);
  std::cout << json{{"slope", result.slope},
                    {"intercept_rad_s", result.intercept_rad_s},
                    {"conservation_residual_rms_rad_s", result.conservation_residual_rms_rad_s},
                    {"n_pairs", result.n_pairs}}
                   .dump(2)
            << '\n';
  return 0;
}

// ---- hup ----------------------------------------------------------------

struct HupArgs {
  double lambda_nm = 0.0;
  double dlambda_nm = 0.0;
  double dt_ps = 0.0;
  std::string format = "json";
  std::string output;
};

int cmd_hup(const HupArgs& a, const CommandContext& ctx) {
  HupResult r = hup_benchmark(a.lambda_nm, a.dlambda_nm, a.dt_ps * 1e-12);
  emit(to_json(r), a.format, a.output);
  if (!a.output.empty()) finalize_manifest(ctx, "hup", 0, false, {}, {a.output});
  return 0;
}

// ---- model-sweep --------------------------------------------------------

struct ModelSweepArgs {
  double pump_center_nm = 405.0;
  std::vector<double> pump_widths;
  std::vector<double> filter_widths;
  bool numeric = false;
  std::string output;
};

int cmd_model_sweep(const ModelSweepArgs& a, const CommandContext& ctx) {
  if (a.pump_widths.empty() || a.filter_widths.empty())
    throw DomainError("model-sweep: provide --pump-widths and --filter-widths");
  std::FILE* f = nullptr;
  if (!a.output.empty()) {
    f = std::fopen(a.output.c_str(), "wb");
    if (!f) throw IoError("cannot open " + a.output + " for writing");
  }
  auto emit_line = [&](const std::string& line) {
    if (f) std::fputs(line.c_str(), f);
    else std::fputs(line.c_str(), stdout);
  };
  emit_line("delta_omega_p,delta_omega_f,sigma_e_ev,sigma_dt_s,product_ev_s,ratio,numeric_ratio\n");
  const double omega_p = constants::omega_of_lambda_nm(a.pump_center_nm);
  char buf[256];
  for (double dp : a.pump_widths)
    for (double df : a.filter_widths) {
      BiphotonParams p{omega_p, dp, df};
      UncertaintyProduct up = uncertainty_product(p);
      double se = energy_sigma_ev(p);
      double st = dt_sigma_s(p);
      if (a.numeric) {
        double numeric_ratio = se * numeric_dt_sigma_s(p) / constants::hbar_ev_s;
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", dp, df,
                      se, st, up.product_ev_s, up.ratio_to_hbar, numeric_ratio);
      } else {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,\n", dp, df, se,
                      st, up.product_ev_s, up.ratio_to_hbar);
      }
      emit_line(buf);
    }
  if (f && std::fclose(f) != 0) throw IoError("failed closing " + a.output);
  if (!a.output.empty()) finalize_manifest(ctx, "model-sweep", 0, false, {}, {a.output});
  return 0;
}

// ---- bench --------------------------------------------------------------

struct BenchArgs {
  std::uint64_t records = 100000000;
  std::uint64_t hits_per_cycle = 250;
  std::string file;
  bool keep = false;
  double window_ns = 20.0;
  std::uint64_t seed = 1;
};

int cmd_bench(const BenchArgs& a, const CommandContext&) {
  std::string path = a.file.empty() ? "pspd_bench.pspd" : a.file;
  SensorConfig cfg;

  using clock = std::chrono::steady_clock;
  auto t0 = clock::now();
  {
    // Synthetic stream: hits_per_cycle hits per cycle, pixels round-robin,
    // times spread over the cycle with seeded spray.
    RawWriter writer(path, cfg, json{{"generator", "bench"}, {"seed", a.seed}});
    std::mt19937_64 gen(rng::mix(a.seed));
    const std::uint32_t max_coarse = cfg.max_coarse();
    std::vector<RawHit> block;
    block.reserve(a.hits_per_cycle);
    std::uint64_t written = 0;
    for (std::uint32_t cycle = 0; written < a.records; ++cycle) {
      block.clear();
      for (std::uint64_t k = 0; k < a.hits_per_cycle && written + block.size() < a.records; ++k) {
        RawHit h;
        h.cycle_index = cycle;
        h.pixel = static_cast<std::uint16_t>((k * 7919 + cycle) % cfg.n_pixels);
        h.coarse = static_cast<std::uint32_t>(gen() % (max_coarse + 1));
        h.fine = static_cast<std::uint8_t>(gen() % cfg.fine_bins_per_tdc);
        block.push_back(h);
      }
      std::sort(block.begin(), block.end(), raw_hit_order);
      writer.write(block);
      written += block.size();
    }
    writer.close();
  }
  auto t1 = clock::now();

  // Timed section: streaming read + nominal decode + coincidence scan.
  PixelSet group_a = PixelSet::range(0, cfg.n_pixels / 2 - 1, cfg.n_pixels);
  PixelSet group_b = PixelSet::range(cfg.n_pixels / 2, cfg.n_pixels - 1, cfg.n_pixels);
  CoincidenceOptions copts;
  copts.collect_pairs = false;
  CoincidenceScanner scanner(a.window_ns * 1000.0, group_a, group_b, copts);

  std::uint64_t n_read = 0;
  {
    RawReader reader(path);
    std::vector<RawHit> chunk;
    std::vector<CalibratedHit> decoded;
    CycleGrouper grouper([&](std::uint32_t, std::vector<RawHit>& hits) {
      decoded.clear();
      decoded.reserve(hits.size());
      for (const RawHit& h : hits) {
        CalibratedHit c;
        c.cycle_index = h.cycle_index;
        c.pixel = h.pixel;
        c.time_ps = h.coarse * cfg.coarse_period_ps + (h.fine + 0.5) * cfg.nominal_lsb_ps;
        decoded.push_back(c);
      }
      std::sort(decoded.begin(), decoded.end(),
                [](const CalibratedHit& x, const CalibratedHit& y) { return x.time_ps < y.time_ps; });
      scanner.feed_cycle(decoded);
    });
    while (true) {
      chunk.clear();
      if (reader.read_chunk(chunk, 1 << 16) == 0) break;
      n_read += chunk.size();
      for (const RawHit& h : chunk) grouper.feed(h);
    }
    grouper.finish();
  }
  auto t2 = clock::now();

  if (!a.keep) std::remove(path.c_str());

  double gen_s = std::chrono::duration<double>(t1 - t0).count();
  double scan_s = std::chrono::duration<double>(t2 - t1).count();
  std::cout << json{{"records", n_read},
                    {"coincidence_pairs", scanner.n_pairs()},
                    {"generate_seconds", gen_s},
                    {"read_scan_seconds", scan_s},
                    {"hits_per_second", n_read / scan_s}}
                   .dump(2)
            << '\n';
  return 0;
}

// ---- rerun --------------------------------------------------------------

struct RerunArgs {
  std::string manifest;
  bool check = false;
};

int cmd_rerun(const RerunArgs& a, const CommandContext&) {
  RunManifest m = read_manifest(a.manifest);
  int rc = run_cli(m.args);
  if (rc != 0) return rc;
  if (a.check) {
    for (const auto& [path, digest] : m.outputs) {
      std::string now = digest_file(path);
      if (now != digest) {
        std::cerr << "rerun: digest mismatch for " << path << ": recorded " << digest
                  << ", got " << now << '\n';
        return 1;
      }
    }
    std::cerr << "rerun: all " << m.outputs.size() << " output digest(s) match\n";
  }
  return 0;
}

} // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"pspd: simulator, calibration and analysis toolkit for a "
               "single-photon line spectrometer"};
  app.require_subcommand(1);

  CommandContext ctx;
  ctx.args = args;
  std::function<int()> action;

  // simulate
  auto sim_args = std::make_shared<SimulateArgs>();
  {
    CLI::App* c = app.add_subcommand("simulate", "Generate a raw timestamp stream");
    c->add_option("--config", sim_args->config_path, "Simulation config JSON")->required();
    c->add_option("--cycles", sim_args->cycles, "Number of acquisition cycles")->required();
    c->add_option("--seed", sim_args->seed, "Master random seed")->default_val(0);
    c->add_option("--output", sim_args->output, "Output raw file")->required();
    c->add_option("--truth", sim_args->truth, "Truth sidecar CSV");
    c->callback([&action, sim_args, &ctx]() {
      action = [sim_args, &ctx]() { return cmd_simulate(*sim_args, ctx); };
    });
  }

  // calibrate-tdc
  auto tdc_args = std::make_shared<CalibrateTdcArgs>();
  {
    CLI::App* c = app.add_subcommand("calibrate-tdc", "Code-density TDC calibration");
    c->add_option("--input", tdc_args->input, "Raw file from uniform illumination")->required();
    c->add_option("--output", tdc_args->output, "Calibration JSON")->required();
    c->add_option("--min-counts", tdc_args->min_counts, "Minimum counts per TDC")
        ->default_val(100000);
    c->callback([&action, tdc_args, &ctx]() {
      action = [tdc_args, &ctx]() { return cmd_calibrate_tdc(*tdc_args, ctx); };
    });
  }

  // calibrate-offset
  auto off_args = std::make_shared<CalibrateOffsetArgs>();
  {
    CLI::App* c = app.add_subcommand("calibrate-offset", "Per-pixel offset calibration");
    c->add_option("--input", off_args->input, "Raw file from pulsed-laser flashes")->required();
    c->add_option("--tdc-cal", off_args->tdc_cal, "TDC calibration JSON (applied first)");
    c->add_option("--output", off_args->output, "Calibration JSON")->required();
    c->add_option("--window-ns", off_args->window_ns, "Same-pulse pairing window")
        ->default_val(5.0);
    c->add_option("--min-pair-count", off_args->min_pair_count,
                  "Minimum co-detections per pixel pair")
        ->default_val(30);
    c->callback([&action, off_args, &ctx]() {
      action = [off_args, &ctx]() { return cmd_calibrate_offset(*off_args, ctx); };
    });
  }

  // spectrum
  auto spec_args = std::make_shared<SpectrumArgs>();
  {
    CLI::App* c = app.add_subcommand("spectrum", "Per-pixel spectrum, peak fits, "
                                                 "wavelength calibration");
    c->add_option("--input", spec_args->input, "Raw file")->required();
    c->add_option("--output", spec_args->output, "Spectrum CSV");
    c->add_flag("--fit-peaks", spec_args->fit_peaks, "Fit Gaussians to detected peaks");
    c->add_option("--min-peak-counts", spec_args->min_peak_counts,
                  "Candidate threshold in counts")
        ->default_val(100.0);
    c->add_option("--peak-halfwidth", spec_args->peak_halfwidth,
                  "Fit window half-width in pixels")
        ->default_val(5);
    c->add_option("--fits-out", spec_args->fits_out, "Peak fit JSON output");
    c->add_option("--ref-lines", spec_args->ref_lines,
                  "Reference line wavelengths [nm] for calibration")
        ->delimiter(',');
    c->add_option("--guess-a", spec_args->guess_a, "Provisional wavelength at pixel 0 [nm]");
    c->add_option("--guess-b", spec_args->guess_b, "Provisional dispersion [nm/pixel]")
        ->default_val(0.11);
    c->add_option("--match-tolerance-nm", spec_args->match_tolerance_nm,
                  "Line matching tolerance")
        ->default_val(0.3);
    c->add_option("--cal-out", spec_args->cal_out, "Spectral calibration JSON output");
    c->callback([&action, spec_args, &ctx]() {
      action = [spec_args, &ctx]() { return cmd_spectrum(*spec_args, ctx); };
    });
  }

  // coincidence
  auto coin_args = std::make_shared<CoincidenceArgs>();
  {
    CLI::App* c = app.add_subcommand("coincidence", "Two-group coincidence histogram and "
                                                    "temporal resolution fit");
    c->add_option("--input", coin_args->input, "Raw file")->required();
    c->add_option("--group-a", coin_args->group_a, "Signal-arm pixels, e.g. 0-127");
    c->add_option("--group-b", coin_args->group_b, "Idler-arm pixels, e.g. 128-255");
    c->add_option("--window-ns", coin_args->window_ns, "Coincidence window")->default_val(20.0);
    c->add_option("--bin-width-ps", coin_args->bin_width_ps, "dt histogram bin width")
        ->default_val(2500.0 / 140.0);
    c->add_option("--calibration", coin_args->calibration, "Calibration JSON (TDC + offsets)");
    c->add_option("--output", coin_args->output, "dt histogram CSV");
    c->add_flag("--fit", coin_args->fit, "Fit the dt peak");
    c->add_option("--fit-out", coin_args->fit_out, "Fit JSON output");
    c->add_option("--fit-halfwidth-bins", coin_args->fit_halfwidth_bins,
                  "Fit window around the peak")
        ->default_val(25);
    c->callback([&action, coin_args, &ctx]() {
      action = [coin_args, &ctx]() { return cmd_coincidence(*coin_args, ctx); };
    });
  }

  // anticorr
  auto anti_args = std::make_shared<AnticorrArgs>();
  {
    CLI::App* c = app.add_subcommand("anticorr", "Wavelength anti-correlation of coincident "
                                                 "pairs");
    c->add_option("--input", anti_args->input, "Raw file")->required();
    c->add_option("--group-a", anti_args->group_a, "Signal-arm pixels");
    c->add_option("--group-b", anti_args->group_b, "Idler-arm pixels");
    c->add_option("--window-ns", anti_args->window_ns, "Coincidence window")->default_val(20.0);
    c->add_option("--pump-nm", anti_args->pump_nm, "Pump wavelength [nm]")->default_val(405.0);
    c->add_option("--spectral-cal", anti_args->spectral_cal,
                  "Spectral calibration as a_nm,b_nm_per_pixel")
        ->delimiter(',');
    c->add_option("--spectral-cal-file", anti_args->spectral_cal_file,
                  "Spectral calibration JSON");
    c->add_option("--calibration", anti_args->calibration, "Calibration JSON (TDC + offsets)");
    c->add_option("--output", anti_args->output, "2-D wavelength histogram CSV");
    c->callback([&action, anti_args, &ctx]() {
      action = [anti_args, &ctx]() { return cmd_anticorr(*anti_args, ctx); };
    });
  }

  // hup
  auto hup_args = std::make_shared<HupArgs>();
  {
    CLI::App* c = app.add_subcommand("hup", "Energy-time uncertainty benchmark");
    c->add_option("--lambda-nm", hup_args->lambda_nm, "Center wavelength [nm]")->required();
    c->add_option("--dlambda-nm", hup_args->dlambda_nm, "Wavelength uncertainty [nm]")
        ->required();
    c->add_option("--dt-ps", hup_args->dt_ps, "Time uncertainty [ps]")->required();
    c->add_option("--format", hup_args->format, "json or csv")
        ->default_val("json")
        ->check(CLI::IsMember({"json", "csv"}));
    c->add_option("--output", hup_args->output, "Also write the result to this file");
    c->callback([&action, hup_args, &ctx]() {
      action = [hup_args, &ctx]() { return cmd_hup(*hup_args, ctx); };
    });
  }

  // model-sweep
  auto sweep_args = std::make_shared<ModelSweepArgs>();
  {
    CLI::App* c = app.add_subcommand("model-sweep", "Biphoton model sweep over pump/filter "
                                                    "widths");
    c->add_option("--pump-center-nm", sweep_args->pump_center_nm, "Pump wavelength [nm]")
        ->default_val(405.0);
    c->add_option("--pump-widths", sweep_args->pump_widths, "Pump widths [rad/s]")
        ->delimiter(',')
        ->required();
    c->add_option("--filter-widths", sweep_args->filter_widths, "Filter widths [rad/s]")
        ->delimiter(',')
        ->required();
    c->add_flag("--numeric", sweep_args->numeric, "Also run the numerical Fourier oracle");
    c->add_option("--output", sweep_args->output, "Sweep CSV (stdout when omitted)");
    c->callback([&action, sweep_args, &ctx]() {
      action = [sweep_args, &ctx]() { return cmd_model_sweep(*sweep_args, ctx); };
    });
  }

  // bench
  auto bench_args = std::make_shared<BenchArgs>();
  {
    CLI::App* c = app.add_subcommand("bench", "Throughput benchmark: read + coincidence scan");
    c->add_option("--records", bench_args->records, "Record count")->default_val(100000000);
    c->add_option("--hits-per-cycle", bench_args->hits_per_cycle, "Hits per cycle")
        ->default_val(250);
    c->add_option("--file", bench_args->file, "Benchmark file path");
    c->add_flag("--keep", bench_args->keep, "Keep the benchmark file");
    c->add_option("--window-ns", bench_args->window_ns, "Coincidence window")->default_val(20.0);
    c->add_option("--seed", bench_args->seed, "Generator seed")->default_val(1);
    c->callback([&action, bench_args, &ctx]() {
      action = [bench_args, &ctx]() { return cmd_bench(*bench_args, ctx); };
    });
  }

  // rerun
  auto rerun_args = std::make_shared<RerunArgs>();
  {
    CLI::App* c = app.add_subcommand("rerun", "Re-execute a run from its manifest");
    c->add_option("--manifest", rerun_args->manifest, "Manifest JSON")->required();
    c->add_flag("--check", rerun_args->check, "Verify output digests afterwards");
    c->callback([&action, rerun_args, &ctx]() {
      action = [rerun_args, &ctx]() { return cmd_rerun(*rerun_args, ctx); };
    });
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend()); // CLI11 convention
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << '\n' << app.help();
    return 2;
  }

  try {
    return action ? action() : 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

} // namespace pspd
