#include "pspd/config_json.hpp"

#include <fstream>
#include <random>

#include "pspd/rng.hpp"

namespace pspd {

namespace {

template <typename T>
void get_if_present(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace

json to_json(const SensorConfig& cfg) {
  return json{{"n_pixels", cfg.n_pixels},
              {"n_tdcs", cfg.n_tdcs},
              {"fine_bins_per_tdc", cfg.fine_bins_per_tdc},
              {"coarse_period_ps", cfg.coarse_period_ps},
              {"nominal_lsb_ps", cfg.nominal_lsb_ps},
              {"cycle_length_ps", cfg.cycle_length_ps},
              {"dead_time_ps", cfg.dead_time_ps},
              {"buffer_cap_per_pixel_per_cycle", cfg.buffer_cap_per_pixel_per_cycle},
              {"trigger_rate_hz", cfg.trigger_rate_hz}};
}

SensorConfig sensor_config_from_json(const json& j) {
  SensorConfig cfg;
  get_if_present(j, "n_pixels", cfg.n_pixels);
  get_if_present(j, "n_tdcs", cfg.n_tdcs);
  get_if_present(j, "fine_bins_per_tdc", cfg.fine_bins_per_tdc);
  get_if_present(j, "coarse_period_ps", cfg.coarse_period_ps);
  if (j.contains("nominal_lsb_ps")) {
    cfg.nominal_lsb_ps = j.at("nominal_lsb_ps").get<double>();
  } else {
    cfg.nominal_lsb_ps = cfg.coarse_period_ps / cfg.fine_bins_per_tdc;
  }
  get_if_present(j, "cycle_length_ps", cfg.cycle_length_ps);
  get_if_present(j, "dead_time_ps", cfg.dead_time_ps);
  get_if_present(j, "buffer_cap_per_pixel_per_cycle", cfg.buffer_cap_per_pixel_per_cycle);
  get_if_present(j, "trigger_rate_hz", cfg.trigger_rate_hz);
  cfg.validate();
  return cfg;
}

json to_json(const Dispersion& d) {
  return json{{"lambda_at_pixel0_nm", d.lambda_at_pixel0_nm},
              {"nm_per_pixel", d.nm_per_pixel}};
}

Dispersion dispersion_from_json(const json& j) {
  Dispersion d;
  get_if_present(j, "lambda_at_pixel0_nm", d.lambda_at_pixel0_nm);
  get_if_present(j, "nm_per_pixel", d.nm_per_pixel);
  d.validate();
  return d;
}

json to_json(const DetectorEffects& e) {
  json j{{"pde", e.pde},
         {"dcr_hz_per_pixel", e.dcr_hz_per_pixel},
         {"jitter_sigma_ps", e.jitter_sigma_ps},
         {"dead_time_ps", e.dead_time_ps},
         {"buffer_cap", e.buffer_cap}};
  if (e.true_offsets)
    j["true_offsets"] = e.true_offsets->offset_ps;
  else
    j["true_offsets"] = "zero";
  if (e.true_dnl) {
    json widths = json::array();
    for (int t = 0; t < e.true_dnl->n_tdcs(); ++t) {
      auto w = e.true_dnl->widths(t);
      widths.push_back(std::vector<double>(w.begin(), w.end()));
    }
    j["true_dnl"] = json{{"widths_ps", widths}};
  } else {
    j["true_dnl"] = "identity";
  }
  return j;
}

OffsetTable random_offsets(int n_pixels, double lo_ps, double hi_ps, std::uint64_t seed) {
  OffsetTable t;
  t.offset_ps.resize(static_cast<std::size_t>(n_pixels));
  std::mt19937_64 gen(rng::mix(seed));
  std::uniform_real_distribution<double> u(lo_ps, hi_ps);
  for (auto& o : t.offset_ps) o = u(gen);
  return t;
}

TdcCalibration random_dnl(const SensorConfig& cfg, double lo_width_ps, double hi_width_ps,
                          std::uint64_t seed) {
  std::mt19937_64 gen(rng::mix(seed));
  std::uniform_real_distribution<double> u(lo_width_ps, hi_width_ps);
  std::vector<std::vector<double>> widths(cfg.n_tdcs,
                                          std::vector<double>(cfg.fine_bins_per_tdc));
  for (auto& per_tdc : widths)
    for (auto& w : per_tdc) w = u(gen);
  return TdcCalibration::from_widths(widths, cfg.coarse_period_ps);
}

DetectorEffects effects_from_json(const json& j, const SensorConfig& cfg) {
  DetectorEffects e;
  get_if_present(j, "pde", e.pde);
  get_if_present(j, "dcr_hz_per_pixel", e.dcr_hz_per_pixel);
  get_if_present(j, "jitter_sigma_ps", e.jitter_sigma_ps);
  get_if_present(j, "dead_time_ps", e.dead_time_ps);
  get_if_present(j, "buffer_cap", e.buffer_cap);

  if (j.contains("true_offsets")) {
    const json& o = j.at("true_offsets");
    if (o.is_array()) {
      OffsetTable t;
      t.offset_ps = o.get<std::vector<double>>();
      e.true_offsets = std::move(t);
    } else if (o.is_object() && o.contains("uniform_ps")) {
      auto range = o.at("uniform_ps").get<std::vector<double>>();
      if (range.size() != 2) throw ConfigError("effects: uniform_ps needs [lo, hi]");
      e.true_offsets = random_offsets(cfg.n_pixels, range[0], range[1],
                                      o.value("seed", std::uint64_t{0}));
    } else if (!(o.is_string() && o.get<std::string>() == "zero")) {
      throw ConfigError("effects: true_offsets must be \"zero\", an array, or a generator");
    }
  }

  if (j.contains("true_dnl")) {
    const json& d = j.at("true_dnl");
    if (d.is_object() && d.contains("widths_ps")) {
      e.true_dnl = TdcCalibration::from_widths(
          d.at("widths_ps").get<std::vector<std::vector<double>>>(), cfg.coarse_period_ps);
    } else if (d.is_object() && d.contains("uniform_widths_ps")) {
      auto range = d.at("uniform_widths_ps").get<std::vector<double>>();
      if (range.size() != 2) throw ConfigError("effects: uniform_widths_ps needs [lo, hi]");
      e.true_dnl = random_dnl(cfg, range[0], range[1], d.value("seed", std::uint64_t{0}));
    } else if (!(d.is_string() && d.get<std::string>() == "identity")) {
      throw ConfigError("effects: true_dnl must be \"identity\", widths, or a generator");
    }
  }
  e.validate(cfg);
  return e;
}

json to_json(const SourceSpec& s) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ThermalLines>) {
          json lines = json::array();
          for (const auto& l : v.lines)
            lines.push_back(
                json{{"center_nm", l.center_nm}, {"relative_intensity", l.relative_intensity}});
          return json{{"type", "thermal_lines"},
                      {"lines", lines},
                      {"instrument_sigma_nm", v.instrument_sigma_nm},
                      {"total_rate_hz", v.total_rate_hz}};
        } else if constexpr (std::is_same_v<T, SpdcSource>) {
          return json{{"type", "spdc"},
                      {"pump_center_nm", v.pump_center_nm},
                      {"pump_sigma_rad_s", v.pump_sigma_rad_s},
                      {"filter_sigma_rad_s", v.filter_sigma_rad_s},
                      {"arm_delay_ps", v.arm_delay_ps},
                      {"pair_rate_hz", v.pair_rate_hz},
                      {"splitter_loss", v.splitter_loss}};
        } else if constexpr (std::is_same_v<T, UniformSource>) {
          return json{{"type", "uniform"}, {"rate_hz_per_pixel", v.rate_hz_per_pixel}};
        } else {
          return json{{"type", "pulsed_laser"},
                      {"rep_rate_hz", v.rep_rate_hz},
                      {"pulse_sigma_ps", v.pulse_sigma_ps}};
        }
      },
      s);
}

SourceSpec source_from_json(const json& j) {
  std::string type = j.value("type", "");
  if (type == "thermal_lines") {
    ThermalLines s;
    if (j.contains("lines"))
      for (const json& l : j.at("lines"))
        s.lines.push_back({l.at("center_nm").get<double>(),
                           l.value("relative_intensity", 1.0)});
    get_if_present(j, "instrument_sigma_nm", s.instrument_sigma_nm);
    get_if_present(j, "total_rate_hz", s.total_rate_hz);
    return s;
  }
  if (type == "spdc") {
    SpdcSource s;
    get_if_present(j, "pump_center_nm", s.pump_center_nm);
    get_if_present(j, "pump_sigma_rad_s", s.pump_sigma_rad_s);
    get_if_present(j, "filter_sigma_rad_s", s.filter_sigma_rad_s);
    get_if_present(j, "arm_delay_ps", s.arm_delay_ps);
    get_if_present(j, "pair_rate_hz", s.pair_rate_hz);
    get_if_present(j, "splitter_loss", s.splitter_loss);
    return s;
  }
  if (type == "uniform") {
    UniformSource s;
    get_if_present(j, "rate_hz_per_pixel", s.rate_hz_per_pixel);
    return s;
  }
  if (type == "pulsed_laser") {
    PulsedLaser s;
    get_if_present(j, "rep_rate_hz", s.rep_rate_hz);
    get_if_present(j, "pulse_sigma_ps", s.pulse_sigma_ps);
    return s;
  }
  throw ConfigError("source: unknown type '" + type +
                    "' (expected thermal_lines | spdc | uniform | pulsed_laser)");
}

SimConfig sim_config_from_json(const json& j) {
  SimConfig c;
  if (j.contains("sensor")) c.sensor = sensor_config_from_json(j.at("sensor"));
  if (j.contains("dispersion")) c.dispersion = dispersion_from_json(j.at("dispersion"));
  if (j.contains("effects")) c.effects = effects_from_json(j.at("effects"), c.sensor);
  if (j.contains("source")) c.source = source_from_json(j.at("source"));
  validate_source(c.source);
  return c;
}

json to_json(const SimConfig& c) {
  return json{{"sensor", to_json(c.sensor)},
              {"dispersion", to_json(c.dispersion)},
              {"effects", to_json(c.effects)},
              {"source", to_json(c.source)}};
}

void save_calibration(const std::string& path, const CalibrationDoc& doc) {
  json j{{"format", "pspd-calibration"}, {"version", 1}};
  if (doc.tdc) {
    j["coarse_period_ps"] = doc.tdc->coarse_period_ps();
    j["n_tdcs"] = doc.tdc->n_tdcs();
    j["fine_bins_per_tdc"] = doc.tdc->n_bins();
    json widths = json::array(), edges = json::array();
    for (int t = 0; t < doc.tdc->n_tdcs(); ++t) {
      auto w = doc.tdc->widths(t);
      auto e = doc.tdc->edges(t);
      widths.push_back(std::vector<double>(w.begin(), w.end()));
      edges.push_back(std::vector<double>(e.begin(), e.end()));
    }
    j["tdc_bin_widths_ps"] = widths;
    j["tdc_cumulative_edges_ps"] = edges;
  }
  if (doc.offsets) {
    j["offsets_ps"] = doc.offsets->offset_ps;
    if (!doc.offsets->sigma_ps.empty()) j["offset_sigma_ps"] = doc.offsets->sigma_ps;
  }
  if (!doc.provenance.is_null()) j["provenance"] = doc.provenance;
  save_json_file(path, j);
}

CalibrationDoc load_calibration(const std::string& path) {
  json j = load_json_file(path);
  if (j.value("format", "") != "pspd-calibration")
    throw ConfigError(path + ": not a pspd-calibration document");
  if (j.value("version", 0) != 1)
    throw ConfigError(path + ": unsupported calibration version");
  CalibrationDoc doc;
  if (j.contains("tdc_bin_widths_ps"))
    doc.tdc = TdcCalibration::from_widths(
        j.at("tdc_bin_widths_ps").get<std::vector<std::vector<double>>>(),
        j.at("coarse_period_ps").get<double>());
  if (j.contains("offsets_ps")) {
    OffsetTable t;
    t.offset_ps = j.at("offsets_ps").get<std::vector<double>>();
    if (j.contains("offset_sigma_ps"))
      t.sigma_ps = j.at("offset_sigma_ps").get<std::vector<double>>();
    doc.offsets = std::move(t);
  }
  if (j.contains("provenance")) doc.provenance = j.at("provenance");
  return doc;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw IoError(path + ": " + e.what());
  }
  return j;
}

void save_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path);
}

} // namespace pspd
