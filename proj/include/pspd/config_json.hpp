#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "pspd/calibration.hpp"
#include "pspd/sensor.hpp"
#include "pspd/sim.hpp"

namespace pspd {

using nlohmann::json;

json to_json(const SensorConfig& cfg);
SensorConfig sensor_config_from_json(const json& j); // missing fields keep defaults

json to_json(const Dispersion& d);
Dispersion dispersion_from_json(const json& j);

// Detector effects. true_offsets accepts "zero", an array of per-pixel
// picosecond values, or {"uniform_ps": [lo, hi], "seed": n}; true_dnl accepts
// "identity", {"widths_ps": [[...]. ..]}, or
// {"uniform_widths_ps": [lo, hi], "seed": n}.
json to_json(const DetectorEffects& e);
DetectorEffects effects_from_json(const json& j, const SensorConfig& cfg);

json to_json(const SourceSpec& s);
SourceSpec source_from_json(const json& j);

// Truth tables for injection.
OffsetTable random_offsets(int n_pixels, double lo_ps, double hi_ps, std::uint64_t seed);
TdcCalibration random_dnl(const SensorConfig& cfg, double lo_width_ps, double hi_width_ps,
                          std::uint64_t seed);

// Full simulation setup as used by the CLI.
struct SimConfig {
  SensorConfig sensor;
  Dispersion dispersion;
  DetectorEffects effects;
  SourceSpec source = UniformSource{};
};

SimConfig sim_config_from_json(const json& j);
json to_json(const SimConfig& c);

// Versioned calibration document holding either or both calibration
// products plus provenance (input digest, counts, ...).
struct CalibrationDoc {
  std::optional<TdcCalibration> tdc;
  std::optional<OffsetTable> offsets;
  json provenance;
};

void save_calibration(const std::string& path, const CalibrationDoc& doc);
CalibrationDoc load_calibration(const std::string& path);

json load_json_file(const std::string& path);
void save_json_file(const std::string& path, const json& j);

} // namespace pspd
