#include "pspd/manifest.hpp"

#include "pspd/config_json.hpp"
#include "pspd/errors.hpp"

namespace pspd {

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j{{"format", "pspd-manifest"},
                   {"version", 1},
                   {"tool_version", kToolVersion},
                   {"subcommand", subcommand},
                   {"args", args}};
  if (has_seed) j["seed"] = seed;
  auto files = [](const std::vector<std::pair<std::string, std::string>>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& [path, digest] : v) a.push_back({{"path", path}, {"digest", digest}});
    return a;
  };
  j["inputs"] = files(inputs);
  j["outputs"] = files(outputs);
  return j;
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "pspd-manifest")
    throw ConfigError("not a pspd-manifest document");
  if (j.value("version", 0) != 1) throw ConfigError("unsupported manifest version");
  RunManifest m;
  m.subcommand = j.at("subcommand").get<std::string>();
  m.args = j.at("args").get<std::vector<std::string>>();
  if (j.contains("seed")) {
    m.seed = j.at("seed").get<std::uint64_t>();
    m.has_seed = true;
  }
  auto files = [](const nlohmann::json& a) {
    std::vector<std::pair<std::string, std::string>> v;
    for (const auto& e : a)
      v.emplace_back(e.at("path").get<std::string>(), e.at("digest").get<std::string>());
    return v;
  };
  if (j.contains("inputs")) m.inputs = files(j.at("inputs"));
  if (j.contains("outputs")) m.outputs = files(j.at("outputs"));
  return m;
}

void write_manifest(const std::string& path, const RunManifest& m) {
  save_json_file(path, m.to_json());
}

RunManifest read_manifest(const std::string& path) {
  return RunManifest::from_json(load_json_file(path));
}

} // namespace pspd
