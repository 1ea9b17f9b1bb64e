#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace pspd {

inline constexpr const char* kToolVersion = "0.1.0";

// Machine-readable record of one CLI run: subcommand, normalized arguments,
// seed, and content digests of every input and output. Re-running from the
// manifest reproduces the outputs byte-identically.
struct RunManifest {
  std::string subcommand;
  std::vector<std::string> args; // full argument list, subcommand included
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::vector<std::pair<std::string, std::string>> inputs;  // (path, digest)
  std::vector<std::pair<std::string, std::string>> outputs; // (path, digest)

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

void write_manifest(const std::string& path, const RunManifest& m);
RunManifest read_manifest(const std::string& path);

} // namespace pspd
