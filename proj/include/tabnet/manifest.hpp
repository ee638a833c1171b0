#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace tabnet {

/// Everything needed to reproduce a command-line run.
struct RunManifest {
  std::string command;
  std::string config_path;
  nlohmann::json config;  ///< resolved configuration actually used
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::map<std::string, std::string> checkpoints;  ///< path -> content id
  std::string version;
};

void to_json(nlohmann::json& j, const RunManifest& m);
void write_manifest(const RunManifest& m, const std::string& path);

/// 64-bit FNV-1a of the file bytes, as 16 hex digits.
std::string file_id(const std::string& path);

}  // namespace tabnet
