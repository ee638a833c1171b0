#include "tabnet/manifest.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "tabnet/version.hpp"

namespace tabnet {

void to_json(nlohmann::json& j, const RunManifest& m) {
  j = nlohmann::json{{"command", m.command},   {"config_path", m.config_path}, {"config", m.config},
                     {"seed", m.seed},         {"inputs", m.inputs},           {"outputs", m.outputs},
                     {"checkpoints", m.checkpoints}, {"version", m.version.empty() ? kVersion : m.version}};
}

void write_manifest(const RunManifest& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << nlohmann::json(m).dump(2) << '\n';
}

std::string file_id(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::istreambuf_iterator<char> it(in), end; it != end; ++it) {
    h ^= static_cast<unsigned char>(*it);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace tabnet
