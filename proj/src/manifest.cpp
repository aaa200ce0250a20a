#include "engage/manifest.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "engage/version.hpp"

namespace engage {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string fnv1a64_hex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw std::runtime_error("cannot read " + path);
  return std::move(buf).str();
}

void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("cannot write " + path);
}

std::uint64_t fnv1a64_file(const std::string& path) { return fnv1a64(read_file(path)); }

nlohmann::json run_manifest(const std::string& subcommand, std::uint64_t seed,
                            const nlohmann::json& resolved_config,
                            const std::vector<std::string>& inputs,
                            const std::vector<std::string>& outputs) {
  nlohmann::json j;
  j["subcommand"] = subcommand;
  j["tool_version"] = kVersion;
  j["seed"] = seed;
  j["config"] = resolved_config;
  nlohmann::json in = nlohmann::json::array();
  for (const auto& path : inputs) {
    in.push_back({{"path", path}, {"fnv1a64", fnv1a64_hex(fnv1a64_file(path))}});
  }
  j["inputs"] = std::move(in);
  j["outputs"] = outputs;
  return j;
}

}  // namespace engage
