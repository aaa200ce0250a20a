#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace engage {

std::uint64_t fnv1a64(std::string_view bytes);
std::string fnv1a64_hex(std::uint64_t hash);  // 16 lowercase hex digits

// Whole-file convenience; throws std::runtime_error when unreadable.
std::uint64_t fnv1a64_file(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

// The reproducibility record written next to every output: subcommand, tool
// version, seed, the fully resolved config, input paths with content hashes,
// and output paths. Deliberately clock-free.
nlohmann::json run_manifest(const std::string& subcommand, std::uint64_t seed,
                            const nlohmann::json& resolved_config,
                            const std::vector<std::string>& inputs,
                            const std::vector<std::string>& outputs);

}  // namespace engage
