#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace preimage::cli {

std::string fmt17(double v);

// Output root resolution: --out flag beats PREIMAGE_OUTPUT_ROOT beats "runs".
std::string resolve_output_root(const std::string& flag_value);

std::string default_run_id(std::uint64_t seed);

// Creates <root>/<run_id>; an existing directory is a collision error, never
// an overwrite.
std::filesystem::path create_run_dir(const std::string& root,
                                     const std::string& run_id);

// Flat "key = value" echo of the effective configuration, sorted by key.
void write_config_echo(const std::filesystem::path& dir,
                       const std::map<std::string, std::string>& kv);

void write_trajectory_csv(const std::filesystem::path& path,
                          const std::vector<double>& trajectory);

// Single-row CSV with a fixed header.
void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, std::string>>& cols);

std::vector<std::map<std::string, std::string>> read_csv(
    const std::filesystem::path& path);

}  // namespace preimage::cli
