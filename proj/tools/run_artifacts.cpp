#include "run_artifacts.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace preimage::cli {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string resolve_output_root(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("PREIMAGE_OUTPUT_ROOT"); env && *env)
    return env;
  return "runs";
}

std::string default_run_id(std::uint64_t seed) {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d%02d%02d-%02d%02d%02d-s%llu",
                tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                tm.tm_min, tm.tm_sec, static_cast<unsigned long long>(seed));
  return buf;
}

fs::path create_run_dir(const std::string& root, const std::string& run_id) {
  if (run_id.empty()) throw std::invalid_argument("run id must not be empty");
  fs::path dir = fs::path(root) / run_id;
  if (fs::exists(dir))
    throw std::runtime_error("run directory already exists: " + dir.string() +
                             " (run ids are never overwritten)");
  fs::create_directories(dir);
  return dir;
}

void write_config_echo(const fs::path& dir,
                       const std::map<std::string, std::string>& kv) {
  std::ofstream out(dir / "config.txt");
  if (!out) throw std::runtime_error("cannot write config echo in " + dir.string());
  for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
}

void write_trajectory_csv(const fs::path& path,
                          const std::vector<double>& trajectory) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "iteration,objective\n";
  for (std::size_t i = 0; i < trajectory.size(); ++i)
    out << i << "," << fmt17(trajectory[i]) << "\n";
}

void write_metrics_csv(
    const fs::path& path,
    const std::vector<std::pair<std::string, std::string>>& cols) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t i = 0; i < cols.size(); ++i)
    out << cols[i].first << (i + 1 < cols.size() ? "," : "\n");
  for (std::size_t i = 0; i < cols.size(); ++i)
    out << cols[i].second << (i + 1 < cols.size() ? "," : "\n");
}

std::vector<std::map<std::string, std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty csv: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(tok);
    if (!s.empty() && s.back() == ',') out.push_back("");
    return out;
  };
  std::vector<std::string> header = split(line);
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells = split(line);
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i)
      row[header[i]] = cells[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace preimage::cli
