#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "manai/experiment.hpp"
#include "manai/probe.hpp"

namespace testing {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    std::string pattern = (fs::temp_directory_path() / "manai-test-XXXXXX").string();
    if (!::mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string fixture_path() { return MANAI_FIXTURE_PATH; }
inline std::string cli_path() { return MANAI_CLI_PATH; }

inline manai::SimulationScenario constant_scenario(double watts,
                                                   std::int64_t update_ns = 1'000'000,
                                                   std::uint64_t max_range =
                                                       manai::kDefaultMaxRangeUj) {
  manai::SimulationScenario s;
  s.update_interval_ns = update_ns;
  s.max_range_uj = max_range;
  s.segments.push_back({1'000'000'000, {{{manai::DomainKind::Package, 0}, watts}}});
  return s;
}

inline manai::HarnessCommand fixture_command(std::vector<std::string> specs,
                                             std::vector<std::string> extra = {}) {
  manai::HarnessCommand cmd;
  cmd.program = fixture_path();
  cmd.args = extra;
  cmd.args.insert(cmd.args.end(), specs.begin(), specs.end());
  cmd.list_args = cmd.args;
  cmd.list_args.insert(cmd.list_args.begin(), "--list");
  cmd.timeout_ns = 20'000'000'000;
  return cmd;
}

/// Experiment on the simulated probe and the fixture harness.
inline manai::ExperimentConfig fixture_experiment(const fs::path& dir,
                                                  const std::string& scenario_text,
                                                  std::vector<std::string> specs) {
  write_file(dir / "scenario.txt", scenario_text);
  manai::ExperimentConfig config;
  config.probe.backend = manai::ProbeBackend::Simulated;
  config.probe.scenario = dir / "scenario.txt";
  config.harness = fixture_command(std::move(specs));
  config.data_dir = dir / "data";
  config.revision_label = "test";
  return config;
}

}  // namespace testing
