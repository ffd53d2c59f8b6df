#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "manai/clock.hpp"
#include "manai/harness.hpp"
#include "manai/probe.hpp"
#include "manai/results.hpp"
#include "manai/sampler.hpp"
#include "manai/store.hpp"

namespace manai {

enum class BaselineMode { Off, Calibrate, Fixed };

struct BaselineSetting {
  BaselineMode mode = BaselineMode::Off;
  double calibrate_s = 0.0;
  EnergyMap<double> fixed_w;

  /// `off`, `calibrate:<secs>` or `fixed:<domain>=<watts>[,...]`.
  static BaselineSetting parse(std::string_view text);
  std::string str() const;

  bool operator==(const BaselineSetting&) const = default;
};

/// How test boundaries and probe readings share a time base.
///
/// Realtime: the sampler polls the probe on the steady clock while the
/// harness runs. Virtual (simulated probe only): the harness runs for real,
/// then its measured duration is laid onto a virtual timeline and the
/// simulated probe is sampled there. Durations of at least one update
/// interval are floored to whole intervals, which makes repeated runs
/// produce identical records. Auto picks Virtual for the simulated probe and
/// Realtime for RAPL.
enum class Timeline { Auto, Realtime, Virtual };

std::string_view to_string(Timeline timeline);
std::optional<Timeline> parse_timeline(std::string_view text);

struct ExperimentConfig {
  double sampling_rate_hz = 100.0;
  /// Repeated executions of every selected test.
  int iterations = 1;
  /// Empty selects every discovered test.
  std::vector<TestId> selection;
  ProbeSettings probe;
  Timeline timeline = Timeline::Auto;
  BaselineSetting baseline;
  /// Empty resolves to the VCS head of the harness working directory.
  std::string revision_label;
  HarnessCommand harness;
  std::filesystem::path data_dir = ".manai";
};

/// Throws ConfigError on invariant violations.
void validate(const ExperimentConfig& config);

struct ExperimentHooks {
  std::function<void(const std::string&)> on_warning;
  /// Called once per test after its last iteration.
  std::function<void(const TestSummary&, std::size_t index, std::size_t total)>
      on_test_done;
  /// Called after every iteration.
  std::function<void(const TestExecutionResult&)> on_iteration;
};

/// Resolves an empty label to `git rev-parse HEAD` in `working_dir`.
/// Throws ConfigError when no label can be determined.
std::string resolve_revision_label(const std::string& configured,
                                   const std::filesystem::path& working_dir);

/// Discovers, runs and attributes every selected test, then saves the record
/// under the data directory lock. Nothing is saved when the probe is lost or
/// the harness cannot be started.
RevisionRecord run_experiment(const ExperimentConfig& config,
                              const ExperimentHooks& hooks = {});

}  // namespace manai
