#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "manai/domain.hpp"
#include "manai/harness.hpp"
#include "manai/sampler.hpp"

namespace manai {

enum class FailureKind { None, Crashed, TimedOut, ProtocolError };

std::string_view to_string(FailureKind kind);
std::optional<FailureKind> parse_failure_kind(std::string_view text);

/// One iteration of one test.
struct TestExecutionResult {
  TestId test;
  int iteration = 0;
  std::int64_t begin_ns = 0;
  std::int64_t end_ns = 0;
  std::int64_t duration_ns = 0;
  EnergyMap<double> energy_j;
  EnergyMap<double> mean_power_w;
  std::vector<EnergySample> samples;
  TestStatus status = TestStatus::Pass;
  /// Set when the test ran for less than one probe update interval.
  bool low_confidence = false;
  bool baseline_applied = false;
  FailureKind failure = FailureKind::None;
  std::string detail;

  bool operator==(const TestExecutionResult&) const = default;
};

struct Stats {
  double mean = 0.0;
  /// Lower-middle element for even counts.
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
  /// Sample standard deviation (n - 1); 0 for a single value.
  double stddev = 0.0;

  bool operator==(const Stats&) const = default;
};

/// Throws EmptyInput for an empty span.
Stats compute_stats(std::span<const double> values);

struct TestSummary {
  TestId test;
  int iterations = 0;
  EnergyMap<Stats> energy_j;
  EnergyMap<Stats> power_w;
  double mean_duration_s = 0.0;
  bool any_low_confidence = false;
  int pass_count = 0;
  int fail_count = 0;
  int skip_count = 0;

  bool operator==(const TestSummary&) const = default;
};

/// Cross-iteration statistics. All results must share one TestId.
TestSummary summarize(std::span<const TestExecutionResult> results);

/// Energy per domain inside [begin_ns, end_ns] in integer picojoules. Each
/// sample contributes pro-rata to its overlap with the window. Computed as
/// F(end) - F(begin) over the cumulative attributed energy F, so results
/// over adjacent windows add up exactly.
EnergyMap<std::int64_t> attribute_pj(std::span<const EnergySample> samples,
                                     std::int64_t begin_ns, std::int64_t end_ns);

EnergyMap<double> attribute(std::span<const EnergySample> samples,
                            std::int64_t begin_ns, std::int64_t end_ns);

}  // namespace manai
