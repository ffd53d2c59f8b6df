#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <future>
#include <limits>
#include <optional>
#include <stop_token>
#include <thread>
#include <vector>

#include "manai/clock.hpp"
#include "manai/domain.hpp"
#include "manai/error.hpp"
#include "manai/probe.hpp"

namespace manai {

/// One sampling interval [start_ns, end_ns].
///
/// `raw_uj` is the wrap-corrected counter delta before any baseline
/// subtraction. `energy_pj` is the attributed energy after baseline
/// subtraction, held as integer picojoules so that sums and pro-rata splits
/// stay exact; `energy_j` and `power_w` are derived from it.
struct EnergySample {
  std::int64_t start_ns = 0;
  std::int64_t end_ns = 0;
  EnergyMap<std::uint64_t> raw_uj;
  EnergyMap<std::int64_t> energy_pj;
  EnergyMap<double> energy_j;
  EnergyMap<double> power_w;

  double duration_s() const { return static_cast<double>(end_ns - start_ns) / 1e9; }

  bool operator==(const EnergySample&) const = default;
};

struct BaselineProfile {
  EnergyMap<double> power_w;
  double duration_s = 0.0;
  /// Probe-clock timestamp at the end of the calibration window.
  std::int64_t calibrated_at_ns = 0;

  bool operator==(const BaselineProfile&) const = default;
};

struct SamplerConfig {
  double rate_hz = 100.0;
  /// Idle power subtracted from every sample when present.
  std::optional<EnergyMap<double>> baseline_w;
};

/// Modular counter difference. Requires before, after < max_range.
std::uint64_t wrap_delta(std::uint64_t before, std::uint64_t after,
                         std::uint64_t max_range);

/// Counter value tagged with its domain, so deltas across domains are
/// rejected with DomainMismatch.
struct CounterValue {
  EnergyDomain domain;
  std::uint64_t value_uj = 0;
  std::uint64_t max_range_uj = 0;
};

std::uint64_t wrap_delta(const CounterValue& before, const CounterValue& after);

/// Per-domain wrap_delta between two readings of the same probe.
EnergyMap<std::uint64_t> reading_delta(const ProbeReading& before,
                                       const ProbeReading& after);

EnergySample make_sample(const ProbeReading& before, const ProbeReading& after,
                         const std::optional<EnergyMap<double>>& baseline_w);

/// Converts joules to the picojoule unit used for exact attribution.
std::int64_t joules_to_pj(double joules);
double pj_to_joules(std::int64_t pj);

/// Throws ConfigError if one sampling interval at `rate_hz` could see more
/// than one wrap of a counter of range `max_range_uj` at `max_power_w`.
void check_single_wrap(double rate_hz, double max_power_w,
                       std::uint64_t max_range_uj);

void validate(const SamplerConfig& config);

struct SampleStreamResult {
  std::vector<EnergySample> samples;
  std::optional<ProbeReading> first;
  std::optional<ProbeReading> last;
  /// ProbeLost when the probe failed mid-stream; samples hold everything up
  /// to the failure.
  std::optional<Error> error;
};

struct StreamControl {
  std::stop_token stop;
  /// The stream ends after the first reading at or past this time.
  const std::atomic<std::int64_t>* finish_after_ns = nullptr;
  std::function<void(const ProbeReading&)> on_first;
};

/// Polls the probe on absolute deadlines first + k/rate until stopped.
/// A stop request discards the interval in progress.
SampleStreamResult sample_stream(Probe& probe, const SamplerConfig& config,
                                 Clock& clock, const StreamControl& control);

/// Mean per-domain power over a quiescent window of at least one second.
BaselineProfile calibrate_baseline(Probe& probe, double duration_s,
                                   Clock& clock);

/// Runs sample_stream on its own thread for the duration of one test
/// execution.
class BackgroundSampler {
 public:
  BackgroundSampler(Probe& probe, SamplerConfig config, Clock& clock);
  ~BackgroundSampler();

  BackgroundSampler(const BackgroundSampler&) = delete;
  BackgroundSampler& operator=(const BackgroundSampler&) = delete;

  /// Returns once the first reading has been taken. Rethrows startup
  /// failures (probe unreadable, rate rejected).
  void start();

  /// Lets the stream run until it has a reading at or after `ns`.
  void finish_after(std::int64_t ns);

  SampleStreamResult join();

 private:
  Probe& probe_;
  SamplerConfig config_;
  Clock& clock_;
  std::atomic<std::int64_t> finish_after_ns_{
      std::numeric_limits<std::int64_t>::max()};
  std::promise<void> started_;
  std::future<SampleStreamResult> result_;
  std::jthread worker_;
};

}  // namespace manai
