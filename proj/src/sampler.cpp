#include "manai/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace manai {

std::uint64_t wrap_delta(std::uint64_t before, std::uint64_t after,
                         std::uint64_t max_range) {
  if (max_range == 0 || before >= max_range || after >= max_range) {
    throw Error(ErrorCode::InvalidArgument,
                "wrap_delta: counters must lie in [0, max_range)");
  }
  return after >= before ? after - before : max_range - before + after;
}

std::uint64_t wrap_delta(const CounterValue& before, const CounterValue& after) {
  if (before.domain != after.domain || before.max_range_uj != after.max_range_uj) {
    throw Error(ErrorCode::DomainMismatch,
                "counter delta across " + to_string(before.domain) + " and " +
                    to_string(after.domain));
  }
  return wrap_delta(before.value_uj, after.value_uj, before.max_range_uj);
}

EnergyMap<std::uint64_t> reading_delta(const ProbeReading& before,
                                       const ProbeReading& after) {
  if (before.counters.size() != after.counters.size()) {
    throw Error(ErrorCode::DomainMismatch,
                "readings cover different domain sets");
  }
  EnergyMap<std::uint64_t> delta;
  for (const auto& [domain, value] : after.counters) {
    auto it = before.counters.find(domain);
    if (it == before.counters.end()) {
      throw Error(ErrorCode::DomainMismatch,
                  "domain " + to_string(domain) + " missing from earlier reading");
    }
    delta[domain] =
        wrap_delta(CounterValue{domain, it->second, before.max_range.at(domain)},
                   CounterValue{domain, value, after.max_range.at(domain)});
  }
  return delta;
}

std::int64_t joules_to_pj(double joules) {
  return static_cast<std::int64_t>(std::llround(joules * 1e12));
}

double pj_to_joules(std::int64_t pj) { return static_cast<double>(pj) / 1e12; }

EnergySample make_sample(const ProbeReading& before, const ProbeReading& after,
                         const std::optional<EnergyMap<double>>& baseline_w) {
  if (after.timestamp_ns <= before.timestamp_ns) {
    throw Error(ErrorCode::InvalidArgument,
                "sample readings must have increasing timestamps");
  }
  EnergySample sample;
  sample.start_ns = before.timestamp_ns;
  sample.end_ns = after.timestamp_ns;
  sample.raw_uj = reading_delta(before, after);
  const double seconds = sample.duration_s();
  const auto span_ns = static_cast<double>(sample.end_ns - sample.start_ns);
  for (const auto& [domain, uj] : sample.raw_uj) {
    std::int64_t pj = static_cast<std::int64_t>(uj) * 1'000'000;
    if (baseline_w) {
      if (auto it = baseline_w->find(domain); it != baseline_w->end()) {
        // W * ns = 1e3 pJ
        pj -= static_cast<std::int64_t>(std::llround(it->second * span_ns * 1e3));
        pj = std::max<std::int64_t>(pj, 0);
      }
    }
    sample.energy_pj[domain] = pj;
    sample.energy_j[domain] = pj_to_joules(pj);
    sample.power_w[domain] = sample.energy_j[domain] / seconds;
  }
  return sample;
}

void check_single_wrap(double rate_hz, double max_power_w,
                       std::uint64_t max_range_uj) {
  if (max_power_w <= 0.0) return;
  const double worst_uj = max_power_w * 1e6 / rate_hz;
  if (worst_uj >= static_cast<double>(max_range_uj)) {
    throw Error(ErrorCode::ConfigError,
                "sampling rate " + std::to_string(rate_hz) +
                    " Hz is too low: at " + std::to_string(max_power_w) +
                    " W one interval could wrap a counter of range " +
                    std::to_string(max_range_uj) + " uJ more than once");
  }
}

void validate(const SamplerConfig& config) {
  if (!(config.rate_hz > 0.0) || !std::isfinite(config.rate_hz)) {
    throw Error(ErrorCode::ConfigError, "sampling rate must be > 0");
  }
  if (config.baseline_w) {
    for (const auto& [domain, watts] : *config.baseline_w) {
      if (!(watts >= 0.0) || !std::isfinite(watts)) {
        throw Error(ErrorCode::ConfigError,
                    "baseline power for " + to_string(domain) + " must be >= 0");
      }
    }
  }
}

namespace {

std::int64_t deadline(std::int64_t origin, std::int64_t k, double rate_hz) {
  return origin + static_cast<std::int64_t>(
                      std::llround(static_cast<double>(k) * 1e9 / rate_hz));
}

Error probe_lost(const Error& cause) {
  return Error(ErrorCode::ProbeLost, std::string("probe lost: ") + cause.what());
}

}  // namespace

SampleStreamResult sample_stream(Probe& probe, const SamplerConfig& config,
                                 Clock& clock, const StreamControl& control) {
  validate(config);
  SampleStreamResult result;
  try {
    result.first = probe.read();
  } catch (const Error& e) {
    result.error = probe_lost(e);
    return result;
  }
  for (const auto& [domain, range] : result.first->max_range) {
    check_single_wrap(config.rate_hz, probe.max_plausible_power_w(), range);
  }
  if (control.on_first) control.on_first(*result.first);

  ProbeReading previous = *result.first;
  const std::int64_t origin = previous.timestamp_ns;
  for (std::int64_t k = 1;; ++k) {
    if (!clock.sleep_until(deadline(origin, k, config.rate_hz), control.stop)) {
      break;
    }
    ProbeReading current;
    try {
      current = probe.read();
    } catch (const Error& e) {
      result.error = probe_lost(e);
      break;
    }
    result.samples.push_back(make_sample(previous, current, config.baseline_w));
    previous = std::move(current);
    result.last = previous;
    if (control.finish_after_ns &&
        previous.timestamp_ns >= control.finish_after_ns->load()) {
      break;
    }
  }
  return result;
}

BaselineProfile calibrate_baseline(Probe& probe, double duration_s,
                                   Clock& clock) {
  if (!(duration_s >= 1.0)) {
    throw Error(ErrorCode::InvalidArgument,
                "baseline calibration needs a window of at least 1 s");
  }
  constexpr double kPollHz = 10.0;
  ProbeReading previous;
  try {
    previous = probe.read();
  } catch (const Error& e) {
    throw probe_lost(e);
  }
  const std::int64_t origin = previous.timestamp_ns;
  const std::int64_t end =
      origin + static_cast<std::int64_t>(std::llround(duration_s * 1e9));
  EnergyMap<std::uint64_t> total;
  for (const auto& [domain, value] : previous.counters) total[domain] = 0;

  // Accumulating per poll keeps long windows correct across counter wraps.
  for (std::int64_t k = 1; previous.timestamp_ns < end; ++k) {
    clock.sleep_until(std::min(deadline(origin, k, kPollHz), end), {});
    ProbeReading current;
    try {
      current = probe.read();
    } catch (const Error& e) {
      throw probe_lost(e);
    }
    for (const auto& [domain, uj] : reading_delta(previous, current)) {
      total[domain] += uj;
    }
    previous = std::move(current);
  }

  BaselineProfile profile;
  profile.duration_s = static_cast<double>(previous.timestamp_ns - origin) / 1e9;
  profile.calibrated_at_ns = previous.timestamp_ns;
  for (const auto& [domain, uj] : total) {
    profile.power_w[domain] = static_cast<double>(uj) / 1e6 / profile.duration_s;
  }
  return profile;
}

BackgroundSampler::BackgroundSampler(Probe& probe, SamplerConfig config,
                                     Clock& clock)
    : probe_(probe), config_(std::move(config)), clock_(clock) {}

BackgroundSampler::~BackgroundSampler() {
  if (worker_.joinable()) {
    worker_.request_stop();
    worker_.join();
  }
}

void BackgroundSampler::start() {
  std::promise<SampleStreamResult> result_promise;
  result_ = result_promise.get_future();
  auto started = started_.get_future();
  worker_ = std::jthread([this, promise = std::move(result_promise)](
                             std::stop_token stop) mutable {
    bool signalled = false;
    StreamControl control{stop, &finish_after_ns_, [&](const ProbeReading&) {
                            signalled = true;
                            started_.set_value();
                          }};
    try {
      auto result = sample_stream(probe_, config_, clock_, control);
      if (!signalled) {
        if (result.error) {
          started_.set_exception(std::make_exception_ptr(*result.error));
        } else {
          started_.set_value();
        }
      }
      promise.set_value(std::move(result));
    } catch (...) {
      if (!signalled) started_.set_exception(std::current_exception());
      promise.set_exception(std::current_exception());
    }
  });
  started.get();
}

void BackgroundSampler::finish_after(std::int64_t ns) {
  finish_after_ns_.store(ns);
}

SampleStreamResult BackgroundSampler::join() {
  auto result = result_.get();
  worker_.join();
  return result;
}

}  // namespace manai
