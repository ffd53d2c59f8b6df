#include "manai/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <set>

#include "manai/config.hpp"
#include "manai/error.hpp"
#include "manai/process.hpp"
#include "text_util.hpp"

namespace manai {

// ---------------------------------------------------------------------------
// Small enums and settings
// ---------------------------------------------------------------------------

std::string_view to_string(FailureKind kind) {
  switch (kind) {
    case FailureKind::None: return "none";
    case FailureKind::Crashed: return "crashed";
    case FailureKind::TimedOut: return "timed-out";
    case FailureKind::ProtocolError: return "protocol-error";
  }
  return "none";
}

std::optional<FailureKind> parse_failure_kind(std::string_view text) {
  for (auto kind : {FailureKind::None, FailureKind::Crashed, FailureKind::TimedOut,
                    FailureKind::ProtocolError}) {
    if (to_string(kind) == text) return kind;
  }
  return std::nullopt;
}

std::string_view to_string(Timeline timeline) {
  switch (timeline) {
    case Timeline::Auto: return "auto";
    case Timeline::Realtime: return "realtime";
    case Timeline::Virtual: return "virtual";
  }
  return "auto";
}

std::optional<Timeline> parse_timeline(std::string_view text) {
  if (text == "auto" || text.empty()) return Timeline::Auto;
  if (text == "realtime") return Timeline::Realtime;
  if (text == "virtual") return Timeline::Virtual;
  return std::nullopt;
}

BaselineSetting BaselineSetting::parse(std::string_view text) {
  BaselineSetting setting;
  text = detail::trim(text);
  if (text.empty() || text == "off") return setting;
  if (text.starts_with("calibrate:")) {
    auto secs = detail::parse_double(text.substr(10));
    if (!secs || !std::isfinite(*secs) || *secs < 1.0) {
      throw Error(ErrorCode::ConfigError,
                  "baseline calibration needs at least 1 second");
    }
    setting.mode = BaselineMode::Calibrate;
    setting.calibrate_s = *secs;
    return setting;
  }
  if (text.starts_with("fixed:")) {
    setting.mode = BaselineMode::Fixed;
    for (const auto& part : detail::split(text.substr(6), ',')) {
      auto eq = part.find('=');
      if (eq == std::string::npos) {
        throw Error(ErrorCode::ConfigError, "fixed baseline expects domain=watts");
      }
      const std::string name(detail::trim(std::string_view(part).substr(0, eq)));
      auto domain = parse_domain(name);
      if (!domain) {
        if (auto kind = parse_domain_kind(name)) domain = EnergyDomain{*kind, 0};
      }
      auto watts = detail::parse_double(detail::trim(std::string_view(part).substr(eq + 1)));
      if (!domain || !watts || !std::isfinite(*watts) || *watts < 0.0) {
        throw Error(ErrorCode::ConfigError, "bad fixed baseline entry '" + part + "'");
      }
      setting.fixed_w[*domain] = *watts;
    }
    if (setting.fixed_w.empty()) {
      throw Error(ErrorCode::ConfigError, "fixed baseline lists no domains");
    }
    return setting;
  }
  throw Error(ErrorCode::ConfigError,
              "baseline must be off, calibrate:<secs> or fixed:<domain>=<watts>,...");
}

std::string BaselineSetting::str() const {
  switch (mode) {
    case BaselineMode::Off: return "off";
    case BaselineMode::Calibrate: return "calibrate:" + detail::format_exact(calibrate_s);
    case BaselineMode::Fixed: {
      std::string out = "fixed:";
      bool first = true;
      for (const auto& [domain, watts] : fixed_w) {
        if (!first) out += ',';
        first = false;
        out += to_string(domain) + "=" + detail::format_exact(watts);
      }
      return out;
    }
  }
  return "off";
}

// ---------------------------------------------------------------------------
// Statistics and attribution
// ---------------------------------------------------------------------------

Stats compute_stats(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "no values to summarize");
  // Welford's update keeps the variance stable for long runs.
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t n = 0;
  for (double v : values) {
    ++n;
    const double delta = v - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (v - mean);
  }
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  Stats stats;
  stats.mean = mean;
  stats.median = sorted[(sorted.size() - 1) / 2];
  stats.min = sorted.front();
  stats.max = sorted.back();
  stats.stddev = n > 1 ? std::sqrt(std::max(m2, 0.0) / static_cast<double>(n - 1)) : 0.0;
  return stats;
}

TestSummary summarize(std::span<const TestExecutionResult> results) {
  if (results.empty()) {
    throw Error(ErrorCode::EmptyInput, "no test results to summarize");
  }
  TestSummary summary;
  summary.test = results.front().test;
  summary.iterations = static_cast<int>(results.size());

  std::set<EnergyDomain> domains;
  double duration_total = 0.0;
  for (const auto& r : results) {
    if (r.test != summary.test) {
      throw Error(ErrorCode::InvalidArgument,
                  "summarize: results for " + r.test.str() + " and " +
                      summary.test.str() + " mixed");
    }
    for (const auto& [domain, joules] : r.energy_j) domains.insert(domain);
    duration_total += static_cast<double>(r.duration_ns) / 1e9;
    summary.any_low_confidence = summary.any_low_confidence || r.low_confidence;
    switch (r.status) {
      case TestStatus::Pass: ++summary.pass_count; break;
      case TestStatus::Fail: ++summary.fail_count; break;
      case TestStatus::Skip: ++summary.skip_count; break;
    }
  }
  summary.mean_duration_s = duration_total / static_cast<double>(results.size());

  for (const auto& domain : domains) {
    std::vector<double> energy;
    std::vector<double> power;
    for (const auto& r : results) {
      auto e = r.energy_j.find(domain);
      auto p = r.mean_power_w.find(domain);
      energy.push_back(e == r.energy_j.end() ? 0.0 : e->second);
      power.push_back(p == r.mean_power_w.end() ? 0.0 : p->second);
    }
    summary.energy_j[domain] = compute_stats(energy);
    summary.power_w[domain] = compute_stats(power);
  }
  return summary;
}

namespace {

using Wide = __int128;

// Attributed energy of `domain` from the first sample start up to t.
Wide cumulative_pj(std::span<const EnergySample> samples,
                   const EnergyDomain& domain, std::int64_t t) {
  Wide total = 0;
  for (const auto& s : samples) {
    if (t <= s.start_ns) break;
    auto it = s.energy_pj.find(domain);
    const Wide pj = it == s.energy_pj.end() ? 0 : it->second;
    if (t >= s.end_ns) {
      total += pj;
      continue;
    }
    // Non-negative operands, so integer division floors.
    total += pj * (t - s.start_ns) / (s.end_ns - s.start_ns);
    break;
  }
  return total;
}

}  // namespace

EnergyMap<std::int64_t> attribute_pj(std::span<const EnergySample> samples,
                                     std::int64_t begin_ns, std::int64_t end_ns) {
  if (end_ns <= begin_ns) {
    throw Error(ErrorCode::InvalidArgument, "attribution window must be non-empty");
  }
  std::set<EnergyDomain> domains;
  for (const auto& s : samples) {
    for (const auto& [domain, pj] : s.energy_pj) domains.insert(domain);
  }
  EnergyMap<std::int64_t> out;
  for (const auto& domain : domains) {
    out[domain] = static_cast<std::int64_t>(cumulative_pj(samples, domain, end_ns) -
                                            cumulative_pj(samples, domain, begin_ns));
  }
  return out;
}

EnergyMap<double> attribute(std::span<const EnergySample> samples,
                            std::int64_t begin_ns, std::int64_t end_ns) {
  EnergyMap<double> out;
  for (const auto& [domain, pj] : attribute_pj(samples, begin_ns, end_ns)) {
    out[domain] = pj_to_joules(pj);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment
// ---------------------------------------------------------------------------

void validate(const ExperimentConfig& config) {
  if (!(config.sampling_rate_hz > 0.0) || !std::isfinite(config.sampling_rate_hz)) {
    throw Error(ErrorCode::ConfigError, "sampling rate must be > 0");
  }
  if (config.iterations < 1) {
    throw Error(ErrorCode::ConfigError, "iterations must be >= 1");
  }
  if (config.harness.program.empty()) {
    throw Error(ErrorCode::ConfigError, "no harness program configured");
  }
  if (config.harness.timeout_ns <= 0) {
    throw Error(ErrorCode::ConfigError, "harness timeout must be > 0");
  }
  if (config.probe.backend == ProbeBackend::Rapl &&
      config.timeline == Timeline::Virtual) {
    throw Error(ErrorCode::ConfigError,
                "the virtual timeline needs the simulated probe");
  }
  if (config.probe.backend == ProbeBackend::Simulated && config.probe.scenario.empty()) {
    throw Error(ErrorCode::ConfigError, "the simulated probe needs a scenario file");
  }
}

std::string resolve_revision_label(const std::string& configured,
                                   const std::filesystem::path& working_dir) {
  if (!configured.empty()) return configured;
  try {
    auto head = run_capture({"git", {"rev-parse", "HEAD"}, working_dir, {}},
                            10'000'000'000);
    auto label = std::string(detail::trim(head.output));
    if (head.exit_code == 0 && !label.empty()) return label;
  } catch (const Error&) {
  }
  throw Error(ErrorCode::ConfigError,
              "no revision label given and no VCS head found; pass --revision");
}

namespace {

struct Runner {
  Runner(const ExperimentConfig& c, const ExperimentHooks& h, Timeline t)
      : config(c), hooks(h), timeline(t) {}

  const ExperimentConfig& config;
  const ExperimentHooks& hooks;
  Timeline timeline;
  std::shared_ptr<SteadyClock> steady = std::make_shared<SteadyClock>();
  std::shared_ptr<ManualClock> virtual_clock = std::make_shared<ManualClock>(0);
  std::unique_ptr<Probe> probe;
  ProbeDescriptor descriptor;
  SamplerConfig sampler_config;

  Clock& probe_clock() {
    return timeline == Timeline::Virtual ? static_cast<Clock&>(*virtual_clock)
                                         : static_cast<Clock&>(*steady);
  }

  void warn(const std::string& message) const {
    if (hooks.on_warning) hooks.on_warning(message);
  }

  struct Window {
    std::int64_t begin_ns = 0;
    std::int64_t end_ns = 0;
    TestStatus status = TestStatus::Fail;
    FailureKind failure = FailureKind::None;
    std::string detail;
  };

  // Runs the harness; ProtocolViolation is returned as a window with
  // begin == end so the caller can record it.
  Window run_harness(const TestId& test) {
    Window window;
    try {
      auto outcome = run_one(config.harness, test, *steady);
      window.begin_ns = outcome.begin_ns;
      window.end_ns = outcome.end_ns;
      window.status = outcome.status;
    } catch (const TestCrashedError& e) {
      window.begin_ns = e.begin_ns();
      window.end_ns = e.exit_ns();
      window.failure = e.timed_out() ? FailureKind::TimedOut : FailureKind::Crashed;
      window.detail = e.what();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ProtocolViolation) throw;
      window.failure = FailureKind::ProtocolError;
      window.detail = e.what();
    }
    return window;
  }

  TestExecutionResult protocol_failure(const TestId& test, int iteration,
                                       const Window& window) const {
    TestExecutionResult result;
    result.test = test;
    result.iteration = iteration;
    result.status = TestStatus::Fail;
    result.failure = FailureKind::ProtocolError;
    result.detail = window.detail;
    result.low_confidence = true;
    result.baseline_applied = sampler_config.baseline_w.has_value();
    for (const auto& domain : descriptor.domains) {
      result.energy_j[domain] = 0.0;
      result.mean_power_w[domain] = 0.0;
    }
    return result;
  }

  TestExecutionResult build_result(const TestId& test, int iteration,
                                   const Window& window, std::int64_t begin_ns,
                                   std::int64_t end_ns,
                                   std::vector<EnergySample> samples) const {
    TestExecutionResult result;
    result.test = test;
    result.iteration = iteration;
    result.begin_ns = begin_ns;
    result.end_ns = end_ns;
    result.duration_ns = end_ns - begin_ns;
    result.status = window.failure == FailureKind::None ? window.status
                                                        : TestStatus::Fail;
    result.failure = window.failure;
    result.detail = window.detail;
    result.low_confidence = result.duration_ns < descriptor.update_interval_ns;
    result.baseline_applied = sampler_config.baseline_w.has_value();
    const double seconds = static_cast<double>(result.duration_ns) / 1e9;
    for (const auto& domain : descriptor.domains) result.energy_j[domain] = 0.0;
    for (const auto& [domain, joules] : attribute(samples, begin_ns, end_ns)) {
      result.energy_j[domain] = joules;
    }
    for (const auto& [domain, joules] : result.energy_j) {
      result.mean_power_w[domain] = joules / seconds;
    }
    result.samples = std::move(samples);
    return result;
  }

  TestExecutionResult iterate_realtime(const TestId& test, int iteration) {
    BackgroundSampler sampler(*probe, sampler_config, *steady);
    sampler.start();
    Window window = run_harness(test);
    if (window.failure == FailureKind::ProtocolError) {
      sampler.finish_after(std::numeric_limits<std::int64_t>::min());
      auto stream = sampler.join();
      if (stream.error) throw *stream.error;
      return protocol_failure(test, iteration, window);
    }
    sampler.finish_after(window.end_ns);
    auto stream = sampler.join();
    if (stream.error) throw *stream.error;
    return build_result(test, iteration, window, window.begin_ns, window.end_ns,
                        std::move(stream.samples));
  }

  TestExecutionResult iterate_virtual(const TestId& test, int iteration) {
    Window window = run_harness(test);
    if (window.failure == FailureKind::ProtocolError) {
      return protocol_failure(test, iteration, window);
    }
    const std::int64_t measured = window.end_ns - window.begin_ns;
    const std::int64_t tick = descriptor.update_interval_ns;
    const std::int64_t duration = measured >= tick ? measured / tick * tick : measured;

    std::atomic<std::int64_t> finish{std::numeric_limits<std::int64_t>::max()};
    std::int64_t begin = 0;
    StreamControl control{{}, &finish, [&](const ProbeReading& first) {
                            begin = first.timestamp_ns;
                            finish.store(begin + duration);
                          }};
    auto stream = sample_stream(*probe, sampler_config, *virtual_clock, control);
    if (stream.error) throw *stream.error;
    return build_result(test, iteration, window, begin, begin + duration,
                        std::move(stream.samples));
  }
};

}  // namespace

RevisionRecord run_experiment(const ExperimentConfig& input,
                              const ExperimentHooks& hooks) {
  validate(input);
  ExperimentConfig config = input;
  config.revision_label =
      resolve_revision_label(config.revision_label, config.harness.working_dir);
  validate_revision_label(config.revision_label);

  Timeline timeline = config.timeline;
  if (timeline == Timeline::Auto) {
    timeline = config.probe.backend == ProbeBackend::Simulated ? Timeline::Virtual
                                                               : Timeline::Realtime;
  }

  DataDirLock lock(config.data_dir);

  std::vector<std::string> warnings;
  const auto discovered = discover(config.harness, &warnings);
  std::vector<TestId> selection = config.selection.empty() ? discovered : config.selection;
  for (const auto& id : config.selection) {
    if (std::find(discovered.begin(), discovered.end(), id) == discovered.end()) {
      warnings.push_back("selected test " + id.str() + " was not declared by the harness");
    }
  }
  Runner runner(config, hooks, timeline);
  for (const auto& w : warnings) runner.warn(w);
  if (selection.empty()) {
    throw Error(ErrorCode::ConfigError, "no tests selected (the harness declared none)");
  }

  runner.probe = make_probe(config.probe, timeline == Timeline::Virtual
                                              ? std::shared_ptr<Clock>(runner.virtual_clock)
                                              : std::shared_ptr<Clock>(runner.steady));
  runner.descriptor = runner.probe->enumerate_domains();
  runner.sampler_config.rate_hz = config.sampling_rate_hz;

  std::optional<BaselineProfile> baseline;
  switch (config.baseline.mode) {
    case BaselineMode::Off: break;
    case BaselineMode::Calibrate:
      baseline = calibrate_baseline(*runner.probe, config.baseline.calibrate_s,
                                    runner.probe_clock());
      break;
    case BaselineMode::Fixed:
      baseline = BaselineProfile{config.baseline.fixed_w, 0.0, 0};
      break;
  }
  if (baseline) runner.sampler_config.baseline_w = baseline->power_w;
  validate(runner.sampler_config);

  RevisionRecord record;
  record.revision_label = config.revision_label;
  record.config_digest = config_digest(config);
  record.config = config_entries(config);
  record.probe = runner.descriptor;
  record.sampling_rate_hz = config.sampling_rate_hz;
  record.iterations = config.iterations;
  record.baseline = baseline;

  for (std::size_t index = 0; index < selection.size(); ++index) {
    const TestId& test = selection[index];
    if (record.results.contains(test)) continue;
    std::vector<TestExecutionResult> results;
    for (int iteration = 0; iteration < config.iterations; ++iteration) {
      auto result = timeline == Timeline::Virtual
                        ? runner.iterate_virtual(test, iteration)
                        : runner.iterate_realtime(test, iteration);
      const bool protocol_error = result.failure == FailureKind::ProtocolError;
      if (protocol_error) runner.warn(result.detail);
      if (hooks.on_iteration) hooks.on_iteration(result);
      results.push_back(std::move(result));
      if (protocol_error) break;
    }
    auto summary = summarize(results);
    if (hooks.on_test_done) hooks.on_test_done(summary, index, selection.size());
    record.summaries[test] = std::move(summary);
    record.results[test] = std::move(results);
  }

  Store(config.data_dir).save(record);
  return record;
}

}  // namespace manai
