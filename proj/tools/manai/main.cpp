// manai: per-test energy measurement from the command line.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <unistd.h>

#include "CLI11.hpp"
#include "manai/config.hpp"
#include "manai/error.hpp"
#include "manai/experiment.hpp"
#include "manai/harness.hpp"
#include "manai/probe.hpp"
#include "manai/report.hpp"
#include "manai/sampler.hpp"
#include "manai/store.hpp"

namespace fs = std::filesystem;
using namespace manai;

namespace {

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedScenario:
    case ErrorCode::InvalidArgument:
    case ErrorCode::ConfigError:
    case ErrorCode::UnknownRevision:
    case ErrorCode::EmptyScope:
    case ErrorCode::NoHistory:
    case ErrorCode::EmptyInput:
      return 1;
    case ErrorCode::NoProbeAvailable:
    case ErrorCode::PermissionDenied:
    case ErrorCode::ReadFailed:
    case ErrorCode::ProbeLost:
    case ErrorCode::HarnessSpawnFailed:
    case ErrorCode::HarnessProtocolError:
    case ErrorCode::LockHeld:
    case ErrorCode::StorageFailure:
      return 2;
    default:
      return 3;
  }
}

// Every flag that mirrors a config key. Values are applied through the same
// code path as config-file lines, after the file and the environment.
struct ConfigFlags {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> settings;
  std::vector<std::string> env;

  void add(CLI::App& app, std::string_view which) {
    app.add_option("--config", config_path, "Experiment config file")
        ->check(CLI::ExistingFile);
    mirror(app, "--data-dir", "store.data_dir", "Data directory (overrides MANAI_DATA_DIR)");
    if (which.find('p') != std::string_view::npos) {
      mirror(app, "--probe", "probe.backend", "rapl | simulated");
      mirror(app, "--scenario", "probe.scenario", "Simulation scenario file");
      mirror(app, "--powercap-root", "probe.powercap_root", "powercap sysfs root");
      mirror(app, "--update-interval-ns", "probe.update_interval_ns",
             "Override the probe update interval");
      mirror(app, "--timeline", "probe.timeline", "auto | realtime | virtual");
    }
    if (which.find('h') != std::string_view::npos) {
      mirror(app, "--harness", "harness.program", "Test executable");
      mirror(app, "--harness-args", "harness.args", "Arguments for test runs");
      mirror(app, "--list-args", "harness.list_args", "Arguments for discovery");
      mirror(app, "--working-dir", "harness.working_dir", "Harness working directory");
      mirror(app, "--timeout", "harness.timeout_s", "Per-test timeout in seconds");
      app.add_option("--env", env, "NAME=VALUE for the harness environment");
    }
    if (which.find('e') != std::string_view::npos) {
      mirror(app, "--rate", "experiment.rate", "Sampling rate in Hz");
      mirror(app, "--iterations", "experiment.iterations", "Iterations per test");
      mirror(app, "--select", "experiment.select", "Comma-separated test ids");
      mirror(app, "--revision", "experiment.revision", "Revision label");
      mirror(app, "--baseline", "experiment.baseline",
             "off | calibrate:<secs> | fixed:<domain>=<watts>,...");
    }
  }

  ExperimentConfig resolve() const {
    ExperimentConfig config;
    if (!config_path.empty()) load_config_file(config, config_path);
    const fs::path cwd = fs::current_path();
    if (const char* dir = std::getenv("MANAI_DATA_DIR"); dir && *dir) {
      apply_setting(config, "store.data_dir", dir, cwd);
    }
    for (const auto& [key, value] : settings) apply_setting(config, key, value, cwd);
    for (const auto& entry : env) {
      auto eq = entry.find('=');
      if (eq == std::string::npos) {
        throw Error(ErrorCode::ConfigError, "--env expects NAME=VALUE, got '" + entry + "'");
      }
      apply_setting(config, "harness.env." + entry.substr(0, eq), entry.substr(eq + 1), cwd);
    }
    return config;
  }

 private:
  void mirror(CLI::App& app, const std::string& flag, const std::string& key,
              const std::string& help) {
    app.add_option_function<std::string>(
        flag, [this, key](const std::string& value) { settings.emplace_back(key, value); },
        help);
  }
};

struct ViewFlags {
  std::string format = "term";
  std::string out;
  std::string domains;
  bool no_color = false;
  int width = 100;

  void add(CLI::App& app) {
    app.add_option("--format", format, "term | html | csv | machine")
        ->check(CLI::IsMember({"term", "html", "csv", "machine"}));
    app.add_option("--out", out, "Write the document to a file");
    app.add_option("--domains", domains, "Comma-separated domains to show");
    app.add_flag("--no-color", no_color, "Plain terminal output");
    app.add_option("--width", width, "Terminal width")->check(CLI::Range(40, 1000));
  }

  void apply(ReportRequest& request) const {
    request.format = *parse_report_format(format);
    if (!out.empty()) request.output_path = out;
    request.width = width;
    request.color = !no_color && out.empty() && ::isatty(STDOUT_FILENO) &&
                    std::getenv("NO_COLOR") == nullptr;
    std::string rest = domains;
    while (!rest.empty()) {
      auto comma = rest.find(',');
      std::string name = rest.substr(0, comma);
      rest = comma == std::string::npos ? "" : rest.substr(comma + 1);
      if (name.empty()) continue;
      auto domain = parse_domain(name);
      if (!domain) {
        if (auto kind = parse_domain_kind(name)) domain = EnergyDomain{*kind, 0};
      }
      if (!domain) throw Error(ErrorCode::InvalidArgument, "unknown domain '" + name + "'");
      request.domains.push_back(*domain);
    }
  }
};

void emit(const ReportRequest& request, const std::string& document) {
  if (request.output_path) {
    write_document(*request.output_path, document);
    std::cerr << "wrote " << request.output_path->string() << "\n";
  } else {
    std::cout << document << std::flush;
  }
}

void print_warnings(const Store& store) {
  for (const auto& w : store.take_warnings()) std::cerr << "warning: " << w << "\n";
}

int cmd_probe_check(const ConfigFlags& flags) {
  auto config = flags.resolve();
  auto probe = make_probe(config.probe, std::make_shared<SteadyClock>());
  const auto descriptor = probe->enumerate_domains();
  std::cout << "backend: " << to_string(descriptor.backend) << "\n";
  std::cout << "update_interval_ns: " << descriptor.update_interval_ns << "\n";
  std::cout << "domains:";
  for (const auto& d : descriptor.domains) std::cout << " " << to_string(d);
  std::cout << "\n";
  try {
    const auto reading = probe->read();
    std::cout << "read: ok";
    for (const auto& [domain, value] : reading.counters) {
      std::cout << " " << to_string(domain) << "=" << value << "uJ";
    }
    std::cout << "\n";
  } catch (const Error& e) {
    std::cout << "read: failed\n";
    throw;
  }
  return 0;
}

int cmd_list(const ConfigFlags& flags) {
  auto config = flags.resolve();
  if (config.harness.program.empty()) {
    throw Error(ErrorCode::ConfigError, "no harness program configured");
  }
  std::vector<std::string> warnings;
  auto tests = discover(config.harness, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  for (const auto& id : tests) std::cout << id.str() << "\n";
  return 0;
}

int cmd_run(const ConfigFlags& flags, const ViewFlags& view, bool dry_run) {
  auto config = flags.resolve();
  std::cout << "# effective configuration\n" << render_config(config) << std::flush;
  if (dry_run) return 0;

  ExperimentHooks hooks;
  hooks.on_warning = [](const std::string& w) { std::cerr << "warning: " << w << "\n"; };
  hooks.on_test_done = [](const TestSummary& s, std::size_t index, std::size_t total) {
    const EnergyDomain package{DomainKind::Package, 0};
    std::cout << "[" << index + 1 << "/" << total << "] " << s.test.str();
    auto it = s.energy_j.find(package);
    if (it == s.energy_j.end() && !s.energy_j.empty()) it = s.energy_j.begin();
    if (it != s.energy_j.end()) {
      std::cout << "  " << format_sig3(it->second.mean) << " J " << to_string(it->first);
    }
    std::cout << "  pass/fail/skip " << s.pass_count << "/" << s.fail_count << "/"
              << s.skip_count;
    if (s.any_low_confidence) std::cout << "  (< update interval)";
    std::cout << "\n" << std::flush;
  };
  auto record = run_experiment(config, hooks);
  std::cout << "\n";

  ReportRequest request;
  view.apply(request);
  const auto document = render_summary(record, request);
  if (request.output_path) {
    emit(request, document);
    ReportRequest term = request;
    term.format = ReportFormat::Term;
    term.output_path.reset();
    std::cout << render_summary(record, term);
  } else {
    std::cout << document;
  }
  return 0;
}

int cmd_report(const ConfigFlags& flags, const ViewFlags& view, const std::string& revision,
               bool history, const std::string& tests, std::optional<std::size_t> limit) {
  auto config = flags.resolve();
  Store store(config.data_dir);
  ReportRequest request;
  view.apply(request);
  request.scope.revision = revision;
  if (history || !tests.empty() || limit) {
    request.scope.kind = ScopeKind::History;
    ExperimentConfig parsed;
    apply_setting(parsed, "experiment.select", tests, {});
    request.scope.tests = parsed.selection;
    request.scope.limit = limit;
  }
  const auto document = render_report(store, request);
  print_warnings(store);
  emit(request, document);
  return 0;
}

int cmd_compare(const ConfigFlags& flags, const ViewFlags& view, const std::string& a,
                const std::string& b) {
  auto config = flags.resolve();
  Store store(config.data_dir);
  ReportRequest request;
  view.apply(request);
  request.scope.kind = ScopeKind::Compare;
  request.scope.revision = a;
  request.scope.other = b;
  const auto document = render_report(store, request);
  print_warnings(store);
  emit(request, document);
  return 0;
}

int cmd_baseline(const ConfigFlags& flags, double seconds) {
  auto config = flags.resolve();
  std::shared_ptr<Clock> clock;
  const bool virtual_time = config.probe.backend == ProbeBackend::Simulated &&
                            config.timeline != Timeline::Realtime;
  if (virtual_time) {
    clock = std::make_shared<ManualClock>(0);
  } else {
    clock = std::make_shared<SteadyClock>();
  }
  auto probe = make_probe(config.probe, clock);
  const auto profile = calibrate_baseline(*probe, seconds, *clock);
  std::string fixed = "fixed:";
  for (const auto& [domain, watts] : profile.power_w) {
    std::cout << to_string(domain) << ": " << format_sig3(watts) << " W\n";
    if (fixed.size() > 6) fixed += ",";
    fixed += to_string(domain) + "=" + std::to_string(watts);
  }
  std::cout << "# experiment.baseline=" << fixed << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Per-test energy measurement for test suites"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  ConfigFlags flags;
  ViewFlags view;

  auto* probe_check = app.add_subcommand("probe-check", "Describe the energy probe");
  flags.add(*probe_check, "p");

  auto* list = app.add_subcommand("list", "List the tests a harness declares");
  flags.add(*list, "h");

  bool dry_run = false;
  auto* run = app.add_subcommand("run", "Run an energy experiment and store the record");
  flags.add(*run, "phe");
  view.add(*run);
  run->add_flag("--dry-run", dry_run, "Only print the effective configuration");

  std::string revision;
  bool history = false;
  std::string tests;
  std::optional<std::size_t> limit;
  auto* report = app.add_subcommand("report", "Render stored results");
  flags.add(*report, "");
  view.add(*report);
  report->add_option("--revision", revision, "Revision to show (default: newest)");
  report->add_flag("--history", history, "Show the evolution across revisions");
  report->add_option("--select", tests, "Tests for the history view");
  report->add_option("--limit", limit, "Newest points per test in the history view");

  std::string rev_a;
  std::string rev_b;
  auto* compare = app.add_subcommand("compare", "Compare two stored revisions");
  flags.add(*compare, "");
  view.add(*compare);
  compare->add_option("a", rev_a, "Baseline revision")->required();
  compare->add_option("b", rev_b, "Revision to compare")->required();

  double seconds = 5.0;
  auto* baseline = app.add_subcommand("baseline", "Measure idle power");
  flags.add(*baseline, "p");
  baseline->add_option("--duration", seconds, "Calibration time in seconds")
      ->check(CLI::Range(1.0, 3600.0));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*probe_check) return cmd_probe_check(flags);
    if (*list) return cmd_list(flags);
    if (*run) return cmd_run(flags, view, dry_run);
    if (*report) return cmd_report(flags, view, revision, history, tests, limit);
    if (*compare) return cmd_compare(flags, view, rev_a, rev_b);
    if (*baseline) return cmd_baseline(flags, seconds);
  } catch (const Error& e) {
    std::cout << std::flush;
    std::cerr << "manai: " << to_string(e.code()) << ": " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cout << std::flush;
    std::cerr << "manai: internal error: " << e.what() << "\n";
    return 3;
  }
  return 3;
}
