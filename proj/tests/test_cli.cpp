#include "doctest.h"
#include "manai/process.hpp"
#include "manai/store.hpp"
#include "support.hpp"

using namespace manai;
using testing::TempDir;
namespace fs = std::filesystem;

namespace {

constexpr std::int64_t kTimeout = 60'000'000'000;

struct CliRun {
  int exit_code = -1;
  std::string output;
};

/// Runs the manai binary with stderr merged into stdout.
CliRun cli(const std::vector<std::string>& args, const fs::path& cwd,
           std::map<std::string, std::string> env = {}) {
  SpawnOptions options;
  options.program = "/bin/sh";
  options.args = {"-c", "exec \"$0\" \"$@\" 2>&1", testing::cli_path()};
  options.args.insert(options.args.end(), args.begin(), args.end());
  options.working_dir = cwd;
  env.try_emplace("MANAI_DATA_DIR", "");
  options.env = std::move(env);
  auto out = run_capture(options, kTimeout);
  return {out.exit_code, out.output};
}

std::vector<std::string> harness_flags() {
  return {"--probe", "simulated", "--scenario", "scenario.txt", "--harness",
          testing::fixture_path(), "--harness-args", "s::a@sleep_ms=40 s::b@sleep_ms=20",
          "--list-args", "--list s::a@sleep_ms=40 s::b@sleep_ms=20"};
}

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

std::vector<std::string> labels(const fs::path& data_dir) {
  std::vector<std::string> out;
  for (const auto& r : Store(data_dir).load_all()) out.push_back(r.revision_label);
  return out;
}

void write_scenario(const TempDir& dir) {
  testing::write_file(dir / "scenario.txt",
                      "update_interval_ns=10000000\nduration_ns=1000000000 package=10 dram=1\n");
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with 1") {
  TempDir dir;
  CHECK(cli({}, dir.path()).exit_code == 1);
  CHECK(cli({"frobnicate"}, dir.path()).exit_code == 1);
  CHECK(cli({"report", "--format", "pdf"}, dir.path()).exit_code == 1);
  CHECK(cli({"run", "--config", "missing.cfg"}, dir.path()).exit_code == 1);
  CHECK(cli({"--help"}, dir.path()).exit_code == 0);
}

TEST_CASE("probe-check") {
  TempDir dir;
  auto missing = cli({"probe-check", "--powercap-root", (dir / "nothing").string()}, dir.path());
  CHECK(missing.exit_code == 2);
  CHECK(missing.output.find("NoProbeAvailable") != std::string::npos);

  write_scenario(dir);
  auto sim = cli({"probe-check", "--probe", "simulated", "--scenario", "scenario.txt"},
                 dir.path());
  CHECK(sim.exit_code == 0);
  CHECK(sim.output.find("domains: package-0 dram-0") != std::string::npos);
  CHECK(sim.output.find("update_interval_ns: 10000000") != std::string::npos);

  testing::write_file(dir / "bad.txt", "duration_ns=oops\n");
  CHECK(cli({"probe-check", "--probe", "simulated", "--scenario", "bad.txt"}, dir.path())
            .exit_code == 1);
}

TEST_CASE("list") {
  TempDir dir;
  auto out = cli(with({"list"}, {"--harness", testing::fixture_path(), "--list-args",
                                 "--list x::one y::two"}),
                 dir.path());
  CHECK(out.exit_code == 0);
  CHECK(out.output == "x::one\ny::two\n");
  auto spawn = cli({"list", "--harness", "/nonexistent/harness"}, dir.path());
  CHECK(spawn.exit_code == 2);
}

TEST_CASE("headless run, reports and exports") {
  TempDir dir;
  write_scenario(dir);
  auto run = cli(with({"run", "--revision", "r1", "--iterations", "2", "--data-dir", "data"},
                      harness_flags()),
                 dir.path());
  CAPTURE(run.output);
  REQUIRE(run.exit_code == 0);
  CHECK(run.output.find("# effective configuration") != std::string::npos);
  CHECK(run.output.find("[1/2] s::a") != std::string::npos);
  CHECK(run.output.find("[2/2] s::b") != std::string::npos);
  CHECK(run.output.find("\x1b[") == std::string::npos);

  Store store(dir / "data");
  const auto record = store.latest("r1");
  CHECK(record.summaries.size() == 2);
  CHECK(record.iterations == 2);

  auto second = cli(with({"run", "--revision", "r2", "--data-dir", "data", "--select", "s::b"},
                         harness_flags()),
                    dir.path());
  REQUIRE(second.exit_code == 0);

  auto csv = cli({"report", "--data-dir", "data", "--revision", "r1", "--format", "csv"},
                 dir.path());
  CHECK(csv.exit_code == 0);
  CHECK(csv.output.starts_with("test,domain,statistic,value,unit\n"));

  auto machine = cli({"report", "--data-dir", "data", "--revision", "r1", "--format",
                      "machine", "--out", "r1.json"},
                     dir.path());
  CHECK(machine.exit_code == 0);
  CHECK(parse_record(testing::read_file(dir / "r1.json")) == record);

  auto newest = cli({"report", "--data-dir", "data"}, dir.path());
  CHECK(newest.output.find("revision r2") != std::string::npos);

  auto unknown = cli({"report", "--data-dir", "data", "--revision", "nope"}, dir.path());
  CHECK(unknown.exit_code == 1);
  CHECK(unknown.output.find("unknown revision") != std::string::npos);

  auto compare = cli({"compare", "r1", "r2", "--data-dir", "data", "--format", "csv"},
                     dir.path());
  CHECK(compare.exit_code == 0);
  CHECK(compare.output.find("s::b,package-0,delta:energy_mean,") != std::string::npos);
  CHECK(compare.output.find("s::a,package-0,delta:energy_mean,") == std::string::npos);

  auto history = cli({"report", "--data-dir", "data", "--history", "--select", "s::b"},
                     dir.path());
  CHECK(history.exit_code == 0);
  CHECK(history.output.find("r1 .. r2 (2)") != std::string::npos);
  auto no_history = cli({"report", "--data-dir", "data", "--select", "z::z"}, dir.path());
  CHECK(no_history.exit_code == 1);

  auto html = cli({"report", "--data-dir", "data", "--format", "html", "--out", "r.html"},
                  dir.path());
  CHECK(html.exit_code == 0);
  CHECK(testing::read_file(dir / "r.html").starts_with("<!DOCTYPE html>"));

  auto empty = cli({"report", "--data-dir", "empty"}, dir.path());
  CHECK(empty.exit_code == 1);
}

TEST_CASE("dry run echoes the same configuration from a file or from flags") {
  TempDir dir;
  write_scenario(dir);
  testing::write_file(dir / "exp.cfg",
                      "[harness]\nprogram = " + testing::fixture_path() +
                          "\nargs = s::a\nlist_args = --list s::a\ntimeout_s = 7\n"
                          "env.MODE = fast\n"
                          "[probe]\nbackend = simulated\nscenario = scenario.txt\n"
                          "[experiment]\nrate = 50\niterations = 3\nrevision = v1\n"
                          "baseline = calibrate:2\n[store]\ndata_dir = data\n");
  auto from_file = cli({"run", "--dry-run", "--config", "exp.cfg"}, dir.path());
  auto from_flags = cli({"run", "--dry-run", "--harness", testing::fixture_path(),
                         "--harness-args", "s::a", "--list-args", "--list s::a", "--timeout",
                         "7", "--env", "MODE=fast", "--probe", "simulated", "--scenario",
                         "scenario.txt", "--rate", "50", "--iterations", "3", "--revision",
                         "v1", "--baseline", "calibrate:2", "--data-dir", "data"},
                        dir.path());
  CHECK(from_file.exit_code == 0);
  CHECK(from_file.output == from_flags.output);
  CHECK(from_file.output.find("rate=50") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "data"));

  auto overridden = cli({"run", "--dry-run", "--config", "exp.cfg", "--rate", "75"},
                        dir.path());
  CHECK(overridden.output.find("rate=75") != std::string::npos);
}

TEST_CASE("data directory from the environment, flag wins") {
  TempDir dir;
  write_scenario(dir);
  const std::map<std::string, std::string> env = {{"MANAI_DATA_DIR", (dir / "env").string()}};
  auto run = cli(with({"run", "--revision", "e1"}, harness_flags()), dir.path(), env);
  REQUIRE(run.exit_code == 0);
  CHECK(labels(dir / "env") == std::vector<std::string>{"e1"});

  auto flagged = cli(with({"run", "--revision", "f1", "--data-dir", "flag"}, harness_flags()),
                     dir.path(), env);
  REQUIRE(flagged.exit_code == 0);
  CHECK(labels(dir / "flag") == std::vector<std::string>{"f1"});
  CHECK(labels(dir / "env") == std::vector<std::string>{"e1"});
}

TEST_CASE("baseline calibration prints a fixed setting") {
  TempDir dir;
  write_scenario(dir);
  auto out = cli({"baseline", "--probe", "simulated", "--scenario", "scenario.txt",
                  "--duration", "1"},
                 dir.path());
  CHECK(out.exit_code == 0);
  CHECK(out.output.find("package-0: 10.0 W") != std::string::npos);
  CHECK(out.output.find("# experiment.baseline=fixed:package-0=") != std::string::npos);
}

}  // TEST_SUITE
