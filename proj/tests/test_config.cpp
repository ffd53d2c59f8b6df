#include <random>

#include "doctest.h"
#include "manai/config.hpp"
#include "manai/error.hpp"
#include "support.hpp"

using namespace manai;
using testing::TempDir;

namespace {

std::string config_error_message(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) return e.what();
    return "wrong code";
  }
  return "no error";
}

const char* kSample = R"(# sample
[harness]
program = ./bin/harness
args = --run "two words" x\"y
list_args = --list
working_dir = work
timeout_s = 2.5
env.FOO = bar baz

[probe]
backend = simulated
scenario = scenario.txt
update_interval_ns = 1000000
timeline = virtual

[experiment]
rate = 250
iterations = 4
select = a::b, c::d
revision = r-1.2
baseline = fixed:package-0=3.5,dram=0.25

[store]
data_dir = data
)";

}  // namespace

TEST_SUITE("config") {

TEST_CASE("parsing a config file") {
  ExperimentConfig c;
  parse_config_text(c, kSample, "/base");
  CHECK(c.harness.program == "/base/bin/harness");
  CHECK(c.harness.args == std::vector<std::string>{"--run", "two words", "x\"y"});
  CHECK(c.harness.list_args == std::vector<std::string>{"--list"});
  CHECK(c.harness.working_dir == "/base/work");
  CHECK(c.harness.timeout_ns == 2'500'000'000);
  CHECK(c.harness.env.at("FOO") == "bar baz");
  CHECK(c.probe.backend == ProbeBackend::Simulated);
  CHECK(c.probe.scenario == "/base/scenario.txt");
  CHECK(c.probe.update_interval_ns == 1'000'000);
  CHECK(c.timeline == Timeline::Virtual);
  CHECK(c.sampling_rate_hz == 250.0);
  CHECK(c.iterations == 4);
  CHECK(c.selection == std::vector<TestId>{TestId::parse("a::b"), TestId::parse("c::d")});
  CHECK(c.revision_label == "r-1.2");
  CHECK(c.baseline.mode == BaselineMode::Fixed);
  CHECK(c.data_dir == "/base/data");
}

TEST_CASE("a bare program name is looked up on PATH") {
  ExperimentConfig c;
  apply_setting(c, "harness.program", "cargo", "/base");
  CHECK(c.harness.program == "cargo");
}

TEST_CASE("rendering and parsing round-trips") {
  ExperimentConfig c;
  parse_config_text(c, kSample, "/base");
  const auto rendered = render_config(c);
  ExperimentConfig again;
  parse_config_text(again, rendered, "/elsewhere");
  CHECK(render_config(again) == rendered);
  CHECK(config_entries(again) == config_entries(c));
  CHECK(config_digest(again) == config_digest(c));
}

TEST_CASE("file settings and individual settings agree") {
  TempDir dir;
  testing::write_file(dir / "exp.cfg", kSample);
  ExperimentConfig from_file;
  load_config_file(from_file, dir / "exp.cfg");

  ExperimentConfig from_flags;
  const std::vector<std::pair<std::string, std::string>> flags = {
      {"harness.program", "./bin/harness"},
      {"harness.args", R"(--run "two words" x\"y)"},
      {"harness.list_args", "--list"},
      {"harness.working_dir", "work"},
      {"harness.timeout_s", "2.5"},
      {"harness.env.FOO", "bar baz"},
      {"probe.backend", "simulated"},
      {"probe.scenario", "scenario.txt"},
      {"probe.update_interval_ns", "1000000"},
      {"probe.timeline", "virtual"},
      {"experiment.rate", "250"},
      {"experiment.iterations", "4"},
      {"experiment.select", "a::b,c::d"},
      {"experiment.revision", "r-1.2"},
      {"experiment.baseline", "fixed:package-0=3.5,dram=0.25"},
      {"store.data_dir", "data"},
  };
  for (const auto& [key, value] : flags) apply_setting(from_flags, key, value, dir.path());
  CHECK(render_config(from_flags) == render_config(from_file));
}

TEST_CASE("digest ignores the store section only") {
  ExperimentConfig a;
  parse_config_text(a, kSample, "/base");
  const auto digest = config_digest(a);
  CHECK(digest.size() == 64);
  CHECK(digest.find_first_not_of("0123456789abcdef") == std::string::npos);
  CHECK(config_digest(a) == digest);

  auto b = a;
  b.data_dir = "/somewhere/else";
  CHECK(config_digest(b) == digest);

  auto c = a;
  c.sampling_rate_hz = 251;
  CHECK(config_digest(c) != digest);
  auto d = a;
  d.harness.env["EXTRA"] = "1";
  CHECK(config_digest(d) != digest);
}

TEST_CASE("errors name the offending line") {
  ExperimentConfig c;
  auto msg = config_error_message([&] { parse_config_text(c, "[probe]\nbogus = 1\n", "/"); });
  CHECK(msg.find("line 2") != std::string::npos);
  CHECK(msg.find("bogus") != std::string::npos);
  CHECK(config_error_message([&] { parse_config_text(c, "[nope]\n", "/"); })
            .find("unknown section") != std::string::npos);
  CHECK(config_error_message([&] { parse_config_text(c, "rate = 1\n", "/"); })
            .find("outside") != std::string::npos);
  CHECK(config_error_message([&] { parse_config_text(c, "[probe\n", "/"); }) != "no error");
  CHECK(config_error_message([&] { parse_config_text(c, "[probe]\nbackend\n", "/"); }) !=
        "no error");
  for (auto [key, value] :
       {std::pair{"experiment.rate", "0"}, std::pair{"experiment.rate", "-3"},
        std::pair{"experiment.rate", "fast"}, std::pair{"experiment.iterations", "0"},
        std::pair{"experiment.iterations", "2.5"}, std::pair{"probe.backend", "gpu"},
        std::pair{"probe.timeline", "later"}, std::pair{"probe.update_interval_ns", "-1"},
        std::pair{"experiment.select", "nope"}, std::pair{"experiment.revision", "a/b"},
        std::pair{"experiment.baseline", "sometimes"}, std::pair{"harness.timeout_s", "0"},
        std::pair{"store.data_dir", ""}, std::pair{"harness.args", "\"open"}}) {
    CAPTURE(key);
    CAPTURE(value);
    CHECK(config_error_message([&] { apply_setting(c, key, value, "/"); }) != "no error");
  }
  CHECK(config_error_message([&] { load_config_file(c, "/nonexistent/x.cfg"); }) !=
        "no error");
}

TEST_CASE("argument splitting round-trips") {
  CHECK(split_args("") == std::vector<std::string>{});
  CHECK(split_args("  a   b ") == std::vector<std::string>{"a", "b"});
  CHECK(split_args(R"("" x)") == std::vector<std::string>{"", "x"});
  CHECK(split_args(R"(a\ b)") == std::vector<std::string>{"a b"});

  std::mt19937_64 rng(3);
  const std::string alphabet = "ab \t\"\\-=";
  for (int round = 0; round < 500; ++round) {
    std::vector<std::string> args(rng() % 5);
    for (auto& arg : args) {
      const auto len = rng() % 6;
      for (std::size_t i = 0; i < len; ++i) arg += alphabet[rng() % alphabet.size()];
    }
    CAPTURE(join_args(args));
    CHECK(split_args(join_args(args)) == args);
  }
}

}  // TEST_SUITE
