#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "manai/clock.hpp"

namespace manai {

/// `suite::name`. Neither part may be empty, contain whitespace, or contain
/// the `::` separator.
struct TestId {
  std::string suite;
  std::string name;

  /// Throws InvalidArgument on a malformed id.
  static TestId parse(std::string_view text);
  static std::optional<TestId> try_parse(std::string_view text);

  std::string str() const { return suite + "::" + name; }

  auto operator<=>(const TestId&) const = default;
};

enum class TestStatus { Pass, Fail, Skip };

std::string_view to_string(TestStatus status);
std::optional<TestStatus> parse_test_status(std::string_view text);

inline constexpr std::int64_t kDefaultHarnessTimeoutNs = 300'000'000'000;

struct HarnessCommand {
  std::string program;
  std::vector<std::string> args;
  std::filesystem::path working_dir;
  std::map<std::string, std::string> env;
  /// Arguments used instead of `args` for discovery.
  std::vector<std::string> list_args;
  /// Upper bound for one discovery or test run, after which the child is
  /// killed.
  std::int64_t timeout_ns = kDefaultHarnessTimeoutNs;
};

enum class EventKind { Declared, Begin, End };

struct TestEvent {
  EventKind kind = EventKind::Declared;
  TestId test;
  std::optional<TestStatus> status;
  std::int64_t timestamp_ns = 0;
};

inline constexpr std::string_view kMarkerPrefix = "##MANAI:";
inline constexpr const char* kFilterEnv = "MANAI_FILTER";

/// Classifies one line of harness output. Lines without the marker prefix
/// are NotProtocol; prefixed lines that do not follow the grammar are
/// Malformed.
struct ParsedLine {
  enum class Kind { NotProtocol, Event, Malformed } kind = Kind::NotProtocol;
  TestEvent event;
  std::string problem;
};

ParsedLine parse_protocol_line(std::string_view line, std::int64_t timestamp_ns);

/// Launches `program list_args` and returns declared tests in declaration
/// order without duplicates. Ids differing only in case are kept and
/// reported through `warnings`.
std::vector<TestId> discover(const HarnessCommand& cmd,
                             std::vector<std::string>* warnings = nullptr);

struct RunOutcome {
  std::int64_t begin_ns = 0;
  std::int64_t end_ns = 0;
  TestStatus status = TestStatus::Pass;
};

/// Runs a single test with MANAI_FILTER set. Boundary timestamps come from
/// `clock` at marker arrival. Throws ProtocolViolation or TestCrashedError;
/// a run that exceeds the timeout after BEGIN is reported as crashed.
RunOutcome run_one(const HarnessCommand& cmd, const TestId& test, Clock& clock);

}  // namespace manai
