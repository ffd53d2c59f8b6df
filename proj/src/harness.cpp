#include "manai/harness.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "manai/error.hpp"
#include "manai/process.hpp"

namespace manai {

namespace {

bool valid_part(std::string_view part) {
  if (part.empty() || part.find("::") != std::string_view::npos) return false;
  return std::none_of(part.begin(), part.end(), [](unsigned char c) {
    return std::isspace(c) != 0;
  });
}

std::string lowercase(std::string text) {
  std::transform(text.begin(), text.end(), text.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return text;
}

}  // namespace

std::optional<TestId> TestId::try_parse(std::string_view text) {
  auto sep = text.find("::");
  if (sep == std::string_view::npos) return std::nullopt;
  TestId id{std::string(text.substr(0, sep)), std::string(text.substr(sep + 2))};
  if (!valid_part(id.suite) || !valid_part(id.name)) return std::nullopt;
  // A name starting with ':' would make "a:::b" ambiguous.
  if (id.name.front() == ':' || id.suite.back() == ':') return std::nullopt;
  return id;
}

TestId TestId::parse(std::string_view text) {
  auto id = try_parse(text);
  if (!id) {
    throw Error(ErrorCode::InvalidArgument,
                "malformed test id '" + std::string(text) +
                    "' (expected <suite>::<name>)");
  }
  return *id;
}

std::string_view to_string(TestStatus status) {
  switch (status) {
    case TestStatus::Pass: return "PASS";
    case TestStatus::Fail: return "FAIL";
    case TestStatus::Skip: return "SKIP";
  }
  return "FAIL";
}

std::optional<TestStatus> parse_test_status(std::string_view text) {
  if (text == "PASS") return TestStatus::Pass;
  if (text == "FAIL") return TestStatus::Fail;
  if (text == "SKIP") return TestStatus::Skip;
  return std::nullopt;
}

ParsedLine parse_protocol_line(std::string_view line, std::int64_t timestamp_ns) {
  ParsedLine parsed;
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  if (!line.starts_with(kMarkerPrefix)) return parsed;
  line.remove_prefix(kMarkerPrefix.size());

  auto malformed = [&](std::string problem) {
    parsed.kind = ParsedLine::Kind::Malformed;
    parsed.problem = std::move(problem);
    return parsed;
  };

  auto space = line.find(' ');
  if (space == std::string_view::npos) return malformed("marker without test id");
  const std::string_view verb = line.substr(0, space);
  std::string_view rest = line.substr(space + 1);

  TestEvent event;
  event.timestamp_ns = timestamp_ns;
  std::string_view id_text = rest;
  if (verb == "TEST") {
    event.kind = EventKind::Declared;
  } else if (verb == "BEGIN") {
    event.kind = EventKind::Begin;
  } else if (verb == "END") {
    event.kind = EventKind::End;
    auto last = rest.rfind(' ');
    if (last == std::string_view::npos) return malformed("END without status");
    auto status = parse_test_status(rest.substr(last + 1));
    if (!status) {
      return malformed("unknown status '" + std::string(rest.substr(last + 1)) + "'");
    }
    event.status = status;
    id_text = rest.substr(0, last);
  } else {
    return malformed("unknown marker '" + std::string(verb) + "'");
  }

  auto id = TestId::try_parse(id_text);
  if (!id) return malformed("malformed test id '" + std::string(id_text) + "'");
  event.test = std::move(*id);
  parsed.kind = ParsedLine::Kind::Event;
  parsed.event = std::move(event);
  return parsed;
}

std::vector<TestId> discover(const HarnessCommand& cmd,
                             std::vector<std::string>* warnings) {
  SpawnOptions options{cmd.program, cmd.list_args, cmd.working_dir, cmd.env};
  auto child = Subprocess::spawn(options);
  const std::int64_t deadline = steady_now_ns() + cmd.timeout_ns;

  std::vector<TestId> tests;
  std::set<TestId> seen;
  std::map<std::string, std::string> by_folded_case;
  std::string line;
  std::size_t line_no = 0;
  while (true) {
    auto status = child.read_line(line, deadline);
    if (status == Subprocess::ReadStatus::Eof) break;
    if (status == Subprocess::ReadStatus::Timeout) {
      child.kill();
      throw Error(ErrorCode::HarnessProtocolError,
                  "test listing did not finish within the harness timeout");
    }
    ++line_no;
    auto parsed = parse_protocol_line(line, 0);
    if (parsed.kind == ParsedLine::Kind::NotProtocol) continue;
    if (parsed.kind == ParsedLine::Kind::Malformed) {
      throw Error(ErrorCode::HarnessProtocolError,
                  "listing output line " + std::to_string(line_no) + ": " +
                      parsed.problem);
    }
    if (parsed.event.kind != EventKind::Declared) {
      throw Error(ErrorCode::HarnessProtocolError,
                  "listing output line " + std::to_string(line_no) +
                      ": BEGIN/END markers are not allowed while listing");
    }
    const TestId& id = parsed.event.test;
    if (!seen.insert(id).second) continue;
    auto [it, fresh] = by_folded_case.emplace(lowercase(id.str()), id.str());
    if (!fresh && warnings) {
      warnings->push_back("test '" + id.str() + "' differs from '" +
                          it->second + "' only in letter case");
    }
    tests.push_back(id);
  }
  const int exit_code = child.wait();
  if (exit_code != 0 && warnings) {
    warnings->push_back("listing command exited with status " +
                        std::to_string(exit_code));
  }
  return tests;
}

RunOutcome run_one(const HarnessCommand& cmd, const TestId& test, Clock& clock) {
  SpawnOptions options{cmd.program, cmd.args, cmd.working_dir, cmd.env};
  options.env[kFilterEnv] = test.str();
  auto child = Subprocess::spawn(options);
  const std::int64_t deadline = steady_now_ns() + cmd.timeout_ns;

  auto violation = [&](const std::string& what) -> Error {
    child.kill();
    return Error(ErrorCode::ProtocolViolation, test.str() + ": " + what);
  };

  std::optional<std::int64_t> begin;
  std::optional<RunOutcome> outcome;
  std::string line;
  while (true) {
    auto status = child.read_line(line, deadline);
    const std::int64_t now = clock.now_ns();
    if (status == Subprocess::ReadStatus::Line) {
      auto parsed = parse_protocol_line(line, now);
      if (parsed.kind == ParsedLine::Kind::NotProtocol) continue;
      if (parsed.kind == ParsedLine::Kind::Malformed) throw violation(parsed.problem);
      const TestEvent& event = parsed.event;
      if (event.kind == EventKind::Declared) continue;
      if (event.test != test) {
        throw violation("marker for unexpected test '" + event.test.str() + "'");
      }
      if (event.kind == EventKind::Begin) {
        if (begin) throw violation("duplicate BEGIN");
        begin = event.timestamp_ns;
      } else {
        if (!begin) throw violation("END without BEGIN");
        if (outcome) throw violation("duplicate END");
        // Both markers can arrive in one read; keep the window non-empty.
        outcome = RunOutcome{*begin, std::max(event.timestamp_ns, *begin + 1),
                             *event.status};
      }
      continue;
    }

    if (status == Subprocess::ReadStatus::Timeout) {
      child.kill();
      child.wait();
      if (outcome) return *outcome;
      if (begin) {
        throw TestCrashedError(test.str() + ": no END within the harness timeout",
                               *begin, std::max(now, *begin + 1), true);
      }
      throw Error(ErrorCode::ProtocolViolation,
                  test.str() + ": no BEGIN within the harness timeout");
    }

    // End of output.
    const int exit_code = child.wait();
    if (outcome) return *outcome;
    if (begin) {
      throw TestCrashedError(test.str() + ": harness exited (status " +
                                 std::to_string(exit_code) + ") before END",
                             *begin, std::max(now, *begin + 1), false);
    }
    throw Error(ErrorCode::ProtocolViolation,
                test.str() + ": harness exited (status " +
                    std::to_string(exit_code) + ") without BEGIN");
  }
}

}  // namespace manai
