#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace manai {

enum class ErrorCode {
  NoProbeAvailable,
  PermissionDenied,
  ReadFailed,
  MalformedScenario,
  InvalidArgument,
  DomainMismatch,
  ProbeLost,
  HarnessSpawnFailed,
  HarnessProtocolError,
  ProtocolViolation,
  TestCrashed,
  EmptyInput,
  StorageFailure,
  UnknownRevision,
  EmptyScope,
  NoHistory,
  ConfigError,
  LockHeld,
  Internal,
};

std::string_view to_string(ErrorCode code);

/// Base exception for everything the library reports. The code drives the
/// CLI exit-code mapping.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Harness process exited (or was killed on timeout) after BEGIN but before
/// END. Carries the boundary timestamps so the energy consumed so far can
/// still be attributed.
class TestCrashedError : public Error {
 public:
  TestCrashedError(const std::string& message, std::int64_t begin_ns,
                   std::int64_t exit_ns, bool timed_out)
      : Error(ErrorCode::TestCrashed, message),
        begin_ns_(begin_ns),
        exit_ns_(exit_ns),
        timed_out_(timed_out) {}

  std::int64_t begin_ns() const noexcept { return begin_ns_; }
  std::int64_t exit_ns() const noexcept { return exit_ns_; }
  bool timed_out() const noexcept { return timed_out_; }

 private:
  std::int64_t begin_ns_;
  std::int64_t exit_ns_;
  bool timed_out_;
};

}  // namespace manai
