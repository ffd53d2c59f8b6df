#pragma once

#include <sys/types.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace manai {

struct SpawnOptions {
  std::string program;
  std::vector<std::string> args;
  std::filesystem::path working_dir;
  /// Added to (or replacing entries of) the parent's environment.
  std::map<std::string, std::string> env;
};

/// Child process with its standard output on a pipe. Standard input is
/// /dev/null and standard error is inherited. The destructor kills and
/// reaps a child that is still running.
class Subprocess {
 public:
  /// Throws HarnessSpawnFailed if the program cannot be started.
  static Subprocess spawn(const SpawnOptions& options);

  Subprocess(Subprocess&& other) noexcept;
  Subprocess& operator=(Subprocess&& other) noexcept;
  Subprocess(const Subprocess&) = delete;
  Subprocess& operator=(const Subprocess&) = delete;
  ~Subprocess();

  enum class ReadStatus { Line, Eof, Timeout };

  /// Next '\n'-terminated line without the terminator. A final unterminated
  /// fragment is returned as a line before Eof. `deadline_ns` is on the
  /// steady clock.
  ReadStatus read_line(std::string& line, std::int64_t deadline_ns);

  /// Reaps the child; returns its exit code, or 128 + signal.
  int wait();
  void kill();

  pid_t pid() const { return pid_; }

 private:
  Subprocess(pid_t pid, int stdout_fd) : pid_(pid), stdout_fd_(stdout_fd) {}

  pid_t pid_ = -1;
  int stdout_fd_ = -1;
  std::string buffer_;
  bool eof_ = false;
  std::optional<int> exit_code_;
};

struct CapturedOutput {
  int exit_code = 0;
  std::string output;
};

/// Runs to completion and returns standard output, every line terminated by
/// '\n'. Kills the child after `timeout_ns`.
CapturedOutput run_capture(const SpawnOptions& options, std::int64_t timeout_ns);

std::int64_t steady_now_ns();

}  // namespace manai
