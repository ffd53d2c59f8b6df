#include "manai/process.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <utility>

#include "manai/error.hpp"

extern char** environ;

namespace manai {

std::int64_t steady_now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

namespace {

[[noreturn]] void spawn_failed(const std::string& program, int err) {
  throw Error(ErrorCode::HarnessSpawnFailed,
              "cannot start '" + program + "': " + std::strerror(err));
}

std::vector<std::string> merged_environment(
    const std::map<std::string, std::string>& overrides) {
  std::vector<std::string> env;
  for (char** entry = environ; entry && *entry; ++entry) {
    std::string kv(*entry);
    auto eq = kv.find('=');
    if (eq != std::string::npos && overrides.contains(kv.substr(0, eq))) continue;
    env.push_back(std::move(kv));
  }
  for (const auto& [key, value] : overrides) env.push_back(key + "=" + value);
  return env;
}

}  // namespace

Subprocess Subprocess::spawn(const SpawnOptions& options) {
  if (options.program.empty()) {
    throw Error(ErrorCode::HarnessSpawnFailed, "harness program is empty");
  }
  if (!options.working_dir.empty()) {
    std::error_code ec;
    if (!std::filesystem::is_directory(options.working_dir, ec)) {
      throw Error(ErrorCode::HarnessSpawnFailed,
                  "working directory " + options.working_dir.string() +
                      " does not exist");
    }
  }

  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) spawn_failed(options.program, errno);

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, STDIN_FILENO, "/dev/null",
                                   O_RDONLY, 0);
  posix_spawn_file_actions_adddup2(&actions, fds[1], STDOUT_FILENO);
  if (!options.working_dir.empty()) {
    posix_spawn_file_actions_addchdir_np(&actions,
                                         options.working_dir.c_str());
  }

  std::vector<std::string> argv_storage;
  argv_storage.push_back(options.program);
  argv_storage.insert(argv_storage.end(), options.args.begin(),
                      options.args.end());
  std::vector<char*> argv;
  for (auto& arg : argv_storage) argv.push_back(arg.data());
  argv.push_back(nullptr);

  auto env_storage = merged_environment(options.env);
  std::vector<char*> envp;
  for (auto& kv : env_storage) envp.push_back(kv.data());
  envp.push_back(nullptr);

  pid_t pid = -1;
  const int rc = ::posix_spawnp(&pid, options.program.c_str(), &actions,
                                nullptr, argv.data(), envp.data());
  posix_spawn_file_actions_destroy(&actions);
  ::close(fds[1]);
  if (rc != 0) {
    ::close(fds[0]);
    spawn_failed(options.program, rc);
  }
  return Subprocess(pid, fds[0]);
}

Subprocess::Subprocess(Subprocess&& other) noexcept
    : pid_(other.pid_),
      stdout_fd_(other.stdout_fd_),
      buffer_(std::move(other.buffer_)),
      eof_(other.eof_),
      exit_code_(other.exit_code_) {
  other.pid_ = -1;
  other.stdout_fd_ = -1;
}

Subprocess& Subprocess::operator=(Subprocess&& other) noexcept {
  if (this != &other) {
    if (pid_ > 0 && !exit_code_) {
      kill();
      wait();
    }
    if (stdout_fd_ >= 0) ::close(stdout_fd_);
    pid_ = std::exchange(other.pid_, -1);
    stdout_fd_ = std::exchange(other.stdout_fd_, -1);
    buffer_ = std::move(other.buffer_);
    eof_ = other.eof_;
    exit_code_ = other.exit_code_;
  }
  return *this;
}

Subprocess::~Subprocess() {
  if (pid_ > 0 && !exit_code_) {
    kill();
    wait();
  }
  if (stdout_fd_ >= 0) ::close(stdout_fd_);
}

Subprocess::ReadStatus Subprocess::read_line(std::string& line,
                                             std::int64_t deadline_ns) {
  while (true) {
    if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
      line.assign(buffer_, 0, nl);
      buffer_.erase(0, nl + 1);
      return ReadStatus::Line;
    }
    if (eof_) {
      if (!buffer_.empty()) {
        line = std::move(buffer_);
        buffer_.clear();
        return ReadStatus::Line;
      }
      return ReadStatus::Eof;
    }

    const std::int64_t remaining = deadline_ns - steady_now_ns();
    if (remaining <= 0) return ReadStatus::Timeout;
    pollfd pfd{stdout_fd_, POLLIN, 0};
    const int timeout_ms =
        static_cast<int>(std::min<std::int64_t>((remaining + 999'999) / 1'000'000,
                                                60'000));
    const int ready = ::poll(&pfd, 1, timeout_ms);
    if (ready < 0) {
      if (errno == EINTR) continue;
      eof_ = true;
      continue;
    }
    if (ready == 0) continue;

    char chunk[4096];
    const ssize_t n = ::read(stdout_fd_, chunk, sizeof(chunk));
    if (n > 0) {
      buffer_.append(chunk, static_cast<std::size_t>(n));
    } else if (n == 0 || (errno != EINTR && errno != EAGAIN)) {
      eof_ = true;
    }
  }
}

int Subprocess::wait() {
  if (exit_code_) return *exit_code_;
  if (pid_ <= 0) return -1;
  int status = 0;
  while (::waitpid(pid_, &status, 0) < 0) {
    if (errno != EINTR) {
      exit_code_ = -1;
      return -1;
    }
  }
  if (WIFEXITED(status)) {
    exit_code_ = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    exit_code_ = 128 + WTERMSIG(status);
  } else {
    exit_code_ = -1;
  }
  return *exit_code_;
}

void Subprocess::kill() {
  if (pid_ > 0 && !exit_code_) ::kill(pid_, SIGKILL);
}

CapturedOutput run_capture(const SpawnOptions& options, std::int64_t timeout_ns) {
  auto child = Subprocess::spawn(options);
  const std::int64_t deadline = steady_now_ns() + timeout_ns;
  CapturedOutput captured;
  std::string line;
  while (true) {
    auto status = child.read_line(line, deadline);
    if (status == Subprocess::ReadStatus::Line) {
      captured.output += line;
      captured.output += '\n';
      continue;
    }
    if (status == Subprocess::ReadStatus::Timeout) child.kill();
    break;
  }
  captured.exit_code = child.wait();
  return captured;
}

}  // namespace manai
