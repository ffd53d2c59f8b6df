#pragma once

#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <stop_token>

namespace manai {

/// Monotonic nanosecond time source shared by probes, the sampler and the
/// harness reader so that all timestamps of one experiment are comparable.
class Clock {
 public:
  virtual ~Clock() = default;

  virtual std::int64_t now_ns() = 0;

  /// Blocks until `deadline_ns` or until `stop` is requested. Returns false
  /// when woken by the stop request.
  virtual bool sleep_until(std::int64_t deadline_ns, std::stop_token stop) = 0;
};

class SteadyClock final : public Clock {
 public:
  std::int64_t now_ns() override;
  bool sleep_until(std::int64_t deadline_ns, std::stop_token stop) override;

 private:
  std::mutex mutex_;
  std::condition_variable_any cv_;
};

/// Virtual clock. Sleeping jumps straight to the deadline, so anything
/// driven by it runs independent of wall-clock time.
class ManualClock : public Clock {
 public:
  explicit ManualClock(std::int64_t start_ns = 0) : now_(start_ns) {}

  std::int64_t now_ns() override { return now_; }
  bool sleep_until(std::int64_t deadline_ns, std::stop_token stop) override;

  void set(std::int64_t ns) { now_ = ns; }
  void advance(std::int64_t ns) { now_ += ns; }

 private:
  std::int64_t now_;
};

}  // namespace manai
