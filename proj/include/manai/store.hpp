#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "manai/probe.hpp"
#include "manai/results.hpp"
#include "manai/sampler.hpp"

namespace manai {

inline constexpr int kRecordFormatVersion = 1;
inline constexpr std::string_view kRecordExtension = ".record";

/// Outcome of one experiment run, keyed by revision label. Records are
/// immutable once saved; re-running a revision appends a new record.
struct RevisionRecord {
  int format_version = kRecordFormatVersion;
  std::string revision_label;
  /// Wall-clock time of the save, nanoseconds since the Unix epoch. The only
  /// field that differs between replicated runs.
  std::int64_t created_at_ns = 0;
  std::string config_digest;
  /// Effective experiment configuration as flat `section.key` pairs.
  std::map<std::string, std::string> config;
  ProbeDescriptor probe;
  double sampling_rate_hz = 0.0;
  int iterations = 0;
  std::optional<BaselineProfile> baseline;
  std::map<TestId, TestSummary> summaries;
  std::map<TestId, std::vector<TestExecutionResult>> results;
};

bool same_measurements(const RevisionRecord& a, const RevisionRecord& b);
bool operator==(const RevisionRecord& a, const RevisionRecord& b);

/// `2026-01-02T03:04:05.123456789Z`
std::string format_timestamp(std::int64_t unix_ns);
std::optional<std::int64_t> parse_timestamp(std::string_view text);

/// Structured-text form (JSON, two-space indent). Floating-point values are
/// written in a form that parses back bit-exactly.
std::string serialize_record(const RevisionRecord& record);
/// Throws StorageFailure on malformed input or an unsupported version.
RevisionRecord parse_record(std::string_view text);

/// Labels become directory names: [A-Za-z0-9._-]+, not starting with '.'.
void validate_revision_label(std::string_view label);

struct HistoryPoint {
  std::string revision_label;
  std::int64_t created_at_ns = 0;
  TestSummary summary;
};

struct HistorySeries {
  TestId test;
  /// Oldest first.
  std::vector<HistoryPoint> points;
};

/// Layout: <data_dir>/revisions/<label>/<created_at>.record
class Store {
 public:
  explicit Store(std::filesystem::path data_dir);

  const std::filesystem::path& data_dir() const { return data_dir_; }

  /// Writes a temporary file and renames it into place. Assigns
  /// `created_at_ns` when it is zero and moves it forward by a nanosecond
  /// while a record with that timestamp already exists.
  std::filesystem::path save(RevisionRecord& record);

  /// Every record for `label`, oldest first. Throws UnknownRevision.
  std::vector<RevisionRecord> load(std::string_view label) const;

  /// Newest record for `label`. Throws UnknownRevision.
  RevisionRecord latest(std::string_view label) const;

  std::vector<RevisionRecord> load_all() const;

  /// Newest-last series of every stored record containing `test`,
  /// truncated to the last `limit` points.
  HistorySeries history(const TestId& test,
                        std::optional<std::size_t> limit = std::nullopt) const;

  /// Files that looked like records but could not be parsed. They are
  /// skipped by every read.
  std::vector<std::string> take_warnings() const;

  /// Test-only: called after the temporary file is written and before it
  /// is renamed. Throwing from it leaves the temporary behind.
  void set_fault_hook(std::function<void(const std::filesystem::path&)> hook) {
    fault_hook_ = std::move(hook);
  }

 private:
  std::vector<RevisionRecord> read_dir(const std::filesystem::path& dir) const;

  std::filesystem::path data_dir_;
  std::function<void(const std::filesystem::path&)> fault_hook_;
  mutable std::vector<std::string> warnings_;
};

/// `<data_dir>/lock` holding the owner's pid. A lock left by a process that
/// no longer exists is taken over. Throws LockHeld otherwise.
class DataDirLock {
 public:
  explicit DataDirLock(const std::filesystem::path& data_dir);
  ~DataDirLock();

  DataDirLock(const DataDirLock&) = delete;
  DataDirLock& operator=(const DataDirLock&) = delete;

 private:
  std::filesystem::path path_;
};

}  // namespace manai
