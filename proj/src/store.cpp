#include "manai/store.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "manai/error.hpp"
#include "text_util.hpp"

namespace manai {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

bool same_measurements(const RevisionRecord& a, const RevisionRecord& b) {
  return a.format_version == b.format_version &&
         a.revision_label == b.revision_label &&
         a.config_digest == b.config_digest && a.config == b.config &&
         a.probe == b.probe && a.sampling_rate_hz == b.sampling_rate_hz &&
         a.iterations == b.iterations && a.baseline == b.baseline &&
         a.summaries == b.summaries && a.results == b.results;
}

bool operator==(const RevisionRecord& a, const RevisionRecord& b) {
  return a.created_at_ns == b.created_at_ns && same_measurements(a, b);
}

// ---------------------------------------------------------------------------
// Timestamps
// ---------------------------------------------------------------------------

std::string format_timestamp(std::int64_t unix_ns) {
  std::int64_t seconds = unix_ns / 1'000'000'000;
  std::int64_t nanos = unix_ns % 1'000'000'000;
  if (nanos < 0) {
    nanos += 1'000'000'000;
    --seconds;
  }
  const std::time_t t = static_cast<std::time_t>(seconds);
  std::tm utc{};
  ::gmtime_r(&t, &utc);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%09lldZ",
                utc.tm_year + 1900, utc.tm_mon + 1, utc.tm_mday, utc.tm_hour,
                utc.tm_min, utc.tm_sec, static_cast<long long>(nanos));
  return buf;
}

std::optional<std::int64_t> parse_timestamp(std::string_view text) {
  // Fixed layout: YYYY-MM-DDTHH:MM:SS.nnnnnnnnnZ
  if (text.size() != 30 || text[4] != '-' || text[7] != '-' || text[10] != 'T' ||
      text[13] != ':' || text[16] != ':' || text[19] != '.' || text[29] != 'Z') {
    return std::nullopt;
  }
  auto field = [&](std::size_t pos, std::size_t len) {
    return detail::parse_int64(text.substr(pos, len));
  };
  auto year = field(0, 4), month = field(5, 2), day = field(8, 2);
  auto hour = field(11, 2), minute = field(14, 2), second = field(17, 2);
  auto nanos = field(20, 9);
  if (!year || !month || !day || !hour || !minute || !second || !nanos) {
    return std::nullopt;
  }
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year(static_cast<int>(*year)),
                           std::chrono::month(static_cast<unsigned>(*month)),
                           std::chrono::day(static_cast<unsigned>(*day))};
  if (!ymd.ok() || *hour > 23 || *minute > 59 || *second > 60) return std::nullopt;
  const std::int64_t days = sys_days(ymd).time_since_epoch().count();
  return ((days * 24 + *hour) * 60 + *minute) * 60 * 1'000'000'000LL +
         *second * 1'000'000'000LL + *nanos;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void storage_error(const std::string& what) {
  throw Error(ErrorCode::StorageFailure, what);
}

template <typename T>
json map_to_json(const EnergyMap<T>& values) {
  json out = json::object();
  for (const auto& [domain, value] : values) out[to_string(domain)] = value;
  return out;
}

template <typename T>
EnergyMap<T> map_from_json(const json& in) {
  EnergyMap<T> out;
  for (const auto& [key, value] : in.items()) {
    auto domain = parse_domain(key);
    if (!domain) storage_error("unknown domain '" + key + "'");
    out[*domain] = value.template get<T>();
  }
  return out;
}

json stats_to_json(const Stats& s) {
  return json{{"mean", s.mean}, {"median", s.median}, {"min", s.min},
              {"max", s.max}, {"stddev", s.stddev}};
}

Stats stats_from_json(const json& in) {
  return Stats{in.at("mean").get<double>(), in.at("median").get<double>(),
               in.at("min").get<double>(), in.at("max").get<double>(),
               in.at("stddev").get<double>()};
}

json stats_map_to_json(const EnergyMap<Stats>& values) {
  json out = json::object();
  for (const auto& [domain, s] : values) out[to_string(domain)] = stats_to_json(s);
  return out;
}

EnergyMap<Stats> stats_map_from_json(const json& in) {
  EnergyMap<Stats> out;
  for (const auto& [key, value] : in.items()) {
    auto domain = parse_domain(key);
    if (!domain) storage_error("unknown domain '" + key + "'");
    out[*domain] = stats_from_json(value);
  }
  return out;
}

json summary_to_json(const TestSummary& s) {
  return json{{"iterations", s.iterations},
              {"pass_count", s.pass_count},
              {"fail_count", s.fail_count},
              {"skip_count", s.skip_count},
              {"mean_duration_s", s.mean_duration_s},
              {"any_low_confidence", s.any_low_confidence},
              {"energy_j", stats_map_to_json(s.energy_j)},
              {"power_w", stats_map_to_json(s.power_w)}};
}

TestSummary summary_from_json(const TestId& test, const json& in) {
  TestSummary s;
  s.test = test;
  s.iterations = in.at("iterations").get<int>();
  s.pass_count = in.at("pass_count").get<int>();
  s.fail_count = in.at("fail_count").get<int>();
  s.skip_count = in.at("skip_count").get<int>();
  s.mean_duration_s = in.at("mean_duration_s").get<double>();
  s.any_low_confidence = in.at("any_low_confidence").get<bool>();
  s.energy_j = stats_map_from_json(in.at("energy_j"));
  s.power_w = stats_map_from_json(in.at("power_w"));
  return s;
}

json sample_to_json(const EnergySample& s) {
  return json{{"start_ns", s.start_ns},
              {"end_ns", s.end_ns},
              {"raw_uj", map_to_json(s.raw_uj)},
              {"energy_pj", map_to_json(s.energy_pj)},
              {"energy_j", map_to_json(s.energy_j)},
              {"power_w", map_to_json(s.power_w)}};
}

EnergySample sample_from_json(const json& in) {
  EnergySample s;
  s.start_ns = in.at("start_ns").get<std::int64_t>();
  s.end_ns = in.at("end_ns").get<std::int64_t>();
  s.raw_uj = map_from_json<std::uint64_t>(in.at("raw_uj"));
  s.energy_pj = map_from_json<std::int64_t>(in.at("energy_pj"));
  s.energy_j = map_from_json<double>(in.at("energy_j"));
  s.power_w = map_from_json<double>(in.at("power_w"));
  return s;
}

json result_to_json(const TestExecutionResult& r) {
  json samples = json::array();
  for (const auto& s : r.samples) samples.push_back(sample_to_json(s));
  return json{{"iteration", r.iteration},
              {"status", to_string(r.status)},
              {"failure", to_string(r.failure)},
              {"detail", r.detail},
              {"begin_ns", r.begin_ns},
              {"end_ns", r.end_ns},
              {"duration_ns", r.duration_ns},
              {"low_confidence", r.low_confidence},
              {"baseline_applied", r.baseline_applied},
              {"energy_j", map_to_json(r.energy_j)},
              {"mean_power_w", map_to_json(r.mean_power_w)},
              {"samples", std::move(samples)}};
}

TestExecutionResult result_from_json(const TestId& test, const json& in) {
  TestExecutionResult r;
  r.test = test;
  r.iteration = in.at("iteration").get<int>();
  auto status = parse_test_status(in.at("status").get<std::string>());
  auto failure = parse_failure_kind(in.at("failure").get<std::string>());
  if (!status || !failure) storage_error("bad status or failure field");
  r.status = *status;
  r.failure = *failure;
  r.detail = in.at("detail").get<std::string>();
  r.begin_ns = in.at("begin_ns").get<std::int64_t>();
  r.end_ns = in.at("end_ns").get<std::int64_t>();
  r.duration_ns = in.at("duration_ns").get<std::int64_t>();
  r.low_confidence = in.at("low_confidence").get<bool>();
  r.baseline_applied = in.at("baseline_applied").get<bool>();
  r.energy_j = map_from_json<double>(in.at("energy_j"));
  r.mean_power_w = map_from_json<double>(in.at("mean_power_w"));
  for (const auto& s : in.at("samples")) r.samples.push_back(sample_from_json(s));
  return r;
}

}  // namespace

std::string serialize_record(const RevisionRecord& record) {
  json doc;
  doc["format_version"] = record.format_version;
  doc["revision_label"] = record.revision_label;
  doc["created_at"] = format_timestamp(record.created_at_ns);
  doc["config_digest"] = record.config_digest;
  doc["config"] = record.config;
  json domains = json::array();
  for (const auto& d : record.probe.domains) domains.push_back(to_string(d));
  doc["probe"] = json{{"backend", to_string(record.probe.backend)},
                      {"update_interval_ns", record.probe.update_interval_ns},
                      {"domains", std::move(domains)}};
  doc["sampling_rate_hz"] = record.sampling_rate_hz;
  doc["iterations"] = record.iterations;
  if (record.baseline) {
    doc["baseline"] = json{{"power_w", map_to_json(record.baseline->power_w)},
                           {"duration_s", record.baseline->duration_s},
                           {"calibrated_at_ns", record.baseline->calibrated_at_ns}};
  } else {
    doc["baseline"] = nullptr;
  }
  json tests = json::array();
  for (const auto& [test, summary] : record.summaries) {
    json results = json::array();
    if (auto it = record.results.find(test); it != record.results.end()) {
      for (const auto& r : it->second) results.push_back(result_to_json(r));
    }
    tests.push_back(json{{"test", test.str()},
                         {"summary", summary_to_json(summary)},
                         {"results", std::move(results)}});
  }
  doc["tests"] = std::move(tests);
  return doc.dump(2) + "\n";
}

RevisionRecord parse_record(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    storage_error(std::string("record is not valid JSON: ") + e.what());
  }
  try {
    RevisionRecord record;
    record.format_version = doc.at("format_version").get<int>();
    if (record.format_version != kRecordFormatVersion) {
      storage_error("unsupported record format_version " +
                    std::to_string(record.format_version));
    }
    record.revision_label = doc.at("revision_label").get<std::string>();
    auto created = parse_timestamp(doc.at("created_at").get<std::string>());
    if (!created) storage_error("bad created_at timestamp");
    record.created_at_ns = *created;
    record.config_digest = doc.at("config_digest").get<std::string>();
    record.config = doc.at("config").get<std::map<std::string, std::string>>();
    const json& probe = doc.at("probe");
    auto backend = parse_probe_backend(probe.at("backend").get<std::string>());
    if (!backend) storage_error("unknown probe backend");
    record.probe.backend = *backend;
    record.probe.update_interval_ns = probe.at("update_interval_ns").get<std::int64_t>();
    for (const auto& d : probe.at("domains")) {
      auto domain = parse_domain(d.get<std::string>());
      if (!domain) storage_error("unknown domain in probe descriptor");
      record.probe.domains.push_back(*domain);
    }
    record.sampling_rate_hz = doc.at("sampling_rate_hz").get<double>();
    record.iterations = doc.at("iterations").get<int>();
    if (const json& b = doc.at("baseline"); !b.is_null()) {
      record.baseline = BaselineProfile{map_from_json<double>(b.at("power_w")),
                                        b.at("duration_s").get<double>(),
                                        b.at("calibrated_at_ns").get<std::int64_t>()};
    }
    for (const auto& entry : doc.at("tests")) {
      auto test = TestId::try_parse(entry.at("test").get<std::string>());
      if (!test) storage_error("malformed test id in record");
      record.summaries[*test] = summary_from_json(*test, entry.at("summary"));
      auto& results = record.results[*test];
      for (const auto& r : entry.at("results")) {
        results.push_back(result_from_json(*test, r));
      }
    }
    return record;
  } catch (const json::exception& e) {
    storage_error(std::string("malformed record: ") + e.what());
  }
}

void validate_revision_label(std::string_view label) {
  const bool ok =
      !label.empty() && label.front() != '.' &&
      std::all_of(label.begin(), label.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '.' || c == '_' || c == '-';
      });
  if (!ok) {
    throw Error(ErrorCode::ConfigError,
                "invalid revision label '" + std::string(label) +
                    "' (allowed: letters, digits, '.', '_', '-')");
  }
}

// ---------------------------------------------------------------------------
// Store
// ---------------------------------------------------------------------------

Store::Store(fs::path data_dir) : data_dir_(std::move(data_dir)) {}

namespace {

std::int64_t wall_now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

void write_fully(const fs::path& path, const std::string& content) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0644);
  if (fd < 0) {
    storage_error("cannot create " + path.string() + ": " + std::strerror(errno));
  }
  std::size_t written = 0;
  while (written < content.size()) {
    const ssize_t n = ::write(fd, content.data() + written, content.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int err = errno;
      ::close(fd);
      storage_error("writing " + path.string() + " failed: " + std::strerror(err));
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0 || ::close(fd) != 0) {
    storage_error("flushing " + path.string() + " failed: " + std::strerror(errno));
  }
}

bool is_record_file(const fs::path& path) {
  const std::string name = path.filename().string();
  return !name.empty() && name.front() != '.' &&
         path.extension() == kRecordExtension;
}

bool created_before(const RevisionRecord& a, const RevisionRecord& b) {
  if (a.created_at_ns != b.created_at_ns) return a.created_at_ns < b.created_at_ns;
  return a.revision_label < b.revision_label;
}

}  // namespace

fs::path Store::save(RevisionRecord& record) {
  validate_revision_label(record.revision_label);
  const fs::path dir = data_dir_ / "revisions" / record.revision_label;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) storage_error("cannot create " + dir.string() + ": " + ec.message());

  if (record.created_at_ns == 0) record.created_at_ns = wall_now_ns();
  fs::path target;
  while (true) {
    target = dir / (format_timestamp(record.created_at_ns) + std::string(kRecordExtension));
    if (!fs::exists(target)) break;
    ++record.created_at_ns;
  }

  const fs::path temporary =
      dir / ("." + target.filename().string() + ".tmp-" + std::to_string(::getpid()));
  write_fully(temporary, serialize_record(record));
  if (fault_hook_) fault_hook_(temporary);
  fs::rename(temporary, target, ec);
  if (ec) {
    fs::remove(temporary);
    storage_error("cannot move record into place: " + ec.message());
  }
  return target;
}

std::vector<RevisionRecord> Store::read_dir(const fs::path& dir) const {
  std::vector<RevisionRecord> records;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (!entry.is_regular_file() || !is_record_file(entry.path())) continue;
    std::ifstream in(entry.path());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    try {
      records.push_back(parse_record(buffer.str()));
    } catch (const Error& e) {
      warnings_.push_back("skipping " + entry.path().string() + ": " + e.what());
    }
  }
  std::sort(records.begin(), records.end(), created_before);
  return records;
}

std::vector<RevisionRecord> Store::load(std::string_view label) const {
  std::vector<RevisionRecord> records;
  bool valid_label = true;
  try {
    validate_revision_label(label);
  } catch (const Error&) {
    valid_label = false;
  }
  if (valid_label) records = read_dir(data_dir_ / "revisions" / std::string(label));
  if (records.empty()) {
    throw Error(ErrorCode::UnknownRevision,
                "unknown revision '" + std::string(label) + "'");
  }
  return records;
}

RevisionRecord Store::latest(std::string_view label) const {
  return load(label).back();
}

std::vector<RevisionRecord> Store::load_all() const {
  std::vector<RevisionRecord> all;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(data_dir_ / "revisions", ec)) {
    if (!entry.is_directory()) continue;
    auto records = read_dir(entry.path());
    all.insert(all.end(), std::make_move_iterator(records.begin()),
               std::make_move_iterator(records.end()));
  }
  std::sort(all.begin(), all.end(), created_before);
  return all;
}

HistorySeries Store::history(const TestId& test,
                             std::optional<std::size_t> limit) const {
  HistorySeries series{test, {}};
  for (auto& record : load_all()) {
    auto it = record.summaries.find(test);
    if (it == record.summaries.end()) continue;
    series.points.push_back(
        HistoryPoint{record.revision_label, record.created_at_ns, it->second});
  }
  if (limit && series.points.size() > *limit) {
    series.points.erase(series.points.begin(),
                        series.points.end() - static_cast<std::ptrdiff_t>(*limit));
  }
  return series;
}

std::vector<std::string> Store::take_warnings() const {
  return std::exchange(warnings_, {});
}

// ---------------------------------------------------------------------------
// Lock
// ---------------------------------------------------------------------------

namespace {

bool process_alive(pid_t pid) {
  return pid > 0 && (::kill(pid, 0) == 0 || errno == EPERM);
}

}  // namespace

DataDirLock::DataDirLock(const fs::path& data_dir) : path_(data_dir / "lock") {
  std::error_code ec;
  fs::create_directories(data_dir, ec);
  if (ec) storage_error("cannot create " + data_dir.string() + ": " + ec.message());

  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0644);
    if (fd >= 0) {
      const std::string pid = std::to_string(::getpid()) + "\n";
      const bool ok = ::write(fd, pid.data(), pid.size()) ==
                      static_cast<ssize_t>(pid.size());
      ::close(fd);
      if (!ok) {
        fs::remove(path_, ec);
        storage_error("cannot write lock file " + path_.string());
      }
      return;
    }
    if (errno != EEXIST) {
      storage_error("cannot create lock file " + path_.string() + ": " +
                    std::strerror(errno));
    }
    std::ifstream in(path_);
    long long holder = 0;
    in >> holder;
    if (process_alive(static_cast<pid_t>(holder))) {
      throw Error(ErrorCode::LockHeld,
                  "data directory " + data_dir.string() +
                      " is locked by running process " + std::to_string(holder));
    }
    fs::remove(path_, ec);
  }
  throw Error(ErrorCode::LockHeld, "could not acquire " + path_.string());
}

DataDirLock::~DataDirLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

}  // namespace manai
