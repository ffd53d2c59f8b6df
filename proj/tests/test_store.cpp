#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>

#include "doctest.h"
#include "manai/error.hpp"
#include "manai/store.hpp"
#include "random_record.hpp"
#include "support.hpp"

using namespace manai;
using testing::RecordGenerator;
using testing::TempDir;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Internal;
}

RevisionRecord simple_record(const std::string& label, std::int64_t created,
                             const std::vector<std::string>& tests, double energy) {
  RevisionRecord r;
  r.revision_label = label;
  r.created_at_ns = created;
  r.config_digest = "digest";
  r.probe.domains = {{DomainKind::Package, 0}};
  r.sampling_rate_hz = 100;
  r.iterations = 1;
  for (const auto& t : tests) {
    auto id = TestId::parse(t);
    TestSummary s;
    s.test = id;
    s.iterations = 1;
    s.pass_count = 1;
    s.energy_j[{DomainKind::Package, 0}] = {energy, energy, energy, energy, 0.0};
    r.summaries[id] = s;
    TestExecutionResult res;
    res.test = id;
    res.energy_j[{DomainKind::Package, 0}] = energy;
    r.results[id] = {res};
  }
  return r;
}

}  // namespace

TEST_SUITE("store") {

TEST_CASE("timestamps round-trip") {
  for (std::int64_t t : {std::int64_t{1}, std::int64_t{1'700'000'000'123'456'789},
                         std::int64_t{4'000'000'000'000'000'000}}) {
    auto text = format_timestamp(t);
    CHECK(parse_timestamp(text) == t);
  }
  CHECK(format_timestamp(1'700'000'000'000'000'001) == "2023-11-14T22:13:20.000000001Z");
  CHECK_FALSE(parse_timestamp("2023-11-14T22:13:20Z"));
  CHECK_FALSE(parse_timestamp("2023-13-14T22:13:20.000000001Z"));
}

TEST_CASE("revision labels") {
  CHECK_NOTHROW(validate_revision_label("abc123"));
  CHECK_NOTHROW(validate_revision_label("v1.2-rc_3"));
  for (const char* bad : {"", ".hidden", "a/b", "..", "a b", "é"}) {
    CAPTURE(bad);
    CHECK(code_of([&] { validate_revision_label(bad); }) == ErrorCode::ConfigError);
  }
}

TEST_CASE("serialization round-trips 1000 random records bit-exactly") {
  RecordGenerator gen(2024);
  for (int i = 0; i < 1000; ++i) {
    auto record = gen.record();
    auto text = serialize_record(record);
    auto back = parse_record(text);
    CAPTURE(i);
    REQUIRE(back == record);
    CHECK(testing::same_bits(record, back));
    CHECK(serialize_record(back) == text);
  }
}

TEST_CASE("the bit comparison tells signed zeros apart") {
  RecordGenerator gen(7);
  auto a = gen.record();
  auto b = a;
  a.sampling_rate_hz = 0.0;
  b.sampling_rate_hz = -0.0;
  CHECK(a == b);
  CHECK_FALSE(testing::same_bits(a, b));
  CHECK(parse_record(serialize_record(b)).sampling_rate_hz == 0.0);
  CHECK(std::signbit(parse_record(serialize_record(b)).sampling_rate_hz));
}

TEST_CASE("malformed documents are storage failures") {
  CHECK(code_of([] { parse_record(""); }) == ErrorCode::StorageFailure);
  CHECK(code_of([] { parse_record("{\"format_version\": 99}"); }) == ErrorCode::StorageFailure);
  auto text = serialize_record(simple_record("a", 5, {"s::t"}, 1.0));
  CHECK(code_of([&] { parse_record(text.substr(0, text.size() / 2)); }) ==
        ErrorCode::StorageFailure);
}

TEST_CASE("save then load") {
  TempDir dir;
  Store store(dir.path());
  auto record = simple_record("abc123", 1'000, {"s::a"}, 2.0);
  auto path = store.save(record);
  CHECK(path.parent_path().filename() == "abc123");
  CHECK(path.extension() == ".record");
  auto loaded = store.load("abc123");
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0] == record);
  CHECK(code_of([&] { store.load("unknown"); }) == ErrorCode::UnknownRevision);
  CHECK(code_of([&] { store.load("../etc"); }) == ErrorCode::UnknownRevision);
}

TEST_CASE("saving a label twice appends") {
  TempDir dir;
  Store store(dir.path());
  auto first = simple_record("r", 2'000, {"s::a"}, 1.0);
  auto second = simple_record("r", 2'000, {"s::a"}, 3.0);
  store.save(first);
  store.save(second);
  CHECK(second.created_at_ns == 2'001);
  auto loaded = store.load("r");
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0] == first);
  CHECK(loaded[1] == second);
  CHECK(store.latest("r") == second);
}

TEST_CASE("zero created_at is assigned from the wall clock") {
  TempDir dir;
  Store store(dir.path());
  auto record = simple_record("r", 0, {"s::a"}, 1.0);
  store.save(record);
  CHECK(record.created_at_ns > 1'600'000'000'000'000'000);
}

TEST_CASE("interrupted writes never become visible") {
  TempDir dir;
  Store store(dir.path());
  auto good = simple_record("r", 10, {"s::a"}, 1.0);
  store.save(good);

  RecordGenerator gen(5);
  for (int i = 0; i < 50; ++i) {
    auto record = gen.record();
    record.revision_label = "r";
    record.created_at_ns = 100 + i;
    Store faulty(dir.path());
    const auto cut = gen.small(4000);
    faulty.set_fault_hook([&](const fs::path& temp) {
      // Truncate the temporary as if the process died mid-write.
      fs::resize_file(temp, std::min<std::uintmax_t>(fs::file_size(temp), cut));
      throw std::runtime_error("simulated crash");
    });
    CHECK_THROWS(faulty.save(record));
    auto loaded = store.load("r");
    REQUIRE(loaded.size() == 1);
    CHECK(loaded[0] == good);
  }
  // Leftover temporaries are still on disk and ignored.
  std::size_t temporaries = 0;
  for (const auto& e : fs::directory_iterator(dir / "revisions/r")) {
    temporaries += e.path().filename().string().front() == '.' ? 1 : 0;
  }
  CHECK(temporaries == 50);
  CHECK(store.take_warnings().empty());
}

TEST_CASE("corrupt record files are skipped with a warning") {
  TempDir dir;
  Store store(dir.path());
  auto good = simple_record("r", 10, {"s::a"}, 1.0);
  store.save(good);
  testing::write_file(dir / "revisions/r/2020-01-01T00:00:00.000000000Z.record", "{\"trunc");
  testing::write_file(dir / "revisions/r/notes.txt", "ignored");
  auto loaded = store.load("r");
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0] == good);
  CHECK(store.take_warnings().size() == 1);
  CHECK(store.take_warnings().empty());
}

TEST_CASE("history orders by creation time and honors the limit") {
  TempDir dir;
  Store store(dir.path());
  auto r3 = simple_record("r3", 300, {"s::t"}, 2.0);
  auto r1 = simple_record("r1", 100, {"s::t", "s::u"}, 4.0);
  auto r2 = simple_record("r2", 200, {"s::t"}, 3.0);
  store.save(r3);
  store.save(r1);
  store.save(r2);
  auto series = store.history(TestId::parse("s::t"));
  REQUIRE(series.points.size() == 3);
  CHECK(series.points[0].revision_label == "r1");
  CHECK(series.points[1].revision_label == "r2");
  CHECK(series.points[2].revision_label == "r3");
  auto limited = store.history(TestId::parse("s::t"), 2);
  REQUIRE(limited.points.size() == 2);
  CHECK(limited.points[0].revision_label == "r2");
  CHECK(store.history(TestId::parse("s::u")).points.size() == 1);
  CHECK(store.history(TestId::parse("s::none")).points.empty());
}

TEST_CASE("history matches a full scan of the record files") {
  TempDir dir;
  Store store(dir.path());
  RecordGenerator gen(77);
  std::vector<TestId> pool;
  for (int i = 0; i < 5; ++i) pool.push_back(gen.test_id());
  for (int i = 0; i < 20; ++i) {
    auto record = gen.record();
    record.revision_label = "rev" + std::to_string(gen.small(6));
    record.summaries.clear();
    record.results.clear();
    for (const auto& id : pool) {
      if (gen.small(2) == 0) continue;
      TestSummary s;
      s.test = id;
      s.mean_duration_s = gen.some_double();
      record.summaries[id] = s;
      record.results[id] = {};
    }
    store.save(record);
  }

  // Oracle: parse every record file directly and filter by test.
  std::vector<RevisionRecord> all;
  for (const auto& e : fs::recursive_directory_iterator(dir.path())) {
    if (e.path().extension() == ".record") {
      all.push_back(parse_record(testing::read_file(e.path())));
    }
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.created_at_ns < b.created_at_ns;
  });
  REQUIRE(all.size() == 20);
  for (const auto& id : pool) {
    std::vector<std::pair<std::string, std::int64_t>> expected;
    for (const auto& r : all) {
      if (r.summaries.contains(id)) expected.emplace_back(r.revision_label, r.created_at_ns);
    }
    auto series = store.history(id);
    REQUIRE(series.points.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
      CHECK(series.points[i].revision_label == expected[i].first);
      CHECK(series.points[i].created_at_ns == expected[i].second);
      CHECK(series.points[i].summary.test == id);
      if (i > 0) CHECK(series.points[i].created_at_ns > series.points[i - 1].created_at_ns);
    }
  }
}

TEST_CASE("data directory lock") {
  TempDir dir;
  {
    DataDirLock lock(dir.path());
    CHECK(fs::exists(dir / "lock"));
    CHECK(code_of([&] { DataDirLock second(dir.path()); }) == ErrorCode::LockHeld);
  }
  CHECK_FALSE(fs::exists(dir / "lock"));

  // A lock left by a process that has exited is taken over.
  const pid_t child = ::fork();
  if (child == 0) ::_exit(0);
  ::waitpid(child, nullptr, 0);
  testing::write_file(dir / "lock", std::to_string(child) + "\n");
  CHECK_NOTHROW(DataDirLock(dir.path()));
}

}  // TEST_SUITE
