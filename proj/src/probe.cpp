#include "manai/probe.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "manai/error.hpp"
#include "text_util.hpp"

namespace manai {

namespace fs = std::filesystem;

std::string_view to_string(ProbeBackend backend) {
  return backend == ProbeBackend::Rapl ? "rapl" : "simulated";
}

std::optional<ProbeBackend> parse_probe_backend(std::string_view text) {
  if (text == "rapl") return ProbeBackend::Rapl;
  if (text == "simulated") return ProbeBackend::Simulated;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

std::vector<EnergyDomain> SimulationScenario::domains() const {
  std::set<EnergyDomain> seen;
  for (const auto& segment : segments) {
    for (const auto& [domain, watts] : segment.power_w) seen.insert(domain);
  }
  return {seen.begin(), seen.end()};
}

std::int64_t SimulationScenario::total_duration_ns() const {
  std::int64_t total = 0;
  for (const auto& segment : segments) total += segment.duration_ns;
  return total;
}

namespace {

double segment_power(const ScenarioSegment& segment,
                     const EnergyDomain& domain) {
  auto it = segment.power_w.find(domain);
  return it == segment.power_w.end() ? 0.0 : it->second;
}

}  // namespace

double SimulationScenario::energy_uj(const EnergyDomain& domain,
                                     std::int64_t t_ns) const {
  if (t_ns <= 0 || segments.empty()) return 0.0;
  double total = 0.0;
  std::int64_t remaining = t_ns;
  for (const auto& segment : segments) {
    const std::int64_t span = std::min(remaining, segment.duration_ns);
    // 1 W for 1 ns is 1e-3 uJ.
    total += segment_power(segment, domain) * static_cast<double>(span) / 1000.0;
    remaining -= span;
    if (remaining == 0) return total;
  }
  total += segment_power(segments.back(), domain) *
           static_cast<double>(remaining) / 1000.0;
  return total;
}

std::uint64_t SimulationScenario::counter_at(const EnergyDomain& domain,
                                             std::int64_t t_ns) const {
  const std::int64_t refreshed =
      t_ns <= 0 ? 0 : (t_ns / update_interval_ns) * update_interval_ns;
  const double uj = std::floor(energy_uj(domain, refreshed));
  return static_cast<std::uint64_t>(uj) % max_range_uj;
}

double SimulationScenario::max_power_w() const {
  double peak = 0.0;
  for (const auto& segment : segments) {
    for (const auto& [domain, watts] : segment.power_w) {
      peak = std::max(peak, watts);
    }
  }
  return peak;
}

namespace {

[[noreturn]] void scenario_error(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::MalformedScenario,
              "scenario line " + std::to_string(line) + ": " + what);
}

}  // namespace

SimulationScenario parse_scenario(std::string_view text) {
  SimulationScenario scenario;
  std::size_t line_no = 0;
  std::set<std::string> header_seen;

  for (std::string_view raw : detail::split_lines(text)) {
    ++line_no;
    auto hash = raw.find('#');
    std::string_view line = detail::trim(raw.substr(0, hash));
    if (line.empty()) continue;

    std::map<std::string, std::string> fields;
    for (std::string_view token : detail::split_whitespace(line)) {
      auto eq = token.find('=');
      if (eq == std::string_view::npos || eq == 0) {
        scenario_error(line_no, "expected key=value, got '" +
                                    std::string(token) + "'");
      }
      std::string key(token.substr(0, eq));
      if (!fields.emplace(key, std::string(token.substr(eq + 1))).second) {
        scenario_error(line_no, "duplicate key '" + key + "'");
      }
    }

    if (!fields.contains("duration_ns")) {
      if (!scenario.segments.empty()) {
        scenario_error(line_no, "header keys must precede all segments");
      }
      for (const auto& [key, value] : fields) {
        if (key != "update_interval_ns" && key != "max_range_uj") {
          scenario_error(line_no, "unknown header key '" + key + "'");
        }
        if (!header_seen.insert(key).second) {
          scenario_error(line_no, "header key '" + key + "' repeated");
        }
        auto parsed = detail::parse_int64(value);
        if (!parsed || *parsed <= 0) {
          scenario_error(line_no, key + " must be a positive integer");
        }
        if (key == "update_interval_ns") {
          scenario.update_interval_ns = *parsed;
        } else {
          scenario.max_range_uj = static_cast<std::uint64_t>(*parsed);
        }
      }
      continue;
    }

    ScenarioSegment segment;
    for (const auto& [key, value] : fields) {
      if (key == "duration_ns") {
        auto parsed = detail::parse_int64(value);
        if (!parsed || *parsed <= 0) {
          scenario_error(line_no, "duration_ns must be a positive integer");
        }
        segment.duration_ns = *parsed;
        continue;
      }
      auto kind = parse_domain_kind(key);
      if (!kind) scenario_error(line_no, "unknown key '" + key + "'");
      auto watts = detail::parse_double(value);
      if (!watts || !std::isfinite(*watts)) {
        scenario_error(line_no, "power for '" + key + "' is not a number");
      }
      if (*watts < 0.0) {
        scenario_error(line_no, "power for '" + key + "' is negative");
      }
      segment.power_w[EnergyDomain{*kind, 0}] = *watts;
    }
    if (!segment.power_w.contains(EnergyDomain{DomainKind::Package, 0})) {
      scenario_error(line_no, "segment is missing package=<watts>");
    }
    scenario.segments.push_back(std::move(segment));
  }

  if (scenario.segments.empty()) {
    throw Error(ErrorCode::MalformedScenario, "scenario has no segments");
  }
  return scenario;
}

SimulationScenario load_scenario(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::MalformedScenario,
                "cannot read scenario file " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_scenario(buffer.str());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

SimulatedProbe::SimulatedProbe(SimulationScenario scenario,
                               std::shared_ptr<Clock> clock)
    : scenario_(std::move(scenario)),
      clock_(std::move(clock)),
      origin_ns_(clock_->now_ns()),
      last_timestamp_ns_(origin_ns_ - 1) {}

ProbeDescriptor SimulatedProbe::enumerate_domains() const {
  return {ProbeBackend::Simulated, scenario_.domains(),
          scenario_.update_interval_ns};
}

ProbeReading SimulatedProbe::read() {
  ProbeReading reading;
  reading.timestamp_ns = std::max(clock_->now_ns(), last_timestamp_ns_ + 1);
  last_timestamp_ns_ = reading.timestamp_ns;
  const std::int64_t t = reading.timestamp_ns - origin_ns_;
  for (const auto& domain : scenario_.domains()) {
    reading.counters[domain] = scenario_.counter_at(domain, t);
    reading.max_range[domain] = scenario_.max_range_uj;
  }
  return reading;
}

double SimulatedProbe::max_plausible_power_w() const {
  return scenario_.max_power_w();
}

// ---------------------------------------------------------------------------
// RAPL
// ---------------------------------------------------------------------------

namespace {

// Far above any single RAPL domain of current hardware.
constexpr double kRaplPlausiblePowerW = 1000.0;

struct ZoneId {
  unsigned top = 0;
  std::optional<unsigned> sub;
};

std::optional<ZoneId> parse_zone_id(std::string_view name) {
  constexpr std::string_view prefix = "intel-rapl:";
  if (!name.starts_with(prefix)) return std::nullopt;
  name.remove_prefix(prefix.size());
  ZoneId id;
  auto colon = name.find(':');
  auto top = detail::parse_int64(name.substr(0, colon));
  if (!top || *top < 0) return std::nullopt;
  id.top = static_cast<unsigned>(*top);
  if (colon != std::string_view::npos) {
    auto sub = detail::parse_int64(name.substr(colon + 1));
    if (!sub || *sub < 0) return std::nullopt;
    id.sub = static_cast<unsigned>(*sub);
  }
  return id;
}

std::optional<std::string> read_first_line(const fs::path& path, int* err) {
  std::ifstream in(path);
  if (!in) {
    if (err) *err = errno;
    return std::nullopt;
  }
  std::string line;
  if (!std::getline(in, line)) {
    if (err) *err = EIO;
    return std::nullopt;
  }
  return std::string(detail::trim(line));
}

std::optional<std::uint64_t> read_counter(const fs::path& path, int* err) {
  auto line = read_first_line(path, err);
  if (!line) return std::nullopt;
  auto value = detail::parse_int64(*line);
  if (!value || *value < 0) {
    if (err) *err = EINVAL;
    return std::nullopt;
  }
  return static_cast<std::uint64_t>(*value);
}

}  // namespace

std::unique_ptr<RaplProbe> RaplProbe::open(const fs::path& root,
                                           std::shared_ptr<Clock> clock,
                                           std::int64_t update_interval_ns) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw Error(ErrorCode::NoProbeAvailable,
                "no powercap tree at " + root.string());
  }

  // Zone name -> directory. Flat and nested layouts can list the same zone
  // twice; the first path wins.
  std::map<std::string, fs::path> found;
  auto scan = [&](const fs::path& dir, auto&& self, int depth) -> void {
    std::error_code iter_ec;
    for (const auto& entry : fs::directory_iterator(dir, iter_ec)) {
      const std::string name = entry.path().filename().string();
      if (name == "intel-rapl" && depth == 0) {
        self(entry.path(), self, depth + 1);
        continue;
      }
      if (!parse_zone_id(name)) continue;
      found.emplace(name, entry.path());
      if (depth < 2) self(entry.path(), self, depth + 1);
    }
  };
  scan(root, scan, 0);

  // Socket index of each top-level package zone.
  std::map<unsigned, unsigned> package_socket;
  std::map<std::string, std::string> zone_names;
  for (const auto& [name, dir] : found) {
    auto zone_name = read_first_line(dir / "name", nullptr);
    if (!zone_name) continue;
    zone_names[name] = *zone_name;
    auto id = parse_zone_id(name);
    if (!id->sub && zone_name->starts_with("package-")) {
      if (auto socket = detail::parse_int64(zone_name->substr(8));
          socket && *socket >= 0) {
        package_socket[id->top] = static_cast<unsigned>(*socket);
      }
    }
  }

  std::vector<Zone> zones;
  std::set<EnergyDomain> taken;
  bool permission_denied = false;
  for (const auto& [name, zone_name] : zone_names) {
    auto id = parse_zone_id(name);
    std::optional<EnergyDomain> domain;
    if (zone_name.starts_with("package-")) {
      if (auto it = package_socket.find(id->top); it != package_socket.end()) {
        domain = EnergyDomain{DomainKind::Package, it->second};
      }
    } else if (zone_name == "psys") {
      domain = EnergyDomain{DomainKind::Psys, 0};
    } else if (auto kind = parse_domain_kind(zone_name);
               kind && *kind != DomainKind::Package &&
               *kind != DomainKind::Psys) {
      auto it = package_socket.find(id->top);
      domain = EnergyDomain{*kind, it != package_socket.end() ? it->second
                                                              : id->top};
    }
    if (!domain || taken.contains(*domain)) continue;

    const fs::path& dir = found.at(name);
    int err = 0;
    auto max_range = read_counter(dir / "max_energy_range_uj", &err);
    if (!max_range || *max_range == 0) {
      if (err == EACCES || err == EPERM) permission_denied = true;
      continue;
    }
    if (!read_counter(dir / "energy_uj", &err)) {
      if (err == EACCES || err == EPERM) permission_denied = true;
      continue;
    }
    taken.insert(*domain);
    zones.push_back(Zone{*domain, dir, *max_range});
  }

  if (zones.empty()) {
    if (permission_denied) {
      throw Error(ErrorCode::PermissionDenied,
                  "RAPL counters under " + root.string() +
                      " are not readable; grant read access to the "
                      "energy_uj files (e.g. chmod a+r)");
    }
    throw Error(ErrorCode::NoProbeAvailable,
                "no readable RAPL zones under " + root.string());
  }
  std::sort(zones.begin(), zones.end(),
            [](const Zone& a, const Zone& b) { return a.domain < b.domain; });
  return std::unique_ptr<RaplProbe>(
      new RaplProbe(std::move(zones), std::move(clock), update_interval_ns));
}

RaplProbe::RaplProbe(std::vector<Zone> zones, std::shared_ptr<Clock> clock,
                     std::int64_t update_interval_ns)
    : zones_(std::move(zones)),
      clock_(std::move(clock)),
      update_interval_ns_(update_interval_ns) {}

ProbeDescriptor RaplProbe::enumerate_domains() const {
  ProbeDescriptor descriptor;
  descriptor.backend = ProbeBackend::Rapl;
  descriptor.update_interval_ns = update_interval_ns_;
  for (const auto& zone : zones_) descriptor.domains.push_back(zone.domain);
  return descriptor;
}

ProbeReading RaplProbe::read() {
  ProbeReading reading;
  reading.timestamp_ns = std::max(clock_->now_ns(), last_timestamp_ns_ + 1);
  for (const auto& zone : zones_) {
    int err = 0;
    auto value = read_counter(zone.directory / "energy_uj", &err);
    if (!value) {
      throw Error(ErrorCode::ReadFailed,
                  "reading " + to_string(zone.domain) + " from " +
                      (zone.directory / "energy_uj").string() + " failed");
    }
    reading.counters[zone.domain] = *value % zone.max_range_uj;
    reading.max_range[zone.domain] = zone.max_range_uj;
  }
  last_timestamp_ns_ = reading.timestamp_ns;
  return reading;
}

double RaplProbe::max_plausible_power_w() const { return kRaplPlausiblePowerW; }

std::unique_ptr<Probe> make_probe(const ProbeSettings& settings,
                                  std::shared_ptr<Clock> clock) {
  if (settings.backend == ProbeBackend::Rapl) {
    return RaplProbe::open(
        settings.powercap_root, std::move(clock),
        settings.update_interval_ns.value_or(kDefaultUpdateIntervalNs));
  }
  if (settings.scenario.empty()) {
    throw Error(ErrorCode::NoProbeAvailable,
                "simulated probe selected but no scenario given");
  }
  auto scenario = load_scenario(settings.scenario);
  if (settings.update_interval_ns) {
    scenario.update_interval_ns = *settings.update_interval_ns;
  }
  return std::make_unique<SimulatedProbe>(std::move(scenario),
                                          std::move(clock));
}

}  // namespace manai
