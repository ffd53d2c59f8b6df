#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "manai/clock.hpp"
#include "manai/domain.hpp"

namespace manai {

inline constexpr std::int64_t kDefaultUpdateIntervalNs = 1'000'000;
/// Typical `max_energy_range_uj` reported by Intel package zones.
inline constexpr std::uint64_t kDefaultMaxRangeUj = 262'143'328'850ULL;
inline constexpr const char* kDefaultPowercapRoot = "/sys/class/powercap";

/// Snapshot of every domain counter. Counter values are cumulative
/// microjoules, always below the domain's max_range.
struct ProbeReading {
  std::int64_t timestamp_ns = 0;
  EnergyMap<std::uint64_t> counters;
  EnergyMap<std::uint64_t> max_range;
};

enum class ProbeBackend { Rapl, Simulated };

std::string_view to_string(ProbeBackend backend);
std::optional<ProbeBackend> parse_probe_backend(std::string_view text);

struct ProbeDescriptor {
  ProbeBackend backend = ProbeBackend::Simulated;
  std::vector<EnergyDomain> domains;
  std::int64_t update_interval_ns = kDefaultUpdateIntervalNs;

  bool operator==(const ProbeDescriptor&) const = default;
};

class Probe {
 public:
  virtual ~Probe() = default;

  virtual ProbeDescriptor enumerate_domains() const = 0;

  /// Reads all domains back-to-back in DomainKind order. Throws ReadFailed
  /// and discards the whole reading if any domain fails.
  virtual ProbeReading read() = 0;

  /// Upper bound on per-domain power, used to reject sampling rates whose
  /// interval could span more than one counter wrap.
  virtual double max_plausible_power_w() const = 0;
};

// ---------------------------------------------------------------------------
// Simulated backend
// ---------------------------------------------------------------------------

struct ScenarioSegment {
  std::int64_t duration_ns = 0;
  EnergyMap<double> power_w;
};

/// Piecewise-constant power profile. After the last segment ends its power
/// level continues indefinitely.
struct SimulationScenario {
  std::vector<ScenarioSegment> segments;
  std::uint64_t max_range_uj = kDefaultMaxRangeUj;
  std::int64_t update_interval_ns = kDefaultUpdateIntervalNs;

  std::vector<EnergyDomain> domains() const;
  std::int64_t total_duration_ns() const;

  /// Exact (unquantized, unwrapped) integral of power over [0, t], in uJ.
  double energy_uj(const EnergyDomain& domain, std::int64_t t_ns) const;

  /// Counter value the probe reports at t: integral up to the last counter
  /// refresh, floored to whole microjoules, reduced modulo max_range.
  std::uint64_t counter_at(const EnergyDomain& domain, std::int64_t t_ns) const;

  double max_power_w() const;
};

/// Throws MalformedScenario with a line number on any syntax or invariant
/// violation.
SimulationScenario parse_scenario(std::string_view text);
SimulationScenario load_scenario(const std::filesystem::path& path);

class SimulatedProbe final : public Probe {
 public:
  /// Simulated time zero is `clock->now_ns()` at construction.
  SimulatedProbe(SimulationScenario scenario, std::shared_ptr<Clock> clock);

  ProbeDescriptor enumerate_domains() const override;
  ProbeReading read() override;
  double max_plausible_power_w() const override;

  const SimulationScenario& scenario() const { return scenario_; }
  std::int64_t origin_ns() const { return origin_ns_; }

 private:
  SimulationScenario scenario_;
  std::shared_ptr<Clock> clock_;
  std::int64_t origin_ns_;
  std::int64_t last_timestamp_ns_;
};

// ---------------------------------------------------------------------------
// RAPL over Linux powercap
// ---------------------------------------------------------------------------

class RaplProbe final : public Probe {
 public:
  /// Scans `root` for `intel-rapl:N[:M]` zones, either flat (as in
  /// /sys/class/powercap) or nested one level. Throws NoProbeAvailable when
  /// nothing usable is found and PermissionDenied when counters exist but
  /// cannot be read.
  static std::unique_ptr<RaplProbe> open(
      const std::filesystem::path& root, std::shared_ptr<Clock> clock,
      std::int64_t update_interval_ns = kDefaultUpdateIntervalNs);

  ProbeDescriptor enumerate_domains() const override;
  ProbeReading read() override;
  double max_plausible_power_w() const override;

  struct Zone {
    EnergyDomain domain;
    std::filesystem::path directory;
    std::uint64_t max_range_uj = 0;
  };

  const std::vector<Zone>& zones() const { return zones_; }

 private:
  RaplProbe(std::vector<Zone> zones, std::shared_ptr<Clock> clock,
            std::int64_t update_interval_ns);

  std::vector<Zone> zones_;
  std::shared_ptr<Clock> clock_;
  std::int64_t update_interval_ns_;
  std::int64_t last_timestamp_ns_ = 0;
};

// ---------------------------------------------------------------------------

struct ProbeSettings {
  ProbeBackend backend = ProbeBackend::Rapl;
  std::filesystem::path scenario;
  std::filesystem::path powercap_root = kDefaultPowercapRoot;
  /// Overrides the backend's refresh granularity when set.
  std::optional<std::int64_t> update_interval_ns;
};

std::unique_ptr<Probe> make_probe(const ProbeSettings& settings,
                                  std::shared_ptr<Clock> clock);

}  // namespace manai
