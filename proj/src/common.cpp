#include <charconv>
#include <chrono>

#include "manai/clock.hpp"
#include "manai/domain.hpp"
#include "manai/error.hpp"

namespace manai {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NoProbeAvailable: return "NoProbeAvailable";
    case ErrorCode::PermissionDenied: return "PermissionDenied";
    case ErrorCode::ReadFailed: return "ReadFailed";
    case ErrorCode::MalformedScenario: return "MalformedScenario";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DomainMismatch: return "DomainMismatch";
    case ErrorCode::ProbeLost: return "ProbeLost";
    case ErrorCode::HarnessSpawnFailed: return "HarnessSpawnFailed";
    case ErrorCode::HarnessProtocolError: return "HarnessProtocolError";
    case ErrorCode::ProtocolViolation: return "ProtocolViolation";
    case ErrorCode::TestCrashed: return "TestCrashed";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::StorageFailure: return "StorageFailure";
    case ErrorCode::UnknownRevision: return "UnknownRevision";
    case ErrorCode::EmptyScope: return "EmptyScope";
    case ErrorCode::NoHistory: return "NoHistory";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::LockHeld: return "LockHeld";
    case ErrorCode::Internal: return "Internal";
  }
  return "Unknown";
}

std::string_view to_string(DomainKind kind) {
  switch (kind) {
    case DomainKind::Package: return "package";
    case DomainKind::Core: return "core";
    case DomainKind::Uncore: return "uncore";
    case DomainKind::Dram: return "dram";
    case DomainKind::Psys: return "psys";
  }
  return "unknown";
}

std::optional<DomainKind> parse_domain_kind(std::string_view name) {
  for (DomainKind kind : kAllDomainKinds) {
    if (to_string(kind) == name) return kind;
  }
  return std::nullopt;
}

std::string to_string(const EnergyDomain& domain) {
  return std::string(to_string(domain.kind)) + "-" +
         std::to_string(domain.socket);
}

std::optional<EnergyDomain> parse_domain(std::string_view text) {
  auto dash = text.rfind('-');
  if (dash == std::string_view::npos) return std::nullopt;
  auto kind = parse_domain_kind(text.substr(0, dash));
  if (!kind) return std::nullopt;
  auto digits = text.substr(dash + 1);
  unsigned socket = 0;
  auto [ptr, ec] =
      std::from_chars(digits.data(), digits.data() + digits.size(), socket);
  if (ec != std::errc{} || ptr != digits.data() + digits.size() ||
      digits.empty()) {
    return std::nullopt;
  }
  return EnergyDomain{*kind, socket};
}

std::int64_t SteadyClock::now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

bool SteadyClock::sleep_until(std::int64_t deadline_ns, std::stop_token stop) {
  using namespace std::chrono;
  const steady_clock::time_point deadline{nanoseconds(deadline_ns)};
  std::unique_lock lock(mutex_);
  cv_.wait_until(lock, stop, deadline, [] { return false; });
  return !stop.stop_requested();
}

bool ManualClock::sleep_until(std::int64_t deadline_ns, std::stop_token stop) {
  if (stop.stop_requested()) return false;
  if (deadline_ns > now_) now_ = deadline_ns;
  return true;
}

}  // namespace manai
