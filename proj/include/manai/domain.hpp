#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace manai {

/// RAPL power domains, declared in the order counters are read.
enum class DomainKind { Package, Core, Uncore, Dram, Psys };

inline constexpr DomainKind kAllDomainKinds[] = {
    DomainKind::Package, DomainKind::Core, DomainKind::Uncore,
    DomainKind::Dram, DomainKind::Psys};

std::string_view to_string(DomainKind kind);
std::optional<DomainKind> parse_domain_kind(std::string_view name);

struct EnergyDomain {
  DomainKind kind = DomainKind::Package;
  unsigned socket = 0;

  auto operator<=>(const EnergyDomain&) const = default;
};

/// Renders as `package-0`, `dram-1`, ...
std::string to_string(const EnergyDomain& domain);
std::optional<EnergyDomain> parse_domain(std::string_view text);

/// Ordered by (kind, socket), which is also the probe read order.
template <typename T>
using EnergyMap = std::map<EnergyDomain, T>;

}  // namespace manai
