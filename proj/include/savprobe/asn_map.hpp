#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "savprobe/routing_table.hpp"

namespace savprobe {

struct Asn {
  std::uint32_t value = 0;
  std::string to_string() const { return "AS" + std::to_string(value); }
  friend constexpr auto operator<=>(Asn, Asn) = default;
};

/// Prefix-to-origin-AS mapping with longest-match lookup. Unmapped addresses
/// yield std::nullopt ("unknown AS"), never a made-up number.
class AsnMap {
public:
  /// Adds a mapping. A second ASN for the same prefix (MOAS) keeps the
  /// smallest ASN and bumps moas_conflicts().
  void add(const Prefix& prefix, Asn asn);

  /// CSV `prefix,asn`; an optional header line and `AS` prefixes on numbers are accepted.
  static AsnMap load(const std::filesystem::path& path);

  std::optional<Asn> lookup(Ip4 ip) const;

  /// Announced prefixes of `asn` after overlap elimination.
  RoutingTable prefixes_of(Asn asn) const;

  std::size_t size() const { return by_asn_size_; }
  std::size_t moas_conflicts() const { return moas_; }
  /// Prefixes that had more than one origin, with every origin seen.
  const std::map<Prefix, std::vector<Asn>>& moas_report() const { return moas_report_; }

private:
  PrefixMap<Asn> map_;
  std::map<Asn, std::vector<Prefix>> by_asn_;
  std::size_t by_asn_size_ = 0;
  std::size_t moas_ = 0;
  std::map<Prefix, std::vector<Asn>> moas_report_;
};

} // namespace savprobe
