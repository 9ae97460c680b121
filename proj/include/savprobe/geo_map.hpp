#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "savprobe/ip.hpp"

namespace savprobe {

struct GeoRange {
  Ip4 start;
  Ip4 end; // inclusive
  std::string country;
};

/// Sorted, non-overlapping address ranges tagged with a country code.
class GeoMap {
public:
  GeoMap() = default;
  /// Throws InputError on overlapping or inverted ranges.
  explicit GeoMap(std::vector<GeoRange> ranges);

  /// CSV `start_ip,end_ip,country` with optional header.
  static GeoMap load(const std::filesystem::path& path);

  /// Country of `ip`, std::nullopt when unmapped.
  std::optional<std::string> lookup(Ip4 ip) const;

  /// Country covering most addresses of `block`, computed by range
  /// intersection. Unmapped addresses do not vote; ties go to the
  /// lexicographically smallest code and set `*tie` when given.
  std::optional<std::string> majority(const Prefix& block, bool* tie = nullptr) const;

  const std::vector<GeoRange>& ranges() const { return ranges_; }

private:
  std::vector<GeoRange> ranges_;
};

} // namespace savprobe
