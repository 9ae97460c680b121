#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "savprobe/asn_map.hpp"
#include "savprobe/geo_map.hpp"
#include "savprobe/inference.hpp"

namespace savprobe {

struct CountryStats {
  std::string country;
  std::uint64_t resolvers = 0;
  std::uint64_t vulnerable_slash24 = 0;
  std::uint64_t total_slash24 = 0;
  double fraction = 0.0;
  friend bool operator==(const CountryStats&, const CountryStats&) = default;
};

struct CountryReport {
  std::vector<CountryStats> countries; ///< ascending country code
  std::uint64_t unlocated_slash24 = 0; ///< no mapped address in the block
  std::uint64_t majority_ties = 0;
};

/// Per-country /24 totals over the routed universe (plus any verdict /24
/// outside it), S-verdict /24s as the vulnerable numerator, and resolvers
/// located individually. Each /24 belongs to the country holding most of its
/// addresses.
CountryReport country_stats(const VerdictTable& slash24_verdicts, std::span<const Ip4> resolvers, const GeoMap& geo,
                            const RoutingTable& universe);

struct CdfPoint {
  std::uint64_t size = 0;
  double cumulative = 0.0;
  friend bool operator==(const CdfPoint&, const CdfPoint&) = default;
};

/// Per verdict class, unit sizes sorted ascending with the cumulative share
/// of units at or below each distinct size.
using SizeCdf = std::map<Verdict, std::vector<CdfPoint>>;

/// Sorted sizes to CDF points (one per distinct size).
std::vector<CdfPoint> to_cdf(std::vector<std::uint64_t> sizes);

/// Prefix size = 2^(32-len). AS size = addresses announced by the AS after
/// overlap elimination.
SizeCdf prefix_size_cdf(const VerdictTable& prefix_verdicts);
SizeCdf as_size_cdf(const VerdictTable& asn_verdicts, const AsnMap& asn);

/// `verdicts_<granularity>.csv`, header `unit,verdict,spoofed_hits,sav_hits`.
void write_verdicts_csv(const VerdictTable& table, const std::filesystem::path& dir);

/// Loads a file written by write_verdicts_csv.
VerdictTable read_verdicts_csv(const std::filesystem::path& path, Granularity granularity);

/// country_stats.csv, as_size_cdf.csv, prefix_size_cdf.csv. Byte-identical
/// for identical inputs; empty inputs produce header-only files.
void emit_reports(const CountryReport& stats, const SizeCdf& as_cdf, const SizeCdf& prefix_cdf,
                  const std::filesystem::path& dir);

} // namespace savprobe
