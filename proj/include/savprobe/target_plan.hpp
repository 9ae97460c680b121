#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "savprobe/domain.hpp"
#include "savprobe/routing_table.hpp"

namespace savprobe {

/// Addresses that must never be probed or impersonated.
class ExclusionList {
public:
  ExclusionList() = default;
  explicit ExclusionList(std::span<const Prefix> cidrs) : set_(RoutingTable::aggregate(cidrs)) {}

  /// One CIDR per line, `#` comments. A bare address is read as /32.
  static ExclusionList load(const std::filesystem::path& path);

  bool contains(Ip4 ip) const { return set_.contains(ip); }
  bool intersects(const Prefix& p) const { return set_.intersects(p); }
  const RoutingTable& cidrs() const { return set_; }

private:
  RoutingTable set_;
};

/// Whether `ip` is a probe target of `prefix`: inside it, and for lengths up
/// to /30 not a network or broadcast address. Prefixes of /24 or shorter are
/// treated as a run of /24 blocks, each losing its .0 and .255.
bool is_usable_host(Ip4 ip, const Prefix& prefix);

/// Every usable host of `prefix` in ascending order. Materializes the result;
/// the schedule itself never calls this for large prefixes.
std::vector<Ip4> enumerate_hosts(const Prefix& prefix);
std::uint64_t count_hosts(const Prefix& prefix);

/// Address impersonated when probing `target`: the next usable host of the
/// same prefix, or the previous one when `target` is the last. For a /32 (no
/// other host in the prefix) the neighbour inside the same /24 is used.
Ip4 spoof_source(Ip4 target, const Prefix& prefix);

struct ProbePair {
  Ip4 target;
  Ip4 spoofed_src;
  ProbeDomain spoofed_domain;
  ProbeDomain unspoofed_domain;
  friend bool operator==(const ProbePair&, const ProbePair&) = default;
};

struct ScheduleConfig {
  std::string zone;
  std::uint64_t seed = 0;
  double rate = 10000.0; ///< packets per second
  std::uint32_t scan_sequence = 1;
};

/// Seeded, streaming probe order. Only one small record per /24 block is
/// kept in memory; host addresses are produced on demand.
///
/// Consecutive pairs never target the same /24 unless the remaining targets
/// make that impossible (e.g. a table with a single /24); such forced
/// repeats are counted in adjacency_conflicts().
class ScheduleStream {
public:
  /// Throws InputError when no host remains after exclusions.
  ScheduleStream(const RoutingTable& table, const ExclusionList& exclusions, ScheduleConfig config);
  ~ScheduleStream();
  ScheduleStream(ScheduleStream&&) noexcept;
  ScheduleStream& operator=(ScheduleStream&&) noexcept;

  std::optional<ProbePair> next();

  std::uint64_t total() const;
  std::uint64_t emitted() const;
  std::uint64_t adjacency_conflicts() const;
  /// Hosts dropped because both candidate spoofed sources are excluded.
  std::uint64_t unspoofable() const;
  const ScheduleConfig& config() const;

private:
  struct State;
  std::unique_ptr<State> state_;
};

struct Schedule {
  std::vector<ProbePair> pairs;
  double rate = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t adjacency_conflicts = 0;
};

/// Materialized ScheduleStream.
Schedule build_schedule(const RoutingTable& table, const ExclusionList& exclusions, const std::string& zone,
                        std::uint64_t seed, double rate);

/// Dry-run CSV: header then `target,spoofed_src,spoofed_domain,unspoofed_domain`.
void write_schedule_csv_header(std::ostream& out);
void write_schedule_csv_row(std::ostream& out, const ProbePair& pair);

} // namespace savprobe
