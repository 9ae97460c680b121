#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "savprobe/asn_map.hpp"
#include "savprobe/auth_collector.hpp"
#include "savprobe/routing_table.hpp"
#include "savprobe/scan_engine.hpp"
#include "savprobe/target_plan.hpp"

namespace savprobe {

// ---------------------------------------------------------------------------
// Resolver population

enum class Openness { open, closed };

struct ResolverRecord {
  Ip4 ip;
  ProxyClass proxy = ProxyClass::forwarder;
  Openness openness = Openness::closed;
};

/// One record per probed address that reached the collector (either scan
/// tag). A resolver is a non-forwarder if any of its queries arrived from its
/// own address.
std::vector<ResolverRecord> resolver_records(const ObservationLog& log, const std::set<Ip4>& open);

struct ResolverCounts {
  std::uint64_t forwarders_open = 0;
  std::uint64_t forwarders_closed = 0;
  std::uint64_t non_forwarders_open = 0;
  std::uint64_t non_forwarders_closed = 0;
};
ResolverCounts count_resolvers(std::span<const ResolverRecord> records);

// ---------------------------------------------------------------------------
// Inbound evidence and verdicts

enum class Outcome { vulnerable, sav_present };

struct InboundEvidence {
  /// Per probed resolver address: at most one outcome each.
  std::map<Ip4, Outcome> per_resolver;
  std::uint64_t unspoofed_tag_ignored = 0;  ///< `n*` observations offered as spoofed evidence
  std::uint64_t cross_network_forwards = 0; ///< spoofed hits that arrived from another /24
  std::uint64_t excluded = 0;               ///< targets dropped by the exclusion list
};

/// Every target decoded from a spoofed-scan observation is vulnerable; every
/// open resolver that never resolved its spoofed probe is SAV-present.
/// `spoofed` is expected to be deduplicated already.
InboundEvidence inbound_evidence(const ObservationLog& spoofed, const std::set<Ip4>& open,
                                 const ExclusionList* exclusions = nullptr);

enum class Verdict { S, NS, I };
std::string to_string(Verdict v);

enum class Granularity { slash24, prefix, asn };
std::string to_string(Granularity g);

using UnitKey = std::variant<Prefix, Asn>;
std::string to_string(const UnitKey& unit);

struct EvidenceCounts {
  std::uint64_t spoofed_hits = 0;
  std::uint64_t sav_hits = 0;
  friend bool operator==(const EvidenceCounts&, const EvidenceCounts&) = default;
};

/// S, NS or I; std::nullopt when there is no evidence at all.
std::optional<Verdict> classify(const EvidenceCounts& counts);

struct UnitVerdict {
  UnitKey unit;
  Verdict verdict = Verdict::S;
  EvidenceCounts evidence;
  friend bool operator==(const UnitVerdict&, const UnitVerdict&) = default;
};

struct VerdictTable {
  Granularity granularity = Granularity::slash24;
  std::map<UnitKey, UnitVerdict> units;
  std::uint64_t unmapped = 0; ///< resolvers with no covering prefix / unknown AS

  std::size_t count(Verdict v) const;
  const UnitVerdict* find(const UnitKey& key) const;
};

/// Tallies evidence per unit. `table` is needed for Granularity::prefix and
/// `asn` for Granularity::asn.
VerdictTable verdicts(const InboundEvidence& evidence, Granularity granularity, const RoutingTable* table = nullptr,
                      const AsnMap* asn = nullptr);

/// Union of several runs' deduplicated observations and open sets; the
/// merged evidence lets vulnerable outcomes accumulate across runs.
struct RunData {
  ObservationLog spoofed;
  std::set<Ip4> open;
};
RunData merge_runs(std::span<const RunData> runs);

/// The I-verdict /24s of a slash24 table, as targets for a follow-up scan.
RoutingTable rescan_targets(const VerdictTable& slash24);

// ---------------------------------------------------------------------------
// Outbound side

enum class SpooferOutcome { blocked, rewritten, unknown, received };
std::string to_string(SpooferOutcome s);
std::optional<SpooferOutcome> spoofer_outcome_from_string(std::string_view s);

struct SpooferState {
  Prefix slash24;
  SpooferOutcome state = SpooferOutcome::unknown;
  std::int64_t timestamp = 0; ///< seconds since the epoch
  friend bool operator==(const SpooferState&, const SpooferState&) = default;
};

/// CSV `slash24,state,timestamp`; timestamps are epoch seconds or
/// `YYYY-MM-DD[ T]HH:MM:SS[Z]` UTC. An optional header line is skipped.
std::vector<SpooferState> load_spoofer_csv(const std::filesystem::path& path);

/// Latest record per /24. Equal timestamps keep the outcome ranked highest
/// in received > blocked > rewritten > unknown, so input order never matters.
std::map<Prefix, SpooferState> ingest_spoofer(std::span<const SpooferState> records);

enum class OutboundVerdict { vulnerable, filtered };
std::string to_string(OutboundVerdict v);

struct OutboundResult {
  std::map<Prefix, OutboundVerdict> per_slash24;
  std::uint64_t conflicts = 0;        ///< blocked by Spoofer but leaked through a forwarder
  std::uint64_t excluded_states = 0;  ///< rewritten / unknown records
};

OutboundResult outbound_verdicts(const std::map<Prefix, SpooferState>& spoofer, const ForwarderFindings& forwarders);

struct DirectionCrossTab {
  std::uint64_t no_filtering = 0;     ///< inbound S, outbound vulnerable
  std::uint64_t inbound_only_vuln = 0;  ///< inbound S, outbound filtered
  std::uint64_t outbound_only_vuln = 0; ///< inbound NS, outbound vulnerable
  std::uint64_t both_filtered = 0;    ///< inbound NS, outbound filtered

  std::uint64_t comparable() const { return no_filtering + inbound_only_vuln + outbound_only_vuln + both_filtered; }
  nlohmann::json to_json() const;
  friend bool operator==(const DirectionCrossTab&, const DirectionCrossTab&) = default;
};

/// Restricted to /24s with a consistent (S or NS) inbound verdict and an outbound verdict.
DirectionCrossTab cross_tab(const VerdictTable& inbound_slash24, const OutboundResult& outbound);

} // namespace savprobe
