#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "savprobe/inference.hpp"
#include "savprobe/simnet.hpp"

namespace savprobe {

struct SimScanResult {
  std::vector<ScanResponse> responses;
  std::vector<QueryRecord> auth_log;
  ScanRunReport report;
  std::uint64_t scheduled = 0;
  std::uint64_t adjacency_conflicts = 0;
  std::uint64_t unspoofable = 0;
  std::map<SimEventKind, std::uint64_t> events;
};

/// Schedules every usable host of the topology's routed networks and scans
/// them through a SimTransport. `scan_sequence` distinguishes repeated runs
/// (and their loss draws) under one seed. `targets` restricts the scan, as
/// for a re-scan of inconsistent /24s.
SimScanResult simulate_scan(const SimTopology& topology, const std::string& zone, std::uint64_t seed,
                            std::uint32_t scan_sequence = 1, const RoutingTable* targets = nullptr);

/// Decoded and deduplicated collector log plus the open set of one run.
RunData run_data(std::span<const QueryRecord> auth_log, std::span<const ScanResponse> responses,
                 const std::string& zone);

struct AnalysisInput {
  std::string zone;
  RunData run;
  const RoutingTable* table = nullptr;
  const AsnMap* asn = nullptr;
  Ip4 scanner_ip;
  std::vector<ScanResponse> responses; ///< for forwarder detection
  const ExclusionList* exclusions = nullptr;
  std::optional<std::map<Prefix, SpooferState>> spoofer;
};

struct Analysis {
  std::vector<ResolverRecord> resolvers;
  ResolverCounts counts;
  InboundEvidence inbound;
  VerdictTable slash24;
  VerdictTable prefix;
  VerdictTable asn;
  ForwarderFindings forwarders;
  OutboundResult outbound;
  DirectionCrossTab cross;
  std::uint64_t quarantined = 0;

  nlohmann::json diagnostics() const;
};

Analysis analyze(const AnalysisInput& input);

} // namespace savprobe
