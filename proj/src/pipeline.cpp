#include "savprobe/pipeline.hpp"

#include "savprobe/domain.hpp"

namespace savprobe {

SimScanResult simulate_scan(const SimTopology& topology, const std::string& zone, std::uint64_t seed,
                            std::uint32_t scan_sequence, const RoutingTable* targets) {
  MemoryQueryLog log;
  AuthServer auth(AuthConfig{normalize_zone(zone)}, log);
  SimTransport transport(topology, auth, mix64(seed, scan_sequence));

  const RoutingTable table = targets ? *targets : topology.routing_table();
  ScheduleStream schedule(table, ExclusionList{}, ScheduleConfig{zone, seed, 1e6, scan_sequence});

  ScanOptions options;
  options.scanner_ip = topology.scanner_ip;
  options.txid_key = mix64(seed, 0x7478);
  options.grace = 1.0;
  options.poll_interval = 0.01;
  MemoryResponseSink sink;

  SimScanResult result;
  result.report = run_scan(schedule, transport, sink, options);
  result.responses = sink.snapshot();
  result.auth_log = log.snapshot();
  result.scheduled = schedule.total();
  result.adjacency_conflicts = schedule.adjacency_conflicts();
  result.unspoofable = schedule.unspoofable();
  result.events = transport.counters();
  return result;
}

RunData run_data(std::span<const QueryRecord> auth_log, std::span<const ScanResponse> responses,
                 const std::string& zone) {
  const std::string z = normalize_zone(zone);
  return RunData{dedup(decode_records(auth_log, z)), detect_open(responses, z)};
}

Analysis analyze(const AnalysisInput& in) {
  Analysis a;
  a.resolvers = resolver_records(in.run.spoofed, in.run.open);
  a.counts = count_resolvers(a.resolvers);
  a.quarantined = in.run.spoofed.quarantined.size();
  a.inbound = inbound_evidence(in.run.spoofed, in.run.open, in.exclusions);
  a.slash24 = verdicts(a.inbound, Granularity::slash24);
  if (in.table)
    a.prefix = verdicts(a.inbound, Granularity::prefix, in.table);
  else
    a.prefix.granularity = Granularity::prefix;
  if (in.asn) {
    a.asn = verdicts(a.inbound, Granularity::asn, nullptr, in.asn);
    a.forwarders = detect_misbehaving_forwarders(in.responses, *in.asn, in.scanner_ip, normalize_zone(in.zone));
  } else {
    a.asn.granularity = Granularity::asn;
  }
  a.outbound = outbound_verdicts(in.spoofer.value_or(std::map<Prefix, SpooferState>{}), a.forwarders);
  a.cross = cross_tab(a.slash24, a.outbound);
  return a;
}

nlohmann::json Analysis::diagnostics() const {
  auto table_json = [](const VerdictTable& t) {
    return nlohmann::json{{"S", t.count(Verdict::S)},
                          {"NS", t.count(Verdict::NS)},
                          {"I", t.count(Verdict::I)},
                          {"unmapped", t.unmapped}};
  };
  return {{"resolvers",
           {{"forwarders_open", counts.forwarders_open},
            {"forwarders_closed", counts.forwarders_closed},
            {"non_forwarders_open", counts.non_forwarders_open},
            {"non_forwarders_closed", counts.non_forwarders_closed}}},
          {"quarantined", quarantined},
          {"inbound",
           {{"resolvers_with_evidence", inbound.per_resolver.size()},
            {"unspoofed_tag_ignored", inbound.unspoofed_tag_ignored},
            {"cross_network_forwards", inbound.cross_network_forwards},
            {"excluded", inbound.excluded}}},
          {"verdicts",
           {{"slash24", table_json(slash24)}, {"prefix", table_json(prefix)}, {"asn", table_json(asn)}}},
          {"forwarders",
           {{"misbehaving", forwarders.misbehaving.size()},
            {"private_responders", forwarders.private_responders},
            {"same_as", forwarders.same_as},
            {"unknown_as", forwarders.unknown_as}}},
          {"outbound",
           {{"slash24", outbound.per_slash24.size()},
            {"conflicts", outbound.conflicts},
            {"excluded_states", outbound.excluded_states}}}};
}

} // namespace savprobe
