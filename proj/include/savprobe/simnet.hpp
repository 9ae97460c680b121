#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "savprobe/asn_map.hpp"
#include "savprobe/auth_collector.hpp"
#include "savprobe/inference.hpp"
#include "savprobe/rng.hpp"
#include "savprobe/transport.hpp"

namespace savprobe {

enum class ResolverMode { non_forwarder, forwarder };
enum class ResolverScope {
  open,              ///< answers anyone
  closed_to_outside, ///< answers only sources inside its own network
  refuses_own_lan,   ///< answers only sources outside its own network
};

struct SimResolver {
  Ip4 ip;
  ResolverMode mode = ResolverMode::non_forwarder;
  Ip4 upstream;               ///< forwarders only
  bool rewrites_source = true; ///< false reproduces the misbehaving-forwarder leak
  ResolverScope scope = ResolverScope::open;
};

struct SimNetwork {
  Prefix prefix;
  Asn asn;
  bool inbound_sav = false;
  bool outbound_sav = false;
  double loss = 0.0;
  std::vector<SimResolver> resolvers;
};

struct SimTopology {
  std::vector<SimNetwork> networks;
  SimNetwork scanner_net;
  Ip4 scanner_ip;
  Ip4 collector_ip;            ///< authoritative server, inside scanner_net
  double transit_filter = 0.0; ///< per-packet drop probability for illegitimate sources crossing networks
  std::uint64_t rng_seed = 0;
  std::uint32_t duplicate_queries = 1; ///< >1 makes resolvers repeat upstream queries (dedup testing)

  /// Throws InputError describing the first violated invariant.
  void validate() const;

  nlohmann::json to_json() const;
  static SimTopology from_json(const nlohmann::json& j);
  static SimTopology load(const std::filesystem::path& path);

  /// Aggregated routing table of the probed networks (scanner network excluded).
  RoutingTable routing_table() const;
  /// Every network including the scanner's.
  AsnMap asn_map() const;
};

enum class SimEventKind {
  delivered,
  dropped_outbound_sav,
  dropped_inbound_sav,
  dropped_transit,
  dropped_loss,
  unrouted,
  no_listener,
  refused,
  auth_arrival,
  scanner_arrival,
};
std::string to_string(SimEventKind k);

struct SimEvent {
  double time = 0.0;
  SimEventKind kind = SimEventKind::delivered;
  Ip4 src;
  Ip4 dst;
  friend bool operator==(const SimEvent&, const SimEvent&) = default;
};

/// Simulated internet behind the Transport interface. Every packet handed to
/// send() is processed to completion (forwarding, resolution, responses)
/// before send() returns; responses addressed to the scanner are queued for
/// receive(). Recursion through root/TLD servers is collapsed: a
/// non-forwarder contacts the collector directly.
class SimTransport final : public Transport {
public:
  /// `auth` receives every query a simulated resolver sends to collector_ip.
  SimTransport(SimTopology topology, AuthServer& auth, std::uint64_t run_seed, bool record_trace = false);

  void send(std::span<const std::uint8_t> packet, Ip4 dst) override;
  std::optional<Datagram> receive(double timeout) override;
  bool receive_blocks() const override { return false; }
  Clock& clock() override { return clock_; }

  /// Injects a packet as if sent by the scanner and returns the events it caused.
  std::vector<SimEvent> deliver(std::span<const std::uint8_t> packet);

  std::vector<SimEvent> trace() const;
  std::map<SimEventKind, std::uint64_t> counters() const;
  const SimTopology& topology() const { return topology_; }

private:
  struct Packet {
    Ip4 src;
    Ip4 dst;
    std::uint16_t sport;
    std::uint16_t dport;
    std::vector<std::uint8_t> payload;
    int from_net;
  };
  struct PendingQuery {
    Ip4 client;
    std::uint16_t client_port;
    std::uint16_t client_txid;
  };

  int network_of(Ip4 ip) const;
  const SimNetwork& net(int index) const;
  void process(std::deque<Packet>& queue, std::vector<SimEvent>& events);
  void on_resolver(const SimResolver& r, int net_index, const Packet& p, std::deque<Packet>& queue,
                   std::vector<SimEvent>& events);
  void emit(SimEventKind kind, const Packet& p, std::vector<SimEvent>& events);

  SimTopology topology_;
  AuthServer& auth_;
  SplitMix rng_;
  bool record_trace_;
  ManualClock clock_;
  std::vector<std::pair<Prefix, int>> index_; // sorted disjoint prefixes -> network index
  std::unordered_map<Ip4, std::pair<int, std::size_t>> resolvers_;
  std::map<std::pair<std::uint32_t, std::string>, PendingQuery> pending_; // (resolver ip, txid+name)
  std::uint16_t next_port_ = 20000;

  mutable std::mutex mutex_;
  std::deque<Datagram> inbound_;
  std::vector<SimEvent> trace_;
  std::map<SimEventKind, std::uint64_t> counters_;
};

/// Expected probe outcome for every probed resolver, derived analytically
/// from the topology's policies (no packets), valid for loss = 0 and
/// transit_filter = 0.
struct GroundTruth {
  std::map<Ip4, Outcome> per_resolver;
  std::map<Prefix, Verdict> per_slash24;
  /// Forwarders expected to answer the unspoofed probe from another address,
  /// with that address.
  std::set<std::pair<Ip4, Ip4>> leaking_forwarders;
};

GroundTruth ground_truth(const SimTopology& topology);

} // namespace savprobe
