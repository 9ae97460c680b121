#include "savprobe/simnet.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>

#include "savprobe/dns.hpp"
#include "savprobe/error.hpp"
#include "savprobe/packet.hpp"
#include "savprobe/target_plan.hpp"

namespace savprobe {

namespace {

constexpr int scanner_index = -1;
constexpr int no_network = -2;
constexpr int max_chain = 16;

std::string to_string(ResolverMode m) { return m == ResolverMode::forwarder ? "forwarder" : "non-forwarder"; }

std::string to_string(ResolverScope s) {
  switch (s) {
  case ResolverScope::open:
    return "open";
  case ResolverScope::closed_to_outside:
    return "closed-to-outside";
  case ResolverScope::refuses_own_lan:
    return "refuses-own-lan";
  }
  return "?";
}

nlohmann::json network_json(const SimNetwork& n) {
  nlohmann::json resolvers = nlohmann::json::array();
  for (const auto& r : n.resolvers) {
    nlohmann::json jr{{"ip", r.ip.to_string()}, {"mode", to_string(r.mode)}, {"scope", to_string(r.scope)}};
    if (r.mode == ResolverMode::forwarder) {
      jr["upstream"] = r.upstream.to_string();
      jr["rewrites_source"] = r.rewrites_source;
    }
    resolvers.push_back(std::move(jr));
  }
  return {{"prefix", n.prefix.to_string()}, {"asn", n.asn.value},        {"inbound_sav", n.inbound_sav},
          {"outbound_sav", n.outbound_sav}, {"loss", n.loss},              {"resolvers", std::move(resolvers)}};
}

SimNetwork network_from_json(const nlohmann::json& j) {
  SimNetwork n;
  n.prefix = Prefix::from_string(j.at("prefix").get<std::string>());
  n.asn = Asn{j.at("asn").get<std::uint32_t>()};
  n.inbound_sav = j.value("inbound_sav", false);
  n.outbound_sav = j.value("outbound_sav", false);
  n.loss = j.value("loss", 0.0);
  for (const auto& jr : j.value("resolvers", nlohmann::json::array())) {
    SimResolver r;
    r.ip = Ip4::from_string(jr.at("ip").get<std::string>());
    auto mode = jr.value("mode", std::string("non-forwarder"));
    if (mode == "forwarder")
      r.mode = ResolverMode::forwarder;
    else if (mode != "non-forwarder")
      throw ParseError(fmt::format("unknown resolver mode '{}'", mode));
    auto scope = jr.value("scope", std::string("open"));
    if (scope == "open")
      r.scope = ResolverScope::open;
    else if (scope == "closed-to-outside")
      r.scope = ResolverScope::closed_to_outside;
    else if (scope == "refuses-own-lan")
      r.scope = ResolverScope::refuses_own_lan;
    else
      throw ParseError(fmt::format("unknown resolver scope '{}'", scope));
    if (r.mode == ResolverMode::forwarder) {
      r.upstream = Ip4::from_string(jr.at("upstream").get<std::string>());
      r.rewrites_source = jr.value("rewrites_source", true);
    }
    n.resolvers.push_back(r);
  }
  return n;
}

bool accepts(const SimResolver& r, const SimNetwork& home, Ip4 src) {
  switch (r.scope) {
  case ResolverScope::open:
    return true;
  case ResolverScope::closed_to_outside:
    return home.prefix.contains(src);
  case ResolverScope::refuses_own_lan:
    return !home.prefix.contains(src);
  }
  return false;
}

std::string lowercase(std::string s) {
  for (auto& c : s)
    if (c >= 'A' && c <= 'Z')
      c = static_cast<char>(c - 'A' + 'a');
  return s;
}

} // namespace

std::string to_string(SimEventKind k) {
  switch (k) {
  case SimEventKind::delivered:
    return "delivered";
  case SimEventKind::dropped_outbound_sav:
    return "dropped_outbound_sav";
  case SimEventKind::dropped_inbound_sav:
    return "dropped_inbound_sav";
  case SimEventKind::dropped_transit:
    return "dropped_transit";
  case SimEventKind::dropped_loss:
    return "dropped_loss";
  case SimEventKind::unrouted:
    return "unrouted";
  case SimEventKind::no_listener:
    return "no_listener";
  case SimEventKind::refused:
    return "refused";
  case SimEventKind::auth_arrival:
    return "auth_arrival";
  case SimEventKind::scanner_arrival:
    return "scanner_arrival";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Topology

void SimTopology::validate() const {
  std::vector<Prefix> all;
  all.push_back(scanner_net.prefix);
  for (const auto& n : networks)
    all.push_back(n.prefix);
  std::sort(all.begin(), all.end(), [](const Prefix& a, const Prefix& b) { return a.base() < b.base(); });
  for (std::size_t i = 1; i < all.size(); ++i)
    if (all[i - 1].contains(all[i].base()) || all[i].contains(all[i - 1].base()))
      throw InputError(fmt::format("network prefixes overlap: {} and {}", all[i - 1].to_string(), all[i].to_string()));
  if (!scanner_net.prefix.contains(scanner_ip))
    throw InputError("scanner_ip must lie inside scanner_net");
  if (!scanner_net.prefix.contains(collector_ip))
    throw InputError("collector_ip must lie inside scanner_net");
  if (!(transit_filter >= 0.0 && transit_filter <= 1.0))
    throw InputError("transit_filter must be in [0,1]");
  if (duplicate_queries == 0)
    throw InputError("duplicate_queries must be at least 1");

  std::unordered_map<Ip4, const SimResolver*> by_ip;
  for (const auto* n : [&] {
         std::vector<const SimNetwork*> v{&scanner_net};
         for (const auto& x : networks)
           v.push_back(&x);
         return v;
       }()) {
    if (!(n->loss >= 0.0 && n->loss <= 1.0))
      throw InputError(fmt::format("loss of {} must be in [0,1]", n->prefix.to_string()));
    for (const auto& r : n->resolvers) {
      if (!n->prefix.contains(r.ip))
        throw InputError(fmt::format("resolver {} outside its network {}", r.ip.to_string(), n->prefix.to_string()));
      if (!by_ip.emplace(r.ip, &r).second)
        throw InputError(fmt::format("duplicate resolver {}", r.ip.to_string()));
    }
  }
  for (const auto& [ip, r] : by_ip) {
    const SimResolver* cur = r;
    for (int depth = 0; cur->mode == ResolverMode::forwarder; ++depth) {
      auto it = by_ip.find(cur->upstream);
      if (it == by_ip.end())
        throw InputError(fmt::format("forwarder {} has unknown upstream {}", cur->ip.to_string(),
                                     cur->upstream.to_string()));
      if (depth >= max_chain)
        throw InputError(fmt::format("forwarding chain from {} loops or is too deep", ip.to_string()));
      cur = it->second;
    }
  }
}

nlohmann::json SimTopology::to_json() const {
  nlohmann::json nets = nlohmann::json::array();
  for (const auto& n : networks)
    nets.push_back(network_json(n));
  return {{"rng_seed", rng_seed},
          {"transit_filter", transit_filter},
          {"duplicate_queries", duplicate_queries},
          {"scanner_ip", scanner_ip.to_string()},
          {"collector_ip", collector_ip.to_string()},
          {"scanner_net", network_json(scanner_net)},
          {"networks", std::move(nets)}};
}

SimTopology SimTopology::from_json(const nlohmann::json& j) {
  try {
    SimTopology t;
    t.rng_seed = j.value("rng_seed", std::uint64_t{0});
    t.transit_filter = j.value("transit_filter", 0.0);
    t.duplicate_queries = j.value("duplicate_queries", 1u);
    t.scanner_ip = Ip4::from_string(j.at("scanner_ip").get<std::string>());
    t.collector_ip = Ip4::from_string(j.at("collector_ip").get<std::string>());
    t.scanner_net = network_from_json(j.at("scanner_net"));
    for (const auto& jn : j.at("networks"))
      t.networks.push_back(network_from_json(jn));
    t.validate();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("topology: ") + e.what());
  } catch (const InputError& e) {
    throw ParseError(std::string("topology: ") + e.what());
  }
}

SimTopology SimTopology::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw ParseError("cannot open " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded())
    throw ParseError(path.string() + ": invalid JSON");
  return from_json(j);
}

RoutingTable SimTopology::routing_table() const {
  std::vector<Prefix> ps;
  for (const auto& n : networks)
    ps.push_back(n.prefix);
  return RoutingTable::aggregate(ps);
}

AsnMap SimTopology::asn_map() const {
  AsnMap m;
  m.add(scanner_net.prefix, scanner_net.asn);
  for (const auto& n : networks)
    m.add(n.prefix, n.asn);
  return m;
}

// ---------------------------------------------------------------------------
// Packet-level simulation

SimTransport::SimTransport(SimTopology topology, AuthServer& auth, std::uint64_t run_seed, bool record_trace)
    : topology_(std::move(topology)), auth_(auth), rng_(mix64(topology_.rng_seed, run_seed)),
      record_trace_(record_trace) {
  topology_.validate();
  index_.emplace_back(topology_.scanner_net.prefix, scanner_index);
  for (std::size_t i = 0; i < topology_.networks.size(); ++i) {
    const auto& n = topology_.networks[i];
    index_.emplace_back(n.prefix, static_cast<int>(i));
    for (std::size_t k = 0; k < n.resolvers.size(); ++k)
      resolvers_.emplace(n.resolvers[k].ip, std::pair{static_cast<int>(i), k});
  }
  for (std::size_t k = 0; k < topology_.scanner_net.resolvers.size(); ++k)
    resolvers_.emplace(topology_.scanner_net.resolvers[k].ip, std::pair{scanner_index, k});
  std::sort(index_.begin(), index_.end(), [](const auto& a, const auto& b) { return a.first.base() < b.first.base(); });
}

int SimTransport::network_of(Ip4 ip) const {
  auto it = std::upper_bound(index_.begin(), index_.end(), ip,
                             [](Ip4 v, const std::pair<Prefix, int>& e) { return v < e.first.base(); });
  if (it == index_.begin())
    return no_network;
  --it;
  return it->first.contains(ip) ? it->second : no_network;
}

const SimNetwork& SimTransport::net(int index) const {
  return index == scanner_index ? topology_.scanner_net : topology_.networks[static_cast<std::size_t>(index)];
}

void SimTransport::emit(SimEventKind kind, const Packet& p, std::vector<SimEvent>& events) {
  events.push_back({clock_.now(), kind, p.src, p.dst});
}

void SimTransport::send(std::span<const std::uint8_t> packet, Ip4 dst) {
  auto udp = parse_udp(packet);
  if (!udp || udp->dst != dst)
    throw TransportError("simulated transport: not a valid IPv4/UDP datagram for " + dst.to_string());
  deliver(packet);
}

std::vector<SimEvent> SimTransport::deliver(std::span<const std::uint8_t> packet) {
  auto udp = parse_udp(packet);
  if (!udp)
    throw TransportError("simulated transport: malformed datagram");
  std::lock_guard lock(mutex_);
  std::deque<Packet> queue;
  queue.push_back({udp->src, udp->dst, udp->sport, udp->dport, {udp->payload.begin(), udp->payload.end()},
                   scanner_index});
  std::vector<SimEvent> events;
  process(queue, events);
  for (const auto& e : events)
    ++counters_[e.kind];
  if (record_trace_)
    trace_.insert(trace_.end(), events.begin(), events.end());
  return events;
}

void SimTransport::process(std::deque<Packet>& queue, std::vector<SimEvent>& events) {
  while (!queue.empty()) {
    Packet p = std::move(queue.front());
    queue.pop_front();
    const int to = network_of(p.dst);
    if (to == no_network) {
      emit(SimEventKind::unrouted, p, events);
      continue;
    }
    if (to != p.from_net) {
      const SimNetwork& from_net = net(p.from_net);
      const SimNetwork& to_net = net(to);
      const bool legit = from_net.prefix.contains(p.src);
      if (from_net.outbound_sav && !legit) {
        emit(SimEventKind::dropped_outbound_sav, p, events);
        continue;
      }
      if (!legit && rng_.bernoulli(topology_.transit_filter)) {
        emit(SimEventKind::dropped_transit, p, events);
        continue;
      }
      if (to_net.inbound_sav && to_net.prefix.contains(p.src)) {
        emit(SimEventKind::dropped_inbound_sav, p, events);
        continue;
      }
      if (rng_.bernoulli(to_net.loss)) {
        emit(SimEventKind::dropped_loss, p, events);
        continue;
      }
    }
    emit(SimEventKind::delivered, p, events);

    if (p.dst == topology_.collector_ip && p.dport == 53) {
      emit(SimEventKind::auth_arrival, p, events);
      if (auto resp = auth_.handle(p.src, p.payload, clock_.now()))
        queue.push_back({p.dst, p.src, 53, p.sport, std::move(*resp), to});
      continue;
    }
    if (p.dst == topology_.scanner_ip) {
      emit(SimEventKind::scanner_arrival, p, events);
      inbound_.push_back(Datagram{p.src, p.sport, p.payload, clock_.now()});
      continue;
    }
    auto r = resolvers_.find(p.dst);
    if (r == resolvers_.end()) {
      emit(SimEventKind::no_listener, p, events);
      continue;
    }
    const auto& resolver = net(r->second.first).resolvers[r->second.second];
    on_resolver(resolver, r->second.first, p, queue, events);
  }
}

void SimTransport::on_resolver(const SimResolver& r, int net_index, const Packet& p, std::deque<Packet>& queue,
                               std::vector<SimEvent>& events) {
  auto msg = dns::decode(p.payload);
  if (!msg || msg->questions.size() != 1) {
    emit(SimEventKind::no_listener, p, events);
    return;
  }
  const std::string qname = lowercase(msg->questions.front().name);

  if (msg->flags.qr) {
    // Answer to one of our own upstream queries: relay it to the client.
    auto key = std::pair{r.ip.value, fmt::format("{}:{}", msg->id, qname)};
    auto it = pending_.find(key);
    if (it == pending_.end()) {
      emit(SimEventKind::no_listener, p, events);
      return;
    }
    PendingQuery client = it->second;
    pending_.erase(it);
    dns::Message relay = *msg;
    relay.id = client.client_txid;
    relay.flags.ra = true;
    relay.flags.aa = false;
    queue.push_back({r.ip, client.client, 53, client.client_port, dns::encode(relay), net_index});
    return;
  }
  if (p.dport != 53) {
    emit(SimEventKind::no_listener, p, events);
    return;
  }
  const SimNetwork& home = net(net_index);
  if (!accepts(r, home, p.src)) {
    emit(SimEventKind::refused, p, events);
    dns::Message resp;
    resp.id = msg->id;
    resp.flags.qr = true;
    resp.flags.rd = msg->flags.rd;
    resp.flags.rcode = static_cast<std::uint8_t>(dns::Rcode::refused);
    resp.questions = msg->questions;
    queue.push_back({r.ip, p.src, 53, p.sport, dns::encode(resp), net_index});
    return;
  }

  const Ip4 next_hop = r.mode == ResolverMode::non_forwarder ? topology_.collector_ip : r.upstream;
  if (r.mode == ResolverMode::forwarder && !r.rewrites_source) {
    // Relays the client's packet unchanged apart from the destination.
    queue.push_back({p.src, next_hop, p.sport, 53, p.payload, net_index});
    return;
  }
  const std::uint16_t txid = static_cast<std::uint16_t>(mix64(r.ip.value, mix64(msg->id, qname.size())) >> 48);
  pending_[{r.ip.value, fmt::format("{}:{}", txid, qname)}] = PendingQuery{p.src, p.sport, msg->id};
  dns::Message upstream = *msg;
  upstream.id = txid;
  upstream.flags.rd = r.mode == ResolverMode::forwarder;
  auto payload = dns::encode(upstream);
  const std::uint16_t port = next_port_++;
  if (next_port_ == 0)
    next_port_ = 20000;
  const std::uint32_t copies = r.mode == ResolverMode::non_forwarder ? topology_.duplicate_queries : 1;
  for (std::uint32_t i = 0; i < copies; ++i)
    queue.push_back({r.ip, next_hop, port, 53, payload, net_index});
}

std::optional<Datagram> SimTransport::receive(double) {
  std::lock_guard lock(mutex_);
  if (inbound_.empty())
    return std::nullopt;
  Datagram d = std::move(inbound_.front());
  inbound_.pop_front();
  return d;
}

std::vector<SimEvent> SimTransport::trace() const {
  std::lock_guard lock(mutex_);
  return trace_;
}

std::map<SimEventKind, std::uint64_t> SimTransport::counters() const {
  std::lock_guard lock(mutex_);
  return counters_;
}

// ---------------------------------------------------------------------------
// Analytic ground truth

namespace {

class PolicyModel {
public:
  explicit PolicyModel(const SimTopology& t) : t_(t) {
    for (std::size_t i = 0; i < t.networks.size(); ++i)
      for (const auto& r : t.networks[i].resolvers)
        where_[r.ip] = {&t.networks[i], &r};
    for (const auto& r : t.scanner_net.resolvers)
      where_[r.ip] = {&t.scanner_net, &r};
  }

  const SimNetwork* home_of(Ip4 ip) const {
    if (t_.scanner_net.prefix.contains(ip))
      return &t_.scanner_net;
    for (const auto& n : t_.networks)
      if (n.prefix.contains(ip))
        return &n;
    return nullptr;
  }

  /// A packet with source `src` sent from network `from` reaches network `to`.
  static bool path_ok(const SimNetwork* from, const SimNetwork* to, Ip4 src) {
    if (from == to)
      return true;
    if (from->outbound_sav && !from->prefix.contains(src))
      return false;
    if (to->inbound_sav && to->prefix.contains(src))
      return false;
    return true;
  }

  /// Resolver at `ip` received a query from `src`: does the query reach the collector?
  bool resolves(Ip4 ip, Ip4 src, int depth = 0) const {
    const auto& [home, r] = where_.at(ip);
    if (depth > max_chain || !accepts(*r, *home, src))
      return false;
    if (r->mode == ResolverMode::non_forwarder)
      return path_ok(home, &t_.scanner_net, r->ip);
    const Ip4 fsrc = r->rewrites_source ? r->ip : src;
    const auto& up_home = where_.at(r->upstream).first;
    return path_ok(home, up_home, fsrc) && resolves(r->upstream, fsrc, depth + 1);
  }

  /// Address the final answer to a client query arrives from.
  Ip4 responder(Ip4 ip) const {
    const SimResolver* r = where_.at(ip).second;
    for (int depth = 0; r->mode == ResolverMode::forwarder && !r->rewrites_source && depth <= max_chain; ++depth)
      r = where_.at(r->upstream).second;
    return r->ip;
  }

  const std::unordered_map<Ip4, std::pair<const SimNetwork*, const SimResolver*>>& resolvers() const { return where_; }

private:
  const SimTopology& t_;
  std::unordered_map<Ip4, std::pair<const SimNetwork*, const SimResolver*>> where_;
};

} // namespace

GroundTruth ground_truth(const SimTopology& topology) {
  topology.validate();
  PolicyModel model(topology);
  const RoutingTable table = topology.routing_table();
  const SimNetwork* scanner = &topology.scanner_net;
  GroundTruth gt;
  std::map<Prefix, EvidenceCounts> tally;
  for (const auto& n : topology.networks) {
    for (const auto& r : n.resolvers) {
      auto prefix = table.lookup(r.ip);
      if (!prefix || !is_usable_host(r.ip, *prefix))
        continue; // never probed
      const Ip4 spoofed_src = spoof_source(r.ip, *prefix);
      const bool spoofed_hit = PolicyModel::path_ok(scanner, &n, spoofed_src) && model.resolves(r.ip, spoofed_src);
      const bool answered = PolicyModel::path_ok(scanner, &n, topology.scanner_ip) &&
                            model.resolves(r.ip, topology.scanner_ip);
      const Ip4 from = model.responder(r.ip);
      if (answered && from != r.ip)
        gt.leaking_forwarders.emplace(r.ip, from);
      std::optional<Outcome> outcome;
      if (spoofed_hit)
        outcome = Outcome::vulnerable;
      else if (answered && from == r.ip)
        outcome = Outcome::sav_present;
      if (!outcome)
        continue;
      gt.per_resolver[r.ip] = *outcome;
      auto& c = tally[to_slash24(r.ip)];
      ++(*outcome == Outcome::vulnerable ? c.spoofed_hits : c.sav_hits);
    }
  }
  for (const auto& [block, counts] : tally)
    gt.per_slash24[block] = *classify(counts);
  return gt;
}

} // namespace savprobe
