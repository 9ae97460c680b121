#pragma once

#include <filesystem>
#include <string>

#include "savprobe/rng.hpp"
#include "savprobe/simnet.hpp"

namespace fixtures {

using namespace savprobe;

inline SimTopology base_topology() {
  SimTopology t;
  t.scanner_net.prefix = Prefix::from_string("198.18.0.0/24");
  t.scanner_net.asn = Asn{64500};
  t.scanner_ip = Ip4::from_string("198.18.0.10");
  t.collector_ip = Ip4::from_string("198.18.0.53");
  return t;
}

/// Host `offset` of `prefix`.
inline Ip4 host(const Prefix& prefix, std::uint32_t offset) { return Ip4{prefix.base().value + offset}; }

/// Mixed-policy internet: /24s and /23s with random inbound/outbound SAV,
/// resolvers of every mode and scope, forwarder chains into shared public
/// resolvers, and /24s split into two /25s with opposite inbound policy.
inline SimTopology mixed_topology(std::size_t count, std::uint64_t seed, double loss = 0.0) {
  SimTopology t = base_topology();
  t.rng_seed = seed;
  SplitMix rng(seed);
  std::uint32_t next = Ip4::from_string("20.0.0.0").value;
  std::vector<Ip4> public_resolvers;

  auto add = [&](std::uint8_t len) -> SimNetwork& {
    SimNetwork n;
    const std::uint32_t size = 1u << (32 - len);
    next = (next + size - 1) & ~(size - 1);
    n.prefix = Prefix(Ip4{next}, len);
    next += static_cast<std::uint32_t>(n.prefix.size());
    n.asn = Asn{static_cast<std::uint32_t>(65000 + t.networks.size() / 3)};
    n.inbound_sav = rng.bernoulli(0.4);
    n.outbound_sav = rng.bernoulli(0.3);
    n.loss = loss;
    t.networks.push_back(std::move(n));
    return t.networks.back();
  };

  // Shared upstream resolvers, unfiltered and filtered.
  for (int i = 0; i < 8; ++i) {
    auto& n = add(24);
    n.inbound_sav = i % 2 == 1;
    n.outbound_sav = false;
    SimResolver r;
    r.ip = host(n.prefix, 8);
    public_resolvers.push_back(r.ip);
    n.resolvers.push_back(r);
  }

  while (t.networks.size() < count) {
    const double kind = rng.unit();
    if (kind < 0.06 && t.networks.size() + 2 <= count) {
      // One /24 made of two /25s with opposite inbound filtering.
      for (int half = 0; half < 2; ++half) {
        auto& n = add(25);
        n.inbound_sav = half == 1;
        n.outbound_sav = false;
        for (std::uint32_t k = 0; k < 2; ++k) {
          SimResolver r;
          r.ip = host(n.prefix, 10 + 20 * k);
          n.resolvers.push_back(r);
        }
      }
      continue;
    }
    auto& n = add(kind < 0.15 ? 23 : 24);
    if (rng.bernoulli(0.1))
      continue; // no resolvers
    const std::uint32_t resolvers = 1 + static_cast<std::uint32_t>(rng.below(4));
    std::vector<Ip4> local;
    for (std::uint32_t k = 0; k < resolvers; ++k) {
      SimResolver r;
      r.ip = host(n.prefix, 3 + 17 * k + static_cast<std::uint32_t>(rng.below(10)));
      const double scope = rng.unit();
      r.scope = scope < 0.6 ? ResolverScope::open
                : scope < 0.85 ? ResolverScope::closed_to_outside
                               : ResolverScope::refuses_own_lan;
      const double mode = rng.unit();
      if (mode < 0.45) {
        r.mode = ResolverMode::non_forwarder;
      } else {
        r.mode = ResolverMode::forwarder;
        r.rewrites_source = !rng.bernoulli(0.15);
        if (!local.empty() && mode < 0.6)
          r.upstream = local[rng.below(local.size())]; // chain inside the network
        else
          r.upstream = public_resolvers[rng.below(public_resolvers.size())];
      }
      local.push_back(r.ip);
      n.resolvers.push_back(r);
    }
  }
  t.validate();
  return t;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("savprobe_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

} // namespace fixtures
