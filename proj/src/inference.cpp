#include "savprobe/inference.hpp"

#include <algorithm>
#include <charconv>
#include <ctime>

#include <fmt/format.h>

#include "savprobe/error.hpp"
#include "savprobe/text_io.hpp"

namespace savprobe {

std::vector<ResolverRecord> resolver_records(const ObservationLog& log, const std::set<Ip4>& open) {
  std::map<Ip4, ProxyClass> proxy;
  for (const auto& obs : log.observations) {
    auto cls = classify_proxy(obs);
    auto [it, inserted] = proxy.try_emplace(obs.decoded.target, cls);
    if (!inserted && cls == ProxyClass::non_forwarder)
      it->second = cls;
  }
  std::vector<ResolverRecord> out;
  out.reserve(proxy.size());
  for (const auto& [ip, cls] : proxy)
    out.push_back({ip, cls, open.contains(ip) ? Openness::open : Openness::closed});
  return out;
}

ResolverCounts count_resolvers(std::span<const ResolverRecord> records) {
  ResolverCounts c;
  for (const auto& r : records) {
    bool fwd = r.proxy == ProxyClass::forwarder;
    bool open = r.openness == Openness::open;
    ++(fwd ? (open ? c.forwarders_open : c.forwarders_closed) : (open ? c.non_forwarders_open : c.non_forwarders_closed));
  }
  return c;
}

InboundEvidence inbound_evidence(const ObservationLog& spoofed, const std::set<Ip4>& open,
                                 const ExclusionList* exclusions) {
  InboundEvidence ev;
  for (const auto& obs : spoofed.observations) {
    if (obs.decoded.scan.direction != Direction::spoofed) {
      ++ev.unspoofed_tag_ignored;
      continue;
    }
    const Ip4 target = obs.decoded.target;
    if (exclusions && exclusions->contains(target)) {
      ++ev.excluded;
      continue;
    }
    if (to_slash24(obs.source) != to_slash24(target))
      ++ev.cross_network_forwards;
    ev.per_resolver[target] = Outcome::vulnerable;
  }
  for (Ip4 ip : open) {
    if (exclusions && exclusions->contains(ip)) {
      ++ev.excluded;
      continue;
    }
    ev.per_resolver.try_emplace(ip, Outcome::sav_present);
  }
  return ev;
}

std::string to_string(Verdict v) {
  switch (v) {
  case Verdict::S:
    return "S";
  case Verdict::NS:
    return "NS";
  case Verdict::I:
    return "I";
  }
  return "?";
}

std::string to_string(Granularity g) {
  switch (g) {
  case Granularity::slash24:
    return "slash24";
  case Granularity::prefix:
    return "prefix";
  case Granularity::asn:
    return "asn";
  }
  return "?";
}

std::string to_string(const UnitKey& unit) {
  return std::visit([](const auto& u) { return u.to_string(); }, unit);
}

std::optional<Verdict> classify(const EvidenceCounts& c) {
  if (c.spoofed_hits > 0 && c.sav_hits > 0)
    return Verdict::I;
  if (c.spoofed_hits > 0)
    return Verdict::S;
  if (c.sav_hits > 0)
    return Verdict::NS;
  return std::nullopt;
}

std::size_t VerdictTable::count(Verdict v) const {
  return static_cast<std::size_t>(
      std::count_if(units.begin(), units.end(), [v](const auto& kv) { return kv.second.verdict == v; }));
}

const UnitVerdict* VerdictTable::find(const UnitKey& key) const {
  auto it = units.find(key);
  return it == units.end() ? nullptr : &it->second;
}

VerdictTable verdicts(const InboundEvidence& evidence, Granularity granularity, const RoutingTable* table,
                      const AsnMap* asn) {
  if (granularity == Granularity::prefix && !table)
    throw InputError("prefix granularity needs a routing table");
  if (granularity == Granularity::asn && !asn)
    throw InputError("AS granularity needs an ASN map");
  VerdictTable out;
  out.granularity = granularity;
  std::map<UnitKey, EvidenceCounts> tally;
  for (const auto& [ip, outcome] : evidence.per_resolver) {
    std::optional<UnitKey> key;
    switch (granularity) {
    case Granularity::slash24:
      key = to_slash24(ip);
      break;
    case Granularity::prefix:
      if (auto p = table->lookup(ip))
        key = *p;
      break;
    case Granularity::asn:
      if (auto a = asn->lookup(ip))
        key = *a;
      break;
    }
    if (!key) {
      ++out.unmapped;
      continue;
    }
    auto& c = tally[*key];
    ++(outcome == Outcome::vulnerable ? c.spoofed_hits : c.sav_hits);
  }
  for (const auto& [key, counts] : tally)
    out.units.emplace(key, UnitVerdict{key, *classify(counts), counts});
  return out;
}

RunData merge_runs(std::span<const RunData> runs) {
  RunData merged;
  for (const auto& run : runs) {
    merged.spoofed.observations.insert(merged.spoofed.observations.end(), run.spoofed.observations.begin(),
                                       run.spoofed.observations.end());
    merged.spoofed.quarantined.insert(merged.spoofed.quarantined.end(), run.spoofed.quarantined.begin(),
                                      run.spoofed.quarantined.end());
    merged.open.insert(run.open.begin(), run.open.end());
  }
  merged.spoofed = dedup(merged.spoofed);
  return merged;
}

RoutingTable rescan_targets(const VerdictTable& slash24) {
  std::vector<Prefix> blocks;
  for (const auto& [unit, v] : slash24.units)
    if (v.verdict == Verdict::I)
      if (const auto* p = std::get_if<Prefix>(&unit))
        blocks.push_back(*p);
  return RoutingTable::aggregate(blocks);
}

std::string to_string(SpooferOutcome s) {
  switch (s) {
  case SpooferOutcome::blocked:
    return "blocked";
  case SpooferOutcome::rewritten:
    return "rewritten";
  case SpooferOutcome::unknown:
    return "unknown";
  case SpooferOutcome::received:
    return "received";
  }
  return "?";
}

std::optional<SpooferOutcome> spoofer_outcome_from_string(std::string_view s) {
  for (auto o : {SpooferOutcome::blocked, SpooferOutcome::rewritten, SpooferOutcome::unknown, SpooferOutcome::received})
    if (to_string(o) == s)
      return o;
  return std::nullopt;
}

namespace {

std::optional<std::int64_t> parse_timestamp(std::string_view text) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec == std::errc{} && ptr == text.data() + text.size())
    return v;
  std::tm tm{};
  int y, mo, d, h, mi, s;
  char sep;
  std::string buf(text);
  if (std::sscanf(buf.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d", &y, &mo, &d, &sep, &h, &mi, &s) != 7 ||
      (sep != 'T' && sep != ' '))
    return std::nullopt;
  tm.tm_year = y - 1900;
  tm.tm_mon = mo - 1;
  tm.tm_mday = d;
  tm.tm_hour = h;
  tm.tm_min = mi;
  tm.tm_sec = s;
  return static_cast<std::int64_t>(timegm(&tm));
}

int outcome_rank(SpooferOutcome s) {
  switch (s) {
  case SpooferOutcome::received:
    return 3;
  case SpooferOutcome::blocked:
    return 2;
  case SpooferOutcome::rewritten:
    return 1;
  case SpooferOutcome::unknown:
    return 0;
  }
  return 0;
}

} // namespace

std::vector<SpooferState> load_spoofer_csv(const std::filesystem::path& path) {
  std::vector<SpooferState> out;
  bool first = true;
  for_each_record(path, [&](std::size_t line, std::string_view text) {
    auto f = split_csv(text);
    bool header = first && !f.empty() && f[0] == "slash24";
    first = false;
    if (header)
      return;
    if (f.size() != 3)
      throw ParseError(path.string(), line, fmt::format("expected 'slash24,state,timestamp', got '{}'", text));
    auto p = Prefix::parse(f[0]);
    if (!p) {
      // A bare address stands for its /24.
      if (auto ip = Ip4::parse(f[0]))
        p = to_slash24(*ip);
    }
    if (!p || p->length() != 24)
      throw ParseError(path.string(), line, fmt::format("'{}' is not a /24", f[0]));
    auto state = spoofer_outcome_from_string(f[1]);
    if (!state)
      throw ParseError(path.string(), line, fmt::format("unknown Spoofer state '{}'", f[1]));
    auto ts = parse_timestamp(f[2]);
    if (!ts)
      throw ParseError(path.string(), line, fmt::format("bad timestamp '{}'", f[2]));
    out.push_back({*p, *state, *ts});
  });
  return out;
}

std::map<Prefix, SpooferState> ingest_spoofer(std::span<const SpooferState> records) {
  std::map<Prefix, SpooferState> latest;
  for (const auto& r : records) {
    auto [it, inserted] = latest.try_emplace(r.slash24, r);
    if (inserted)
      continue;
    auto& cur = it->second;
    if (r.timestamp > cur.timestamp ||
        (r.timestamp == cur.timestamp && outcome_rank(r.state) > outcome_rank(cur.state)))
      cur = r;
  }
  return latest;
}

std::string to_string(OutboundVerdict v) { return v == OutboundVerdict::vulnerable ? "vuln" : "filtered"; }

OutboundResult outbound_verdicts(const std::map<Prefix, SpooferState>& spoofer, const ForwarderFindings& forwarders) {
  OutboundResult out;
  for (const auto& [slash24, rec] : spoofer) {
    switch (rec.state) {
    case SpooferOutcome::blocked:
      out.per_slash24[slash24] = OutboundVerdict::filtered;
      break;
    case SpooferOutcome::received:
      out.per_slash24[slash24] = OutboundVerdict::vulnerable;
      break;
    case SpooferOutcome::rewritten:
    case SpooferOutcome::unknown:
      ++out.excluded_states;
      break;
    }
  }
  std::set<Prefix> leaked;
  for (const auto& [forwarder, upstream] : forwarders.misbehaving)
    leaked.insert(to_slash24(forwarder));
  for (const auto& block : leaked) {
    auto [it, inserted] = out.per_slash24.try_emplace(block, OutboundVerdict::vulnerable);
    if (!inserted && it->second == OutboundVerdict::filtered) {
      ++out.conflicts;
      it->second = OutboundVerdict::vulnerable;
    }
  }
  return out;
}

nlohmann::json DirectionCrossTab::to_json() const {
  return {{"no_filtering", no_filtering},
          {"inbound_only_vulnerable", inbound_only_vuln},
          {"outbound_only_vulnerable", outbound_only_vuln},
          {"both_filtered", both_filtered},
          {"comparable", comparable()}};
}

DirectionCrossTab cross_tab(const VerdictTable& inbound_slash24, const OutboundResult& outbound) {
  if (inbound_slash24.granularity != Granularity::slash24)
    throw InputError("cross_tab needs /24 verdicts");
  DirectionCrossTab t;
  for (const auto& [block, out] : outbound.per_slash24) {
    const UnitVerdict* in = inbound_slash24.find(UnitKey{block});
    if (!in || in->verdict == Verdict::I)
      continue;
    bool in_vuln = in->verdict == Verdict::S;
    bool out_vuln = out == OutboundVerdict::vulnerable;
    ++(in_vuln ? (out_vuln ? t.no_filtering : t.inbound_only_vuln) : (out_vuln ? t.outbound_only_vuln : t.both_filtered));
  }
  return t;
}

} // namespace savprobe
