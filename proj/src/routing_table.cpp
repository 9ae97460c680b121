#include "savprobe/routing_table.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "savprobe/error.hpp"
#include "savprobe/text_io.hpp"

namespace savprobe {

RoutingTable RoutingTable::aggregate(std::span<const Prefix> prefixes) {
  std::vector<Prefix> sorted(prefixes.begin(), prefixes.end());
  // Base ascending, then shorter first: a cover always precedes what it covers.
  std::sort(sorted.begin(), sorted.end(), [](const Prefix& a, const Prefix& b) {
    return a.base() != b.base() ? a.base() < b.base() : a.length() < b.length();
  });
  RoutingTable table;
  for (const auto& p : sorted) {
    if (!table.entries_.empty() && table.entries_.back().contains(p))
      continue;
    table.entries_.push_back(p);
  }
  return table;
}

RoutingTable RoutingTable::load(const std::filesystem::path& path, LoadStats* stats) {
  std::vector<Prefix> prefixes;
  LoadStats local;
  for_each_record(path, [&](std::size_t line, std::string_view text) {
    auto p = Prefix::parse(text);
    if (!p)
      throw ParseError(path.string(), line, fmt::format("malformed prefix '{}'", text));
    ++local.records;
    if (p->length() == 0) {
      ++local.default_routes;
      return;
    }
    prefixes.push_back(*p);
  });
  auto table = aggregate(prefixes);
  local.covered = prefixes.size() - table.size();
  if (stats)
    *stats = local;
  return table;
}

std::optional<Prefix> RoutingTable::lookup(Ip4 ip) const {
  auto it = std::upper_bound(entries_.begin(), entries_.end(), ip,
                             [](Ip4 v, const Prefix& p) { return v < p.base(); });
  if (it == entries_.begin())
    return std::nullopt;
  --it;
  if (it->contains(ip))
    return *it;
  return std::nullopt;
}

bool RoutingTable::intersects(const Prefix& p) const {
  // Either an entry contains p.base(), or some entry starts inside p.
  if (lookup(p.base()))
    return true;
  auto it = std::lower_bound(entries_.begin(), entries_.end(), p.base(),
                             [](const Prefix& e, Ip4 v) { return e.base() < v; });
  return it != entries_.end() && it->base() <= p.last();
}

} // namespace savprobe
