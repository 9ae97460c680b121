#include "savprobe/geo_map.hpp"

#include <algorithm>
#include <map>

#include <fmt/format.h>

#include "savprobe/error.hpp"
#include "savprobe/text_io.hpp"

namespace savprobe {

GeoMap::GeoMap(std::vector<GeoRange> ranges) : ranges_(std::move(ranges)) {
  std::sort(ranges_.begin(), ranges_.end(), [](const GeoRange& a, const GeoRange& b) { return a.start < b.start; });
  for (std::size_t i = 0; i < ranges_.size(); ++i) {
    if (ranges_[i].end < ranges_[i].start)
      throw InputError(fmt::format("geo range {}-{} is inverted", ranges_[i].start.to_string(),
                                   ranges_[i].end.to_string()));
    if (i > 0 && ranges_[i].start <= ranges_[i - 1].end)
      throw InputError(fmt::format("geo ranges overlap at {}", ranges_[i].start.to_string()));
  }
}

GeoMap GeoMap::load(const std::filesystem::path& path) {
  std::vector<GeoRange> ranges;
  bool first = true;
  for_each_record(path, [&](std::size_t line, std::string_view text) {
    auto f = split_csv(text);
    bool header = first && !f.empty() && f[0] == "start_ip";
    first = false;
    if (header)
      return;
    if (f.size() != 3 || f[2].empty())
      throw ParseError(path.string(), line, fmt::format("expected 'start_ip,end_ip,country', got '{}'", text));
    auto s = Ip4::parse(f[0]);
    auto e = Ip4::parse(f[1]);
    if (!s || !e)
      throw ParseError(path.string(), line, "malformed address");
    ranges.push_back({*s, *e, std::string(f[2])});
  });
  try {
    return GeoMap(std::move(ranges));
  } catch (const InputError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::optional<std::string> GeoMap::lookup(Ip4 ip) const {
  auto it = std::upper_bound(ranges_.begin(), ranges_.end(), ip,
                             [](Ip4 v, const GeoRange& r) { return v < r.start; });
  if (it == ranges_.begin())
    return std::nullopt;
  --it;
  if (ip <= it->end)
    return it->country;
  return std::nullopt;
}

std::optional<std::string> GeoMap::majority(const Prefix& block, bool* tie) const {
  const std::uint64_t lo = block.base().value;
  const std::uint64_t hi = block.last().value;
  // First range that could overlap: the one starting at or before lo, else the next.
  auto it = std::upper_bound(ranges_.begin(), ranges_.end(), block.base(),
                             [](Ip4 v, const GeoRange& r) { return v < r.start; });
  if (it != ranges_.begin())
    --it;
  std::map<std::string, std::uint64_t> votes;
  for (; it != ranges_.end() && it->start.value <= hi; ++it) {
    std::uint64_t s = std::max<std::uint64_t>(lo, it->start.value);
    std::uint64_t e = std::min<std::uint64_t>(hi, it->end.value);
    if (s <= e)
      votes[it->country] += e - s + 1;
  }
  if (tie)
    *tie = false;
  std::optional<std::string> best;
  std::uint64_t best_votes = 0;
  for (const auto& [country, n] : votes) { // ascending code order
    if (n > best_votes) {
      best = country;
      best_votes = n;
      if (tie)
        *tie = false;
    } else if (n == best_votes && tie) {
      *tie = true;
    }
  }
  return best;
}

} // namespace savprobe
