#include "savprobe/asn_map.hpp"

#include <algorithm>
#include <charconv>

#include <fmt/format.h>

#include "savprobe/error.hpp"
#include "savprobe/text_io.hpp"

namespace savprobe {

namespace {

std::optional<Asn> parse_asn(std::string_view text) {
  if (text.size() > 2 && (text[0] == 'A' || text[0] == 'a') && (text[1] == 'S' || text[1] == 's'))
    text.remove_prefix(2);
  std::uint32_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size())
    return std::nullopt;
  return Asn{v};
}

} // namespace

void AsnMap::add(const Prefix& prefix, Asn asn) {
  if (map_.insert(prefix, asn)) {
    by_asn_[asn].push_back(prefix);
    ++by_asn_size_;
    return;
  }
  Asn* existing = map_.find_exact(prefix);
  if (*existing == asn)
    return;
  ++moas_;
  auto& seen = moas_report_[prefix];
  if (seen.empty())
    seen.push_back(*existing);
  if (std::find(seen.begin(), seen.end(), asn) == seen.end())
    seen.push_back(asn);
  std::sort(seen.begin(), seen.end());
  if (asn < *existing) {
    auto& old_list = by_asn_[*existing];
    old_list.erase(std::remove(old_list.begin(), old_list.end(), prefix), old_list.end());
    by_asn_[asn].push_back(prefix);
    *existing = asn;
  }
}

AsnMap AsnMap::load(const std::filesystem::path& path) {
  AsnMap m;
  bool first = true;
  for_each_record(path, [&](std::size_t line, std::string_view text) {
    auto fields = split_csv(text);
    bool header = first && !fields.empty() && fields[0] == "prefix";
    first = false;
    if (header)
      return;
    if (fields.size() != 2)
      throw ParseError(path.string(), line, fmt::format("expected 'prefix,asn', got '{}'", text));
    auto p = Prefix::parse(fields[0]);
    auto asn = parse_asn(fields[1]);
    if (!p)
      throw ParseError(path.string(), line, fmt::format("malformed prefix '{}'", fields[0]));
    if (!asn)
      throw ParseError(path.string(), line, fmt::format("malformed ASN '{}'", fields[1]));
    m.add(*p, *asn);
  });
  return m;
}

std::optional<Asn> AsnMap::lookup(Ip4 ip) const {
  if (auto hit = map_.lookup(ip))
    return *hit->second;
  return std::nullopt;
}

RoutingTable AsnMap::prefixes_of(Asn asn) const {
  auto it = by_asn_.find(asn);
  if (it == by_asn_.end())
    return {};
  return RoutingTable::aggregate(it->second);
}

} // namespace savprobe
