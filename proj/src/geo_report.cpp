#include "savprobe/geo_report.hpp"

#include <algorithm>
#include <functional>
#include <charconv>
#include <set>

#include <fmt/format.h>

#include "savprobe/error.hpp"
#include "savprobe/text_io.hpp"

namespace savprobe {

CountryReport country_stats(const VerdictTable& slash24_verdicts, std::span<const Ip4> resolvers, const GeoMap& geo,
                            const RoutingTable& universe) {
  if (slash24_verdicts.granularity != Granularity::slash24)
    throw InputError("country_stats needs /24 verdicts");
  std::set<Prefix> blocks;
  for (const auto& p : universe.entries()) {
    if (p.length() >= 24) {
      blocks.insert(to_slash24(p.base()));
      continue;
    }
    for (std::uint64_t b = p.base().value; b <= p.last().value; b += 256)
      blocks.insert(Prefix(Ip4{static_cast<std::uint32_t>(b)}, 24));
  }
  for (const auto& [unit, v] : slash24_verdicts.units)
    blocks.insert(std::get<Prefix>(unit));

  CountryReport report;
  std::map<std::string, CountryStats> by_country;
  for (const auto& block : blocks) {
    bool tie = false;
    auto country = geo.majority(block, &tie);
    if (!country) {
      ++report.unlocated_slash24;
      continue;
    }
    if (tie)
      ++report.majority_ties;
    auto& s = by_country[*country];
    s.country = *country;
    ++s.total_slash24;
    const auto* v = slash24_verdicts.find(UnitKey{block});
    if (v && v->verdict == Verdict::S)
      ++s.vulnerable_slash24;
  }
  std::set<Ip4> unique(resolvers.begin(), resolvers.end());
  for (Ip4 ip : unique) {
    auto country = geo.lookup(ip);
    if (!country)
      continue;
    auto it = by_country.find(*country);
    if (it != by_country.end())
      ++it->second.resolvers;
  }
  for (auto& [code, s] : by_country) {
    s.fraction = static_cast<double>(s.vulnerable_slash24) / static_cast<double>(s.total_slash24);
    report.countries.push_back(s);
  }
  return report;
}

std::vector<CdfPoint> to_cdf(std::vector<std::uint64_t> sizes) {
  std::sort(sizes.begin(), sizes.end());
  std::vector<CdfPoint> out;
  const double n = static_cast<double>(sizes.size());
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (i + 1 < sizes.size() && sizes[i + 1] == sizes[i])
      continue;
    out.push_back({sizes[i], static_cast<double>(i + 1) / n});
  }
  return out;
}

namespace {

SizeCdf cdf_by_class(const VerdictTable& table, const std::function<std::uint64_t(const UnitKey&)>& size_of) {
  std::map<Verdict, std::vector<std::uint64_t>> sizes;
  for (const auto& [unit, v] : table.units)
    sizes[v.verdict].push_back(size_of(unit));
  SizeCdf out;
  for (auto& [verdict, list] : sizes)
    out[verdict] = to_cdf(std::move(list));
  return out;
}

std::string cdf_csv(const SizeCdf& cdf) {
  std::string out = "class,size,cdf\n";
  for (const auto& [verdict, points] : cdf)
    for (const auto& p : points)
      out += fmt::format("{},{},{:.6f}\n", to_string(verdict), p.size, p.cumulative);
  return out;
}

} // namespace

SizeCdf prefix_size_cdf(const VerdictTable& prefix_verdicts) {
  return cdf_by_class(prefix_verdicts, [](const UnitKey& u) { return std::get<Prefix>(u).size(); });
}

SizeCdf as_size_cdf(const VerdictTable& asn_verdicts, const AsnMap& asn) {
  return cdf_by_class(asn_verdicts, [&](const UnitKey& u) {
    std::uint64_t total = 0;
    const auto announced = asn.prefixes_of(std::get<Asn>(u));
    for (const auto& p : announced.entries())
      total += p.size();
    return total;
  });
}

void write_verdicts_csv(const VerdictTable& table, const std::filesystem::path& dir) {
  std::string out = "unit,verdict,spoofed_hits,sav_hits\n";
  for (const auto& [unit, v] : table.units)
    out += fmt::format("{},{},{},{}\n", to_string(unit), to_string(v.verdict), v.evidence.spoofed_hits,
                       v.evidence.sav_hits);
  write_file(dir / fmt::format("verdicts_{}.csv", to_string(table.granularity)), out);
}

VerdictTable read_verdicts_csv(const std::filesystem::path& path, Granularity granularity) {
  VerdictTable table;
  table.granularity = granularity;
  bool first = true;
  for_each_record(path, [&](std::size_t line, std::string_view text) {
    auto f = split_csv(text);
    bool header = first && !f.empty() && f[0] == "unit";
    first = false;
    if (header)
      return;
    if (f.size() != 4)
      throw ParseError(path.string(), line, "expected 'unit,verdict,spoofed_hits,sav_hits'");
    std::optional<UnitKey> key;
    if (granularity == Granularity::asn) {
      std::string_view a = f[0];
      if (a.size() > 2 && a.substr(0, 2) == "AS")
        a.remove_prefix(2);
      std::uint32_t v = 0;
      auto [ptr, ec] = std::from_chars(a.data(), a.data() + a.size(), v);
      if (ec == std::errc{} && ptr == a.data() + a.size())
        key = Asn{v};
    } else if (auto p = Prefix::parse(f[0])) {
      key = *p;
    }
    EvidenceCounts c;
    auto parse_count = [&](std::string_view s, std::uint64_t& out) {
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
      return ec == std::errc{} && ptr == s.data() + s.size();
    };
    if (!key || !parse_count(f[2], c.spoofed_hits) || !parse_count(f[3], c.sav_hits))
      throw ParseError(path.string(), line, fmt::format("malformed verdict row '{}'", text));
    auto verdict = classify(c);
    if (!verdict || to_string(*verdict) != f[1])
      throw ParseError(path.string(), line, "verdict does not match its evidence counts");
    table.units.emplace(*key, UnitVerdict{*key, *verdict, c});
  });
  return table;
}

void emit_reports(const CountryReport& stats, const SizeCdf& as_cdf, const SizeCdf& prefix_cdf,
                  const std::filesystem::path& dir) {
  std::string countries = "country,resolvers,vulnerable_slash24,total_slash24,fraction\n";
  for (const auto& c : stats.countries)
    countries += fmt::format("{},{},{},{},{:.4f}\n", c.country, c.resolvers, c.vulnerable_slash24, c.total_slash24,
                             c.fraction);
  write_file(dir / "country_stats.csv", countries);
  write_file(dir / "as_size_cdf.csv", cdf_csv(as_cdf));
  write_file(dir / "prefix_size_cdf.csv", cdf_csv(prefix_cdf));
}

} // namespace savprobe
