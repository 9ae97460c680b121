#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <random>

#include "fixtures.hpp"
#include "savprobe/error.hpp"
#include "savprobe/geo_report.hpp"
#include "savprobe/text_io.hpp"

using namespace savprobe;

namespace {

Ip4 A(const char* s) { return Ip4::from_string(s); }
Prefix P(const char* s) { return Prefix::from_string(s); }

void put(VerdictTable& t, const UnitKey& key, Verdict v) {
  EvidenceCounts c{v == Verdict::NS ? 0u : 1u, v == Verdict::S ? 0u : 1u};
  t.units[key] = UnitVerdict{key, v, c};
}

// Five /24s over three countries.
struct ThreeCountries {
  GeoMap geo{{{A("30.0.0.0"), A("30.0.1.255"), "AA"},
              {A("30.0.2.0"), A("30.0.2.255"), "BB"},
              {A("30.0.3.0"), A("30.0.3.199"), "CC"},
              {A("30.0.3.200"), A("30.0.3.255"), "AA"},
              {A("30.0.4.0"), A("30.0.4.255"), "CC"}}};
  RoutingTable universe = RoutingTable::aggregate(std::vector<Prefix>{P("30.0.0.0/22"), P("30.0.4.0/24")});
  VerdictTable verdicts;
  std::vector<Ip4> resolvers{A("30.0.0.1"), A("30.0.0.1"), A("30.0.3.250"), A("30.0.4.1"), A("99.0.0.1")};

  ThreeCountries() {
    put(verdicts, P("30.0.0.0/24"), Verdict::S);
    put(verdicts, P("30.0.1.0/24"), Verdict::I);
    put(verdicts, P("30.0.2.0/24"), Verdict::NS);
    put(verdicts, P("30.0.3.0/24"), Verdict::S);
    put(verdicts, P("30.0.4.0/24"), Verdict::S);
  }
};

} // namespace

TEST_CASE("majority split 200/56") {
  GeoMap geo({{A("40.0.0.0"), A("40.0.0.199"), "BB"}, {A("40.0.0.200"), A("40.0.0.255"), "AA"}});
  bool tie = true;
  CHECK(geo.majority(P("40.0.0.0/24"), &tie) == "BB");
  CHECK_FALSE(tie);
  GeoMap even({{A("40.0.0.0"), A("40.0.0.127"), "ZZ"}, {A("40.0.0.128"), A("40.0.0.255"), "AA"}});
  CHECK(even.majority(P("40.0.0.0/24"), &tie) == "AA");
  CHECK(tie);
  CHECK_FALSE(even.majority(P("41.0.0.0/24")));
  CHECK_THROWS_AS(GeoMap({{A("1.0.0.0"), A("1.0.0.9"), "AA"}, {A("1.0.0.5"), A("1.0.0.20"), "BB"}}), InputError);
}

TEST_CASE("three-country fixture") {
  ThreeCountries f;
  auto report = country_stats(f.verdicts, f.resolvers, f.geo, f.universe);
  REQUIRE(report.countries.size() == 3);
  CHECK(report.countries[0] == CountryStats{"AA", 2, 1, 2, 0.5});
  CHECK(report.countries[1] == CountryStats{"BB", 0, 0, 1, 0.0});
  CHECK(report.countries[2] == CountryStats{"CC", 1, 2, 2, 1.0});
  CHECK(report.unlocated_slash24 == 0);
  CHECK(report.majority_ties == 0);

  std::uint64_t vuln = 0, total = 0;
  for (const auto& c : report.countries) {
    vuln += c.vulnerable_slash24;
    total += c.total_slash24;
    CHECK(c.fraction >= 0.0);
    CHECK(c.fraction <= 1.0);
  }
  CHECK(vuln <= total);

  VerdictTable wrong;
  wrong.granularity = Granularity::prefix;
  CHECK_THROWS_AS(country_stats(wrong, f.resolvers, f.geo, f.universe), InputError);
}

TEST_CASE("unlocated blocks and countries without blocks") {
  GeoMap geo({{A("50.0.0.0"), A("50.0.0.255"), "AA"}, {A("60.0.0.0"), A("60.0.0.255"), "ZZ"}});
  RoutingTable universe = RoutingTable::aggregate(std::vector<Prefix>{P("50.0.0.0/23")});
  VerdictTable v;
  std::vector<Ip4> resolvers{A("60.0.0.1")};
  auto report = country_stats(v, resolvers, geo, universe);
  REQUIRE(report.countries.size() == 1);
  CHECK(report.countries[0].country == "AA");
  CHECK(report.unlocated_slash24 == 1);
}

TEST_CASE("CDF against a sort oracle") {
  std::mt19937_64 gen(12);
  for (int round = 0; round < 20; ++round) {
    std::vector<std::uint64_t> sizes;
    std::size_t n = 1 + gen() % 300;
    for (std::size_t i = 0; i < n; ++i)
      sizes.push_back(std::uint64_t{1} << (8 + gen() % 10));
    auto cdf = to_cdf(sizes);
    auto sorted = sizes;
    std::sort(sorted.begin(), sorted.end());
    REQUIRE(!cdf.empty());
    CHECK(cdf.back().cumulative == 1.0);
    for (std::size_t i = 0; i < cdf.size(); ++i) {
      auto at_or_below = std::upper_bound(sorted.begin(), sorted.end(), cdf[i].size) - sorted.begin();
      CHECK(cdf[i].cumulative == doctest::Approx(static_cast<double>(at_or_below) / static_cast<double>(n)));
      if (i > 0) {
        CHECK(cdf[i].size > cdf[i - 1].size);
        CHECK(cdf[i].cumulative >= cdf[i - 1].cumulative);
      }
    }
    std::vector<std::uint64_t> distinct(sorted.begin(), std::unique(sorted.begin(), sorted.end()));
    CHECK(distinct.size() == cdf.size());
  }
  CHECK(to_cdf({}).empty());
}

TEST_CASE("AS and prefix sizes") {
  AsnMap asn;
  asn.add(P("1.2.3.0/24"), Asn{1});
  asn.add(P("1.3.0.0/16"), Asn{2});
  asn.add(P("5.0.0.0/16"), Asn{3});
  asn.add(P("5.0.1.0/24"), Asn{3});
  VerdictTable as_v;
  as_v.granularity = Granularity::asn;
  put(as_v, Asn{1}, Verdict::S);
  put(as_v, Asn{2}, Verdict::S);
  put(as_v, Asn{3}, Verdict::NS);
  auto cdf = as_size_cdf(as_v, asn);
  CHECK(cdf.at(Verdict::S) == std::vector<CdfPoint>{{256, 0.5}, {65536, 1.0}});
  CHECK(cdf.at(Verdict::NS) == std::vector<CdfPoint>{{65536, 1.0}});
  CHECK_FALSE(cdf.contains(Verdict::I));

  VerdictTable pv;
  pv.granularity = Granularity::prefix;
  put(pv, P("10.0.0.0/24"), Verdict::I);
  put(pv, P("10.1.0.0/16"), Verdict::I);
  put(pv, P("10.2.0.0/22"), Verdict::I);
  CHECK(prefix_size_cdf(pv).at(Verdict::I) ==
        std::vector<CdfPoint>{{256, 1.0 / 3}, {1024, 2.0 / 3}, {65536, 1.0}});
}

TEST_CASE("emit_reports golden files") {
  ThreeCountries f;
  auto report = country_stats(f.verdicts, f.resolvers, f.geo, f.universe);
  VerdictTable pv;
  pv.granularity = Granularity::prefix;
  put(pv, P("10.0.0.0/24"), Verdict::S);
  put(pv, P("10.1.0.0/16"), Verdict::S);
  put(pv, P("10.2.0.0/24"), Verdict::NS);
  auto dir = fixtures::temp_dir("golden");
  emit_reports(report, {}, prefix_size_cdf(pv), dir);
  CHECK(read_file(dir / "country_stats.csv") == "country,resolvers,vulnerable_slash24,total_slash24,fraction\n"
                                                 "AA,2,1,2,0.5000\n"
                                                 "BB,0,0,1,0.0000\n"
                                                 "CC,1,2,2,1.0000\n");
  CHECK(read_file(dir / "prefix_size_cdf.csv") == "class,size,cdf\n"
                                                  "S,256,0.500000\n"
                                                  "S,65536,1.000000\n"
                                                  "NS,256,1.000000\n");
  CHECK(read_file(dir / "as_size_cdf.csv") == "class,size,cdf\n");

  auto again = fixtures::temp_dir("golden_again");
  emit_reports(country_stats(f.verdicts, f.resolvers, f.geo, f.universe), {}, prefix_size_cdf(pv), again);
  for (const char* name : {"country_stats.csv", "prefix_size_cdf.csv", "as_size_cdf.csv"})
    CHECK(read_file(dir / name) == read_file(again / name));
}

TEST_CASE("empty inputs give header-only files") {
  auto dir = fixtures::temp_dir("empty_reports");
  emit_reports({}, {}, {}, dir);
  CHECK(read_file(dir / "country_stats.csv") == "country,resolvers,vulnerable_slash24,total_slash24,fraction\n");
  CHECK(read_file(dir / "as_size_cdf.csv") == "class,size,cdf\n");
  CHECK(read_file(dir / "prefix_size_cdf.csv") == "class,size,cdf\n");
  VerdictTable empty;
  write_verdicts_csv(empty, dir);
  CHECK(read_file(dir / "verdicts_slash24.csv") == "unit,verdict,spoofed_hits,sav_hits\n");
}

TEST_CASE("verdict CSV round trip") {
  auto dir = fixtures::temp_dir("verdict_csv");
  ThreeCountries f;
  write_verdicts_csv(f.verdicts, dir);
  auto back = read_verdicts_csv(dir / "verdicts_slash24.csv", Granularity::slash24);
  CHECK(back.units == f.verdicts.units);

  VerdictTable as_v;
  as_v.granularity = Granularity::asn;
  put(as_v, Asn{64500}, Verdict::I);
  write_verdicts_csv(as_v, dir);
  CHECK(read_file(dir / "verdicts_asn.csv") == "unit,verdict,spoofed_hits,sav_hits\nAS64500,I,1,1\n");
  CHECK(read_verdicts_csv(dir / "verdicts_asn.csv", Granularity::asn).units == as_v.units);

  std::ofstream(dir / "bad.csv") << "unit,verdict,spoofed_hits,sav_hits\n1.2.3.0/24,S,0,4\n";
  CHECK_THROWS_AS(read_verdicts_csv(dir / "bad.csv", Granularity::slash24), ParseError);
}
