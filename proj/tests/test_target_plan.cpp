#include <doctest.h>

#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "savprobe/error.hpp"
#include "savprobe/target_plan.hpp"

using namespace savprobe;

namespace {

Prefix P(const char* s) { return Prefix::from_string(s); }
Ip4 A(const char* s) { return Ip4::from_string(s); }

RoutingTable table_of(std::initializer_list<const char*> ps) {
  std::vector<Prefix> v;
  for (auto p : ps)
    v.push_back(P(p));
  return RoutingTable::aggregate(v);
}

std::vector<ProbePair> drain(ScheduleStream& s) {
  std::vector<ProbePair> out;
  while (auto p = s.next())
    out.push_back(*p);
  return out;
}

} // namespace

TEST_CASE("enumerate hosts") {
  auto h = enumerate_hosts(P("1.2.3.0/24"));
  CHECK(h.size() == 254);
  CHECK(h.front() == A("1.2.3.1"));
  CHECK(h.back() == A("1.2.3.254"));
  CHECK(enumerate_hosts(P("1.2.3.4/32")) == std::vector<Ip4>{A("1.2.3.4")});
  CHECK(enumerate_hosts(P("1.2.0.0/23")).size() == 508);
  CHECK(enumerate_hosts(P("1.2.3.0/30")) == std::vector<Ip4>{A("1.2.3.1"), A("1.2.3.2")});
  CHECK(enumerate_hosts(P("1.2.3.4/31")).size() == 2);
  CHECK(count_hosts(P("10.0.0.0/8")) == 65536u * 254u);
  for (int len = 16; len <= 32; ++len) {
    Prefix p(A("10.20.0.0"), len);
    REQUIRE(enumerate_hosts(p).size() == count_hosts(p));
  }
}

TEST_CASE("spoof source") {
  CHECK(spoof_source(A("1.2.3.5"), P("1.2.3.0/24")) == A("1.2.3.6"));
  CHECK(spoof_source(A("1.2.3.254"), P("1.2.3.0/24")) == A("1.2.3.253"));
  CHECK(spoof_source(A("1.2.3.4"), P("1.2.3.4/32")) == A("1.2.3.5"));
  CHECK(spoof_source(A("1.2.3.255"), P("1.2.3.255/32")) == A("1.2.3.254"));
  Prefix block = P("10.9.16.0/20");
  for (Ip4 t : enumerate_hosts(block)) {
    Ip4 s = spoof_source(t, block);
    REQUIRE(s != t);
    REQUIRE(block.contains(s));
    REQUIRE(is_usable_host(s, block));
  }
}

TEST_CASE("two /24s interleave") {
  auto table = table_of({"1.2.3.0/24", "1.2.4.0/24"});
  ScheduleStream s(table, ExclusionList{}, ScheduleConfig{"z.example", 1, 10000, 1});
  auto pairs = drain(s);
  CHECK(pairs.size() == 508);
  for (std::size_t i = 1; i < pairs.size(); ++i)
    REQUIRE(to_slash24(pairs[i].target) != to_slash24(pairs[i - 1].target));
  CHECK(s.adjacency_conflicts() == 0);
  std::set<Ip4> targets;
  for (const auto& p : pairs) {
    targets.insert(p.target);
    CHECK(p.spoofed_domain.target == p.target);
    CHECK(p.unspoofed_domain.target == p.target);
    CHECK(p.spoofed_domain.scan.direction == Direction::spoofed);
    CHECK(p.unspoofed_domain.scan.direction == Direction::unspoofed);
    CHECK(p.spoofed_domain.nonce != p.unspoofed_domain.nonce);
  }
  CHECK(targets.size() == 508);
}

TEST_CASE("exclusions") {
  auto table = table_of({"1.2.2.0/23"});
  std::vector<Prefix> excl{P("1.2.3.0/24")};
  ScheduleStream s(table, ExclusionList(excl), ScheduleConfig{"z.example", 1, 10000, 1});
  auto pairs = drain(s);
  CHECK(pairs.size() == 254);
  for (const auto& p : pairs)
    CHECK(P("1.2.2.0/24").contains(p.target));

  // Excluded neighbour pushes the spoof source to the other side.
  auto small = table_of({"5.5.5.0/24"});
  std::vector<Prefix> one{P("5.5.5.11/32")};
  ScheduleStream t(small, ExclusionList(one), ScheduleConfig{"z.example", 1, 10000, 1});
  for (const auto& p : drain(t)) {
    CHECK(p.target != A("5.5.5.11"));
    CHECK(p.spoofed_src != A("5.5.5.11"));
    if (p.target == A("5.5.5.10"))
      CHECK(p.spoofed_src == A("5.5.5.9"));
  }

  std::vector<Prefix> all{P("1.2.2.0/23")};
  CHECK_THROWS_AS(ScheduleStream(table, ExclusionList(all), ScheduleConfig{"z.example", 1, 10000, 1}), InputError);
}

TEST_CASE("unspoofable hosts are skipped and counted") {
  auto table = table_of({"7.7.7.8/30", "7.7.8.0/24"}); // the /30 holds .9 and .10 only
  std::vector<Prefix> excl{P("7.7.7.10/32")};
  ScheduleStream s(table, ExclusionList(excl), ScheduleConfig{"z.example", 1, 10000, 1});
  auto pairs = drain(s);
  CHECK(pairs.size() == 254);
  for (const auto& p : pairs)
    CHECK(p.target != A("7.7.7.9"));
  CHECK(s.unspoofable() == 1);
}

TEST_CASE("schedule is seed-deterministic") {
  auto table = table_of({"1.2.0.0/22", "9.9.9.0/28", "9.9.9.64/32"});
  auto render = [&](std::uint64_t seed) {
    ScheduleStream s(table, ExclusionList{}, ScheduleConfig{"z.example", seed, 10000, 1});
    std::ostringstream out;
    write_schedule_csv_header(out);
    while (auto p = s.next())
      write_schedule_csv_row(out, *p);
    return out.str();
  };
  CHECK(render(5) == render(5));
  CHECK(render(5) != render(6));
  CHECK(render(5).rfind("target,spoofed_src,spoofed_domain,unspoofed_domain\n", 0) == 0);
}

TEST_CASE("single /24 forces conflicts") {
  auto table = table_of({"3.3.3.0/24"});
  ScheduleStream s(table, ExclusionList{}, ScheduleConfig{"z.example", 3, 10000, 1});
  CHECK(drain(s).size() == 254);
  CHECK(s.adjacency_conflicts() == 253);
}

TEST_CASE("endgame keeps blocks apart") {
  // One large block and one small: feasible only if the small one is spread out.
  auto table = table_of({"4.4.4.0/24", "4.4.5.0/26"});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ScheduleStream s(table, ExclusionList{}, ScheduleConfig{"z.example", seed, 10000, 1});
    auto pairs = drain(s);
    REQUIRE(pairs.size() == 254 + 62);
    // 254 vs 62: the best order still needs 254 - 63 = 191 repeats.
    CHECK(s.adjacency_conflicts() == 191);
  }
  auto balanced = table_of({"4.4.4.0/24", "4.4.5.0/24", "4.4.6.0/25"});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ScheduleStream s(balanced, ExclusionList{}, ScheduleConfig{"z.example", seed, 10000, 1});
    auto pairs = drain(s);
    REQUIRE(pairs.size() == 254 * 2 + 126);
    for (std::size_t i = 1; i < pairs.size(); ++i)
      REQUIRE(to_slash24(pairs[i].target) != to_slash24(pairs[i - 1].target));
  }
}

TEST_CASE("large prefixes stream lazily") {
  auto table = table_of({"10.0.0.0/8"});
  ScheduleStream s(table, ExclusionList{}, ScheduleConfig{"z.example", 1, 10000, 1});
  CHECK(s.total() == 65536u * 254u);
  Prefix prev;
  for (int i = 0; i < 10000; ++i) {
    auto p = s.next();
    REQUIRE(p);
    REQUIRE(to_slash24(p->target) != prev);
    prev = to_slash24(p->target);
  }
  CHECK(s.emitted() == 10000);
}

TEST_CASE("exclusion list file") {
  auto dir = fixtures::temp_dir("exclude");
  {
    std::ofstream f(dir / "ex.txt");
    f << "# opt-outs\n1.2.3.4\n5.0.0.0/8\n";
  }
  auto e = ExclusionList::load(dir / "ex.txt");
  CHECK(e.contains(A("1.2.3.4")));
  CHECK_FALSE(e.contains(A("1.2.3.5")));
  CHECK(e.contains(A("5.200.1.1")));
  {
    std::ofstream f(dir / "empty.txt");
  }
  CHECK(ExclusionList::load(dir / "empty.txt").cidrs().empty());
}
