#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "savprobe/error.hpp"
#include "savprobe/packet.hpp"
#include "savprobe/pipeline.hpp"
#include "savprobe/scan_engine.hpp"
#include "savprobe/token_bucket.hpp"

using namespace savprobe;

namespace {

Prefix P(const char* s) { return Prefix::from_string(s); }
Ip4 A(const char* s) { return Ip4::from_string(s); }

/// Answers every query addressed from the scanner, dropping each answer with probability `loss`.
class EchoTransport final : public Transport {
public:
  EchoTransport(Ip4 scanner, double loss, std::uint64_t seed) : scanner_(scanner), loss_(loss), rng_(seed) {}

  void send(std::span<const std::uint8_t> packet, Ip4 dst) override {
    if (fail_after_ && sent_ >= *fail_after_)
      throw TransportError("link down");
    ++sent_;
    auto udp = parse_udp(packet);
    REQUIRE(udp);
    REQUIRE(udp->dst == dst);
    targets.insert(dst);
    if (udp->src != scanner_ || rng_.bernoulli(loss_))
      return;
    auto msg = dns::decode(udp->payload);
    msg->flags.qr = true;
    std::lock_guard lock(mutex_);
    queue_.push_back(Datagram{dst, 53, dns::encode(*msg), clock_.now()});
  }
  std::optional<Datagram> receive(double) override {
    std::lock_guard lock(mutex_);
    if (queue_.empty())
      return std::nullopt;
    auto d = queue_.front();
    queue_.pop_front();
    return d;
  }
  bool receive_blocks() const override { return false; }
  Clock& clock() override { return clock_; }

  std::optional<std::uint64_t> fail_after_;
  std::uint64_t sent_ = 0;
  std::multiset<Ip4> targets;

private:
  Ip4 scanner_;
  double loss_;
  SplitMix rng_;
  ManualClock clock_;
  std::mutex mutex_;
  std::deque<Datagram> queue_;
};

RoutingTable table_of(std::initializer_list<const char*> ps) {
  std::vector<Prefix> v;
  for (auto p : ps)
    v.push_back(P(p));
  return RoutingTable::aggregate(v);
}

ScanResponse response(const char* queried, const char* responder, dns::Rcode rc, Direction dir,
                      const std::string& zone = "z.example") {
  Ip4 q = A(queried);
  return {q, A(responder), rc, encode_domain("abcdef", q, ScanId{dir, 1}, zone).to_string(), 0.0};
}

} // namespace

TEST_CASE("token bucket paces on virtual time") {
  ManualClock clock;
  TokenBucket bucket(100.0, 10.0, clock);
  for (int i = 0; i < 10; ++i)
    CHECK(bucket.try_acquire());
  CHECK_FALSE(bucket.try_acquire());
  clock.advance(0.05);
  for (int i = 0; i < 5; ++i)
    CHECK(bucket.try_acquire());
  CHECK_FALSE(bucket.try_acquire());
  const double t0 = clock.now();
  for (int i = 0; i < 1000; ++i)
    bucket.acquire();
  CHECK(clock.now() - t0 == doctest::Approx(10.0).epsilon(0.01));
}

TEST_CASE("token bucket on the steady clock") {
  SteadyClock clock;
  TokenBucket bucket(2000.0, 1.0, clock);
  const double t0 = clock.now();
  for (int i = 0; i < 200; ++i)
    bucket.acquire();
  CHECK(clock.now() - t0 >= 0.09);
}

TEST_CASE("engine sends exactly two packets per pair") {
  auto table = table_of({"1.2.3.0/24", "1.2.4.0/25"});
  ScheduleStream stream(table, ExclusionList{}, ScheduleConfig{"z.example", 1, 1000, 1});
  EchoTransport transport(A("198.18.0.10"), 0.0, 1);
  MemoryResponseSink sink;
  ScanOptions options;
  options.scanner_ip = A("198.18.0.10");
  options.grace = 1;
  auto report = run_scan(stream, transport, sink, options);
  CHECK(report.pairs == 254 + 126);
  CHECK(report.sent == 2 * report.pairs);
  CHECK(report.spoofed_sent == report.pairs);
  CHECK(report.unspoofed_sent == report.pairs);
  CHECK(report.accepted == report.pairs);
  CHECK(report.rate_achieved == doctest::Approx(1000.0).epsilon(0.05));
  for (Ip4 t : enumerate_hosts(P("1.2.3.0/24")))
    REQUIRE(transport.targets.count(t) == 2);
  for (const auto& r : sink.snapshot()) {
    auto d = decode_domain(r.domain, "z.example");
    REQUIRE(d);
    CHECK(d->target == r.queried);
  }
}

TEST_CASE("received fraction follows the loss rate") {
  const double loss = 0.3;
  auto table = table_of({"20.0.0.0/15"}); // 130048 hosts
  ScheduleStream stream(table, ExclusionList{}, ScheduleConfig{"z.example", 2, 1e6, 1});
  EchoTransport transport(A("198.18.0.10"), loss, 7);
  MemoryResponseSink sink;
  ScanOptions options;
  options.scanner_ip = A("198.18.0.10");
  options.grace = 1;
  auto report = run_scan(stream, transport, sink, options);
  const double n = static_cast<double>(report.unspoofed_sent);
  REQUIRE(n > 1e5);
  const double sigma = std::sqrt(n * loss * (1 - loss));
  CHECK(std::abs(static_cast<double>(report.accepted) - n * (1 - loss)) < 3 * sigma);
}

TEST_CASE("transport failure aborts with a resume cursor") {
  auto table = table_of({"1.2.3.0/24", "1.2.4.0/24"});
  ScanOptions options;
  options.scanner_ip = A("198.18.0.10");
  options.grace = 0.5;
  ScheduleConfig config{"z.example", 4, 1000, 1};

  EchoTransport first(options.scanner_ip, 0.0, 1);
  first.fail_after_ = 301;
  MemoryResponseSink sink;
  ScheduleStream s1(table, ExclusionList{}, config);
  auto r1 = run_scan(s1, first, sink, options);
  CHECK(r1.aborted);
  CHECK(r1.error == "link down");
  CHECK(r1.resume_cursor == r1.pairs);

  EchoTransport second(options.scanner_ip, 0.0, 1);
  options.resume_from = r1.resume_cursor;
  ScheduleStream s2(table, ExclusionList{}, config);
  auto r2 = run_scan(s2, second, sink, options);
  CHECK_FALSE(r2.aborted);
  CHECK(r1.pairs + r2.pairs == 508);
  std::set<Ip4> answered;
  for (const auto& r : sink.snapshot())
    answered.insert(r.queried);
  CHECK(answered.size() == 508);
}

TEST_CASE("foreign and mismatched responses are rejected") {
  auto table = table_of({"1.2.3.0/30"});
  ScheduleStream stream(table, ExclusionList{}, ScheduleConfig{"z.example", 1, 1000, 1});
  EchoTransport transport(A("198.18.0.10"), 0.0, 1);
  ScanOptions options;
  options.scanner_ip = A("198.18.0.10");
  options.grace = 0.2;
  MemoryResponseSink sink;
  // Preload junk that arrives during the scan.
  dns::Message foreign;
  foreign.flags.qr = true;
  foreign.questions.push_back({"abcdef.01020301.n1.other.example", dns::type_a, dns::class_in});
  {
    auto d = encode_domain("abcdef", A("1.2.3.1"), ScanId{Direction::unspoofed, 1}, "z.example");
    dns::Message wrong_id = build_query(d, static_cast<std::uint16_t>(probe_txid(0, d.target, d.scan) + 1));
    wrong_id.flags.qr = true;
    std::vector<std::uint8_t> junk{1, 2, 3};
    struct Injector : Transport {
      EchoTransport& inner;
      std::deque<Datagram> extra;
      explicit Injector(EchoTransport& t) : inner(t) {}
      void send(std::span<const std::uint8_t> p, Ip4 d) override { inner.send(p, d); }
      std::optional<Datagram> receive(double t) override {
        if (!extra.empty()) {
          auto d = extra.front();
          extra.pop_front();
          return d;
        }
        return inner.receive(t);
      }
      bool receive_blocks() const override { return false; }
      Clock& clock() override { return inner.clock(); }
    } injector(transport);
    injector.extra.push_back({A("1.2.3.1"), 53, dns::encode(foreign), 0});
    injector.extra.push_back({A("1.2.3.1"), 53, dns::encode(wrong_id), 0});
    injector.extra.push_back({A("1.2.3.1"), 53, junk, 0});
    auto report = run_scan(stream, injector, sink, options);
    CHECK(report.parse_rejects == 1);
    CHECK(report.unmatched == 2);
    CHECK(report.accepted == 2);
  }
}

TEST_CASE("detect_open rules") {
  std::vector<ScanResponse> rs = {
      response("1.1.1.1", "1.1.1.1", dns::Rcode::noerror, Direction::unspoofed),
      response("2.2.2.2", "2.2.2.2", dns::Rcode::refused, Direction::unspoofed),
      response("3.3.3.3", "8.8.8.8", dns::Rcode::noerror, Direction::unspoofed),
      response("4.4.4.4", "4.4.4.4", dns::Rcode::noerror, Direction::spoofed),
      response("5.5.5.5", "5.5.5.5", dns::Rcode::servfail, Direction::unspoofed),
  };
  CHECK(detect_open(rs, "z.example") == std::set<Ip4>{A("1.1.1.1")});
}

TEST_CASE("response records round trip through JSONL") {
  auto dir = fixtures::temp_dir("responses");
  std::vector<ScanResponse> rs = {response("1.1.1.1", "1.1.1.1", dns::Rcode::noerror, Direction::unspoofed),
                                  response("3.3.3.3", "8.8.8.8", dns::Rcode::refused, Direction::unspoofed)};
  rs[0].timestamp = 12.5;
  {
    JsonlResponseSink sink(dir / "r.jsonl");
    for (const auto& r : rs)
      sink.append(r);
  }
  CHECK(load_responses(dir / "r.jsonl") == rs);
  {
    std::ofstream f(dir / "r.jsonl", std::ios::app);
    f << "{\"queried\": \"1.2";
  }
  std::size_t bad = 0;
  CHECK(load_responses(dir / "r.jsonl", &bad).size() == 2);
  CHECK(bad == 1);
}

TEST_CASE("simulated scan: open resolver and leaking forwarder") {
  auto t = fixtures::base_topology();
  SimNetwork pub{P("40.0.0.0/24"), Asn{400}, false, false, 0.0, {}};
  pub.resolvers.push_back({A("40.0.0.8")});
  SimNetwork home{P("41.0.0.0/24"), Asn{410}, true, false, 0.0, {}};
  home.resolvers.push_back({A("41.0.0.20"), ResolverMode::forwarder, A("40.0.0.8"), false});
  t.networks = {pub, home};
  auto run = simulate_scan(t, "z.example", 1);
  CHECK(run.report.sent == 2 * run.report.pairs);
  CHECK(run.report.pairs == 508);
  std::set<std::pair<Ip4, Ip4>> seen;
  for (const auto& r : run.responses)
    if (r.rcode == dns::Rcode::noerror)
      seen.emplace(r.queried, r.responder);
  CHECK(seen == std::set<std::pair<Ip4, Ip4>>{{A("40.0.0.8"), A("40.0.0.8")}, {A("41.0.0.20"), A("40.0.0.8")}});
  CHECK(detect_open(run.responses, "z.example") == std::set<Ip4>{A("40.0.0.8")});
}
