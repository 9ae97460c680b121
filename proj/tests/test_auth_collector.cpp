#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <fmt/format.h>

#include <fstream>
#include <random>
#include <thread>
#include <unordered_set>

#include "fixtures.hpp"
#include "savprobe/auth_collector.hpp"
#include "savprobe/dns.hpp"
#include "savprobe/packet.hpp"

using namespace savprobe;

namespace {

Ip4 A(const char* s) { return Ip4::from_string(s); }

std::vector<std::uint8_t> query(const std::string& name, std::uint16_t type = dns::type_a, std::uint16_t id = 1) {
  dns::Message q;
  q.id = id;
  q.flags.rd = true;
  q.questions.push_back({name, type, dns::class_in});
  return dns::encode(q);
}

dns::Message ask(AuthServer& s, const std::string& name, std::uint16_t type = dns::type_a) {
  auto reply = s.handle(A("9.9.9.9"), query(name, type), 1.0);
  REQUIRE(reply);
  auto msg = dns::decode(*reply);
  REQUIRE(msg);
  return *msg;
}

QueryObservation obs(const char* src, const char* target, const std::string& raw) {
  QueryObservation o;
  o.source = A(src);
  o.decoded = ProbeDomain{"abcdef", A(target), ScanId{}, "z.example"};
  o.raw_name = raw;
  return o;
}

} // namespace

TEST_CASE("probe query is logged and answered") {
  MemoryQueryLog log;
  AuthServer s(AuthConfig{"z.example", A("192.0.2.7"), 30}, log);
  auto m = ask(s, "abcdef.01020304.s1.z.example");
  CHECK(m.flags.qr);
  CHECK(m.flags.aa);
  CHECK(m.rcode() == dns::Rcode::noerror);
  REQUIRE(m.answers.size() == 1);
  CHECK(m.answers[0].rdata == std::vector<std::uint8_t>{192, 0, 2, 7});
  CHECK(m.answers[0].ttl == 30);
  auto records = log.snapshot();
  REQUIRE(records.size() == 1);
  CHECK(records[0].src == A("9.9.9.9"));

  auto decoded = decode_records(records, "z.example");
  REQUIRE(decoded.observations.size() == 1);
  CHECK(decoded.observations[0].source == A("9.9.9.9"));
  CHECK(decoded.observations[0].decoded.target == A("1.2.3.4"));
  CHECK(decoded.observations[0].decoded.scan == ScanId{Direction::spoofed, 1});
}

TEST_CASE("foreign zone is refused without logging") {
  MemoryQueryLog log;
  AuthServer s(AuthConfig{"z.example"}, log);
  auto m = ask(s, "abcdef.01020304.s1.other.example");
  CHECK(m.rcode() == dns::Rcode::refused);
  CHECK(log.size() == 0);
  CHECK(s.stats().refused == 1);
  auto suffix = ask(s, "abcdef.01020304.s1.xz.example");
  CHECK(suffix.rcode() == dns::Rcode::refused);
}

TEST_CASE("apex records and NODATA") {
  MemoryQueryLog log;
  AuthServer s(AuthConfig{"z.example"}, log);
  auto ns = ask(s, "z.example", dns::type_ns);
  REQUIRE(ns.answers.size() == 1);
  CHECK(ns.answers[0].type == dns::type_ns);
  auto soa = ask(s, "Z.Example", dns::type_soa);
  REQUIRE(soa.answers.size() == 1);
  CHECK(soa.answers[0].type == dns::type_soa);
  auto aaaa = ask(s, "abcdef.01020304.s1.z.example", 28);
  CHECK(aaaa.answers.empty());
  CHECK(aaaa.authority.size() == 1);
  CHECK(aaaa.rcode() == dns::Rcode::noerror);
  auto sub_ns = ask(s, "a.z.example", dns::type_ns);
  CHECK(sub_ns.answers.empty());
  CHECK(log.size() == 0);
}

TEST_CASE("malformed input") {
  MemoryQueryLog log;
  AuthServer s(AuthConfig{"z.example"}, log);
  std::vector<std::uint8_t> junk{1, 2, 3};
  CHECK_FALSE(s.handle(A("1.1.1.1"), junk, 0));
  dns::Message resp;
  resp.flags.qr = true;
  resp.questions.push_back({"abcdef.01020304.s1.z.example", dns::type_a, dns::class_in});
  CHECK_FALSE(s.handle(A("1.1.1.1"), dns::encode(resp), 0));
  dns::Message two;
  two.questions.push_back({"a.z.example", dns::type_a, dns::class_in});
  two.questions.push_back({"b.z.example", dns::type_a, dns::class_in});
  auto reply = s.handle(A("1.1.1.1"), dns::encode(two), 0);
  REQUIRE(reply);
  CHECK(dns::decode(*reply)->rcode() == dns::Rcode::formerr);
  CHECK(s.stats().malformed == 3);
  CHECK(log.size() == 0);
}

TEST_CASE("undecodable names are quarantined, not dropped") {
  MemoryQueryLog log;
  AuthServer s(AuthConfig{"z.example"}, log);
  ask(s, "www.z.example");
  ask(s, "abcdef.01020304.s1.z.example");
  CHECK(s.stats().logged == 2);
  CHECK(s.stats().quarantined == 1);
  auto d = decode_records(log.snapshot(), "z.example");
  CHECK(d.observations.size() == 1);
  REQUIRE(d.quarantined.size() == 1);
  CHECK(d.quarantined[0].name == "www.z.example");
}

TEST_CASE("dedup") {
  ObservationLog empty;
  CHECK(dedup(empty).observations.empty());

  ObservationLog log;
  log.observations = {obs("9.9.9.9", "1.2.3.4", "abcdef.01020304.s1.z.example"),
                      obs("9.9.9.9", "1.2.3.4", "ABCdef.01020304.S1.z.example"),
                      obs("8.8.8.8", "1.2.3.4", "abcdef.01020304.s1.z.example")};
  CHECK(dedup(log).observations.size() == 2);

  std::mt19937_64 gen(31);
  ObservationLog big;
  std::unordered_set<std::string> oracle;
  for (int i = 0; i < 100000; ++i) {
    std::string src = fmt::format("10.0.{}.{}", gen() % 4, gen() % 50);
    Ip4 target{static_cast<std::uint32_t>(0x01020300u + gen() % 100)};
    std::string raw = encode_domain("abcdef", target, ScanId{}, "z.example").to_string();
    big.observations.push_back(obs(src.c_str(), target.to_string().c_str(), raw));
    oracle.insert(src + "|" + raw);
  }
  auto d = dedup(big);
  CHECK(d.observations.size() == oracle.size());
}

TEST_CASE("classify proxy") {
  CHECK(classify_proxy(obs("1.2.3.5", "1.2.3.5", "")) == ProxyClass::non_forwarder);
  CHECK(classify_proxy(obs("8.8.8.8", "1.2.3.5", "")) == ProxyClass::forwarder);
}

TEST_CASE("query log JSONL with partial lines") {
  auto dir = fixtures::temp_dir("querylog");
  {
    JsonlQueryLog log(dir / "auth.jsonl", false, 0.0);
    log.append({A("9.9.9.9"), "abcdef.01020304.s1.z.example", 1.5});
    log.append({A("8.8.8.8"), "www.z.example", 2.0});
  }
  {
    std::ofstream f(dir / "auth.jsonl", std::ios::app);
    f << "{\"src\": \"1.1.1.1\", \"na";
  }
  std::size_t bad = 0;
  auto records = load_query_log(dir / "auth.jsonl", &bad);
  REQUIRE(records.size() == 2);
  CHECK(bad == 1);
  CHECK(records[0] == QueryRecord{A("9.9.9.9"), "abcdef.01020304.s1.z.example", 1.5});
}

TEST_CASE("UDP listener on localhost") {
  MemoryQueryLog log;
  AuthServer server(AuthConfig{"z.example"}, log);
  UdpAuthListener listener(server, 0, A("127.0.0.1"));
  REQUIRE(listener.port() != 0);
  std::atomic<bool> stop{false};
  std::thread serving([&] { listener.run(stop, 2); });

  int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
  REQUIRE(fd >= 0);
  timeval tv{2, 0};
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  sockaddr_in to{};
  to.sin_family = AF_INET;
  to.sin_port = htons(listener.port());
  to.sin_addr.s_addr = htonl(0x7f000001u);
  const int n = 20;
  int answered = 0;
  for (int i = 0; i < n; ++i) {
    auto q = query(encode_domain("abcdef", Ip4{0x01020300u + static_cast<std::uint32_t>(i)}, ScanId{}, "z.example")
                       .to_string(),
                   dns::type_a, static_cast<std::uint16_t>(i));
    ::sendto(fd, q.data(), q.size(), 0, reinterpret_cast<sockaddr*>(&to), sizeof to);
    std::uint8_t buf[512];
    auto got = ::recv(fd, buf, sizeof buf, 0);
    if (got > 0) {
      auto m = dns::decode({buf, static_cast<std::size_t>(got)});
      if (m && m->id == i && m->answers.size() == 1)
        ++answered;
    }
  }
  ::close(fd);
  stop.store(true);
  serving.join();
  CHECK(answered == n);
  auto records = log.snapshot();
  CHECK(records.size() == static_cast<std::size_t>(n));
  for (const auto& r : records)
    CHECK(r.src == A("127.0.0.1"));
}
