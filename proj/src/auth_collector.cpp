#include "savprobe/auth_collector.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <thread>
#include <unistd.h>
#include <unordered_set>

#include <fmt/format.h>

#include "savprobe/dns.hpp"
#include "savprobe/error.hpp"

namespace savprobe {

nlohmann::json QueryRecord::to_json() const {
  return {{"src", src.to_string()}, {"name", name}, {"ts", round_micros(timestamp)}};
}

QueryRecord QueryRecord::from_json(const nlohmann::json& j) {
  try {
    return QueryRecord{Ip4::from_string(j.at("src").get<std::string>()), j.at("name").get<std::string>(),
                       j.at("ts").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad query record: ") + e.what());
  }
}

void MemoryQueryLog::append(const QueryRecord& record) {
  std::lock_guard lock(mutex_);
  records_.push_back(record);
}

std::vector<QueryRecord> MemoryQueryLog::snapshot() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::size_t MemoryQueryLog::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

ObservationLog decode_records(std::span<const QueryRecord> records, std::string_view zone) {
  ObservationLog log;
  for (const auto& r : records) {
    if (auto d = decode_domain(r.name, zone))
      log.observations.push_back({r.src, std::move(*d), r.name, r.timestamp});
    else
      log.quarantined.push_back(r);
  }
  return log;
}

std::vector<QueryRecord> load_query_log(const std::filesystem::path& path, std::size_t* bad_lines) {
  std::vector<QueryRecord> out;
  std::size_t bad = 0;
  read_jsonl(
      path,
      [&](std::size_t, const nlohmann::json& j) {
        try {
          out.push_back(QueryRecord::from_json(j));
        } catch (const ParseError&) {
          ++bad;
        }
      },
      [&](std::size_t, const std::string&) { ++bad; });
  if (bad_lines)
    *bad_lines = bad;
  return out;
}

ObservationLog dedup(const ObservationLog& log) {
  ObservationLog out;
  std::unordered_set<std::string> seen;
  for (const auto& obs : log.observations) {
    std::string key = obs.source.to_string();
    key.push_back(' ');
    for (char c : obs.raw_name)
      key.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c);
    if (!key.empty() && key.back() == '.')
      key.pop_back();
    if (seen.insert(std::move(key)).second)
      out.observations.push_back(obs);
  }
  out.quarantined = log.quarantined;
  return out;
}

ProxyClass classify_proxy(const QueryObservation& obs) {
  return obs.source == obs.decoded.target ? ProxyClass::non_forwarder : ProxyClass::forwarder;
}

AuthServer::AuthServer(AuthConfig config, QueryLogSink& log) : config_(std::move(config)), log_(log) {
  config_.zone = normalize_zone(config_.zone);
}

std::optional<std::vector<std::uint8_t>> AuthServer::handle(Ip4 src, std::span<const std::uint8_t> payload,
                                                           double timestamp) {
  auto query = dns::decode(payload);
  if (!query || query->flags.qr) {
    ++stats_.malformed;
    return std::nullopt;
  }
  dns::Message resp;
  resp.id = query->id;
  resp.flags.qr = true;
  resp.flags.opcode = query->flags.opcode;
  resp.flags.rd = query->flags.rd;
  if (query->flags.opcode != 0 || query->questions.size() != 1) {
    ++stats_.malformed;
    resp.flags.rcode = static_cast<std::uint8_t>(query->flags.opcode != 0 ? dns::Rcode::notimp : dns::Rcode::formerr);
    return dns::encode(resp);
  }
  const auto& q = query->questions.front();
  resp.questions.push_back(q);
  if (!in_zone(q.name, config_.zone)) {
    ++stats_.refused;
    resp.flags.rcode = static_cast<std::uint8_t>(dns::Rcode::refused);
    return dns::encode(resp);
  }
  resp.flags.aa = true;
  const bool apex = in_zone(config_.zone, q.name) && in_zone(q.name, config_.zone);
  const std::string ns_name = "ns1." + config_.zone;

  auto soa = [&] {
    dns::ResourceRecord rr{config_.zone, dns::type_soa, dns::class_in, config_.ttl, {}};
    dns::encode_name(ns_name, rr.rdata);
    dns::encode_name("hostmaster." + config_.zone, rr.rdata);
    for (std::uint32_t v : {1u, 3600u, 600u, 86400u, config_.ttl})
      for (int shift = 24; shift >= 0; shift -= 8)
        rr.rdata.push_back(static_cast<std::uint8_t>(v >> shift));
    return rr;
  };

  if (q.qclass == dns::class_in && q.qtype == dns::type_a) {
    log_.append(QueryRecord{src, q.name, timestamp});
    ++stats_.logged;
    if (!decode_domain(q.name, config_.zone))
      ++stats_.quarantined;
    const std::uint32_t a = config_.answer.value;
    resp.answers.push_back({q.name, dns::type_a, dns::class_in, config_.ttl,
                            {static_cast<std::uint8_t>(a >> 24), static_cast<std::uint8_t>(a >> 16),
                             static_cast<std::uint8_t>(a >> 8), static_cast<std::uint8_t>(a)}});
    return dns::encode(resp);
  }
  ++stats_.other_types;
  if (apex && q.qtype == dns::type_ns) {
    dns::ResourceRecord rr{q.name, dns::type_ns, dns::class_in, config_.ttl, {}};
    dns::encode_name(ns_name, rr.rdata);
    resp.answers.push_back(std::move(rr));
  } else if (apex && q.qtype == dns::type_soa) {
    resp.answers.push_back(soa());
  } else {
    resp.authority.push_back(soa()); // NODATA
  }
  return dns::encode(resp);
}

UdpAuthListener::UdpAuthListener(AuthServer& server, std::uint16_t port, Ip4 bind_addr) : server_(server) {
  fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd_ < 0)
    throw TransportError(fmt::format("socket: {}", std::strerror(errno)));
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  addr.sin_addr.s_addr = htonl(bind_addr.value);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    int err = errno;
    ::close(fd_);
    throw TransportError(fmt::format("bind {}:{}: {}", bind_addr.to_string(), port, std::strerror(err)));
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

UdpAuthListener::~UdpAuthListener() {
  if (fd_ >= 0)
    ::close(fd_);
}

void UdpAuthListener::run(const std::atomic<bool>& stop, unsigned workers) {
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < std::max(1u, workers); ++i)
    pool.emplace_back([&] { worker(stop); });
  worker(stop);
  for (auto& t : pool)
    t.join();
}

void UdpAuthListener::worker(const std::atomic<bool>& stop) {
  std::uint8_t buf[4096];
  while (!stop.load()) {
    pollfd pfd{fd_, POLLIN, 0};
    int rc = ::poll(&pfd, 1, 100);
    if (rc <= 0)
      continue;
    sockaddr_in from{};
    socklen_t len = sizeof from;
    auto n = ::recvfrom(fd_, buf, sizeof buf, MSG_DONTWAIT, reinterpret_cast<sockaddr*>(&from), &len);
    if (n <= 0)
      continue;
    double ts = std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
    auto resp = server_.handle(Ip4{ntohl(from.sin_addr.s_addr)}, {buf, static_cast<std::size_t>(n)}, ts);
    if (resp)
      ::sendto(fd_, resp->data(), resp->size(), 0, reinterpret_cast<sockaddr*>(&from), len);
  }
}

} // namespace savprobe
