#include "savprobe/packet.hpp"

#include <algorithm>
#include <array>

#include "savprobe/error.hpp"
#include "savprobe/rng.hpp"

namespace savprobe {

namespace {

void put16(std::uint8_t* p, std::uint16_t v) {
  p[0] = static_cast<std::uint8_t>(v >> 8);
  p[1] = static_cast<std::uint8_t>(v);
}

void put32(std::uint8_t* p, std::uint32_t v) {
  put16(p, static_cast<std::uint16_t>(v >> 16));
  put16(p + 2, static_cast<std::uint16_t>(v));
}

std::uint16_t get16(const std::uint8_t* p) { return static_cast<std::uint16_t>((p[0] << 8) | p[1]); }

std::uint32_t get32(const std::uint8_t* p) { return (std::uint32_t{get16(p)} << 16) | get16(p + 2); }

std::uint32_t pseudo_header_sum(Ip4 src, Ip4 dst, std::size_t udp_len) {
  return (src.value >> 16) + (src.value & 0xffff) + (dst.value >> 16) + (dst.value & 0xffff) + 17u +
         static_cast<std::uint32_t>(udp_len);
}

} // namespace

dns::Message build_query(const ProbeDomain& domain, std::uint16_t txid) {
  dns::Message msg;
  msg.id = txid;
  msg.flags.rd = true;
  msg.questions.push_back({domain.to_string(), dns::type_a, dns::class_in});
  return msg;
}

std::uint16_t probe_txid(std::uint64_t key, Ip4 target, ScanId scan) {
  std::uint64_t scan_bits = (std::uint64_t{scan.direction == Direction::spoofed ? 1u : 2u} << 32) | scan.sequence;
  return static_cast<std::uint16_t>(mix64(mix64(key, target.value), scan_bits) >> 48);
}

std::uint16_t ones_complement_sum(std::span<const std::uint8_t> data, std::uint32_t initial) {
  std::uint64_t sum = initial;
  std::size_t i = 0;
  for (; i + 1 < data.size(); i += 2)
    sum += get16(data.data() + i);
  if (i < data.size())
    sum += std::uint32_t{data[i]} << 8;
  while (sum >> 16)
    sum = (sum & 0xffff) + (sum >> 16);
  return static_cast<std::uint16_t>(sum);
}

std::uint16_t ipv4_checksum(std::span<const std::uint8_t> header) {
  std::array<std::uint8_t, 60> copy{};
  const std::size_t n = std::min(header.size(), copy.size());
  std::copy_n(header.begin(), n, copy.begin());
  if (n >= 12)
    copy[10] = copy[11] = 0;
  return static_cast<std::uint16_t>(~ones_complement_sum({copy.data(), n}));
}

std::uint16_t udp_checksum(Ip4 src, Ip4 dst, std::span<const std::uint8_t> segment) {
  std::uint16_t folded = ones_complement_sum(segment, pseudo_header_sum(src, dst, segment.size()));
  std::uint16_t c = static_cast<std::uint16_t>(~folded);
  return c == 0 ? 0xffff : c;
}

std::vector<std::uint8_t> build_raw(Ip4 src, Ip4 dst, std::uint16_t sport, std::uint16_t dport,
                                    std::span<const std::uint8_t> payload) {
  if (payload.empty())
    throw EncodeError("empty UDP payload");
  if (payload.size() > max_dns_payload)
    throw EncodeError("DNS payload exceeds 512 octets");
  const std::size_t udp_len = udp_header_size + payload.size();
  const std::size_t total = ipv4_header_size + udp_len;
  std::vector<std::uint8_t> pkt(total, 0);
  std::uint8_t* ip = pkt.data();
  ip[0] = 0x45;
  put16(ip + 2, static_cast<std::uint16_t>(total));
  put16(ip + 4, static_cast<std::uint16_t>(mix64(src.value, (std::uint64_t{dst.value} << 16) | sport) >> 48));
  ip[8] = 64;
  ip[9] = 17;
  put32(ip + 12, src.value);
  put32(ip + 16, dst.value);
  put16(ip + 10, ipv4_checksum({ip, ipv4_header_size}));

  std::uint8_t* udp = ip + ipv4_header_size;
  put16(udp, sport);
  put16(udp + 2, dport);
  put16(udp + 4, static_cast<std::uint16_t>(udp_len));
  std::copy(payload.begin(), payload.end(), udp + udp_header_size);
  put16(udp + 6, udp_checksum(src, dst, {udp, udp_len}));
  return pkt;
}

std::vector<std::uint8_t> build_raw(Ip4 src, Ip4 dst, std::uint16_t sport, std::uint16_t dport,
                                    const dns::Message& msg) {
  auto payload = dns::encode(msg);
  return build_raw(src, dst, sport, dport, payload);
}

std::optional<UdpDatagram> parse_udp(std::span<const std::uint8_t> packet) {
  if (packet.size() < ipv4_header_size)
    return std::nullopt;
  const std::uint8_t* ip = packet.data();
  if ((ip[0] >> 4) != 4)
    return std::nullopt;
  std::size_t ihl = std::size_t{ip[0] & 0xfu} * 4;
  std::size_t total = get16(ip + 2);
  if (ihl < ipv4_header_size || total < ihl + udp_header_size || total > packet.size() || ip[9] != 17)
    return std::nullopt;
  if (ones_complement_sum(packet.subspan(0, ihl)) != 0xffff)
    return std::nullopt;
  // Fragments other than a complete datagram are not reassembled.
  if ((get16(ip + 6) & 0x3fff) != 0)
    return std::nullopt;
  UdpDatagram d;
  d.src = Ip4{get32(ip + 12)};
  d.dst = Ip4{get32(ip + 16)};
  auto udp = packet.subspan(ihl, total - ihl);
  std::size_t udp_len = get16(udp.data() + 4);
  if (udp_len < udp_header_size || udp_len > udp.size())
    return std::nullopt;
  udp = udp.subspan(0, udp_len);
  if (get16(udp.data() + 6) != 0 &&
      ones_complement_sum(udp, pseudo_header_sum(d.src, d.dst, udp_len)) != 0xffff)
    return std::nullopt;
  d.sport = get16(udp.data());
  d.dport = get16(udp.data() + 2);
  d.payload = udp.subspan(udp_header_size);
  return d;
}

std::optional<ParsedResponse> parse_dns_response(Ip4 responder, std::span<const std::uint8_t> payload) {
  auto msg = dns::decode(payload);
  if (!msg || !msg->flags.qr)
    return std::nullopt;
  ParsedResponse r;
  r.responder = responder;
  r.txid = msg->id;
  r.rcode = msg->rcode();
  if (!msg->questions.empty())
    r.question = msg->questions.front().name;
  return r;
}

std::optional<ParsedResponse> parse_response(std::span<const std::uint8_t> packet) {
  auto d = parse_udp(packet);
  if (!d)
    return std::nullopt;
  return parse_dns_response(d->src, d->payload);
}

} // namespace savprobe
