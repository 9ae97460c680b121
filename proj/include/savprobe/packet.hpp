#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "savprobe/dns.hpp"
#include "savprobe/domain.hpp"
#include "savprobe/ip.hpp"

namespace savprobe {

inline constexpr std::size_t ipv4_header_size = 20;
inline constexpr std::size_t udp_header_size = 8;
inline constexpr std::size_t max_dns_payload = 512;

/// A-record query for `domain`: rd=1, qr=0, one IN/A question, no records.
dns::Message build_query(const ProbeDomain& domain, std::uint16_t txid);

/// Transaction id keyed on the run secret, target and scan id, so a response
/// can be matched without keeping per-probe state.
std::uint16_t probe_txid(std::uint64_t key, Ip4 target, ScanId scan);

/// RFC 1071 one's-complement sum folded to 16 bits (not inverted).
std::uint16_t ones_complement_sum(std::span<const std::uint8_t> data, std::uint32_t initial = 0);

/// IPv4 header checksum for a 20-byte header with the checksum field zeroed or not.
std::uint16_t ipv4_checksum(std::span<const std::uint8_t> header);

/// UDP checksum over pseudo-header + segment; 0 is transmitted as 0xffff.
std::uint16_t udp_checksum(Ip4 src, Ip4 dst, std::span<const std::uint8_t> segment);

/// IPv4 + UDP datagram carrying an encoded DNS message. Both checksums are
/// always filled in. Throws EncodeError for an empty or >512-octet payload.
std::vector<std::uint8_t> build_raw(Ip4 src, Ip4 dst, std::uint16_t sport, std::uint16_t dport,
                                    std::span<const std::uint8_t> payload);
std::vector<std::uint8_t> build_raw(Ip4 src, Ip4 dst, std::uint16_t sport, std::uint16_t dport,
                                    const dns::Message& msg);

struct UdpDatagram {
  Ip4 src;
  Ip4 dst;
  std::uint16_t sport = 0;
  std::uint16_t dport = 0;
  std::span<const std::uint8_t> payload; // view into the parsed buffer
};

/// Parses an IPv4/UDP datagram (options allowed). Verifies lengths and the
/// IPv4 header checksum; a nonzero UDP checksum is verified too.
std::optional<UdpDatagram> parse_udp(std::span<const std::uint8_t> packet);

struct ParsedResponse {
  Ip4 responder;
  std::uint16_t txid = 0;
  dns::Rcode rcode = dns::Rcode::noerror;
  std::string question; // empty if the response carried no question
};

/// DNS response from `responder` carried in `payload`. Rejects queries (qr=0)
/// and anything that does not frame as DNS.
std::optional<ParsedResponse> parse_dns_response(Ip4 responder, std::span<const std::uint8_t> payload);

/// Full IPv4/UDP datagram holding a DNS response.
std::optional<ParsedResponse> parse_response(std::span<const std::uint8_t> packet);

} // namespace savprobe
