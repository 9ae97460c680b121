#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace savprobe::dns {

enum class Rcode : std::uint8_t {
  noerror = 0,
  formerr = 1,
  servfail = 2,
  nxdomain = 3,
  notimp = 4,
  refused = 5,
};

std::string to_string(Rcode rc);
std::optional<Rcode> rcode_from_string(std::string_view s);

inline constexpr std::uint16_t type_a = 1;
inline constexpr std::uint16_t type_ns = 2;
inline constexpr std::uint16_t type_soa = 6;
inline constexpr std::uint16_t class_in = 1;

struct Flags {
  bool qr = false;
  std::uint8_t opcode = 0;
  bool aa = false;
  bool tc = false;
  bool rd = false;
  bool ra = false;
  std::uint8_t rcode = 0; // low 4 bits

  std::uint16_t pack() const;
  static Flags unpack(std::uint16_t bits);
  friend bool operator==(const Flags&, const Flags&) = default;
};

struct Question {
  std::string name; // dotted, no trailing dot; root is ""
  std::uint16_t qtype = type_a;
  std::uint16_t qclass = class_in;
  friend bool operator==(const Question&, const Question&) = default;
};

struct ResourceRecord {
  std::string name;
  std::uint16_t type = type_a;
  std::uint16_t rclass = class_in;
  std::uint32_t ttl = 0;
  std::vector<std::uint8_t> rdata;
  friend bool operator==(const ResourceRecord&, const ResourceRecord&) = default;
};

struct Message {
  std::uint16_t id = 0;
  Flags flags;
  std::vector<Question> questions;
  std::vector<ResourceRecord> answers;
  std::vector<ResourceRecord> authority;
  std::vector<ResourceRecord> additional;

  Rcode rcode() const { return static_cast<Rcode>(flags.rcode); }
  friend bool operator==(const Message&, const Message&) = default;
};

/// Uncompressed RFC 1035 encoding. Throws EncodeError on over-long labels/names.
std::vector<std::uint8_t> encode(const Message& msg);

/// Accepts name compression. Returns std::nullopt on any framing error;
/// bytes after the last declared record are ignored.
std::optional<Message> decode(std::span<const std::uint8_t> wire);

/// Appends the wire form of `name` (no compression).
void encode_name(std::string_view name, std::vector<std::uint8_t>& out);

} // namespace savprobe::dns
