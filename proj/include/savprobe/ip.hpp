#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace savprobe {

/// IPv4 address held as a host-order integer; integer order is address order.
struct Ip4 {
  std::uint32_t value = 0;

  constexpr Ip4() = default;
  constexpr explicit Ip4(std::uint32_t v) : value(v) {}
  constexpr Ip4(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d)
      : value((std::uint32_t{a} << 24) | (std::uint32_t{b} << 16) | (std::uint32_t{c} << 8) | d) {}

  /// Strict dotted-quad parse: four decimal octets, no leading '+', no spaces.
  static std::optional<Ip4> parse(std::string_view text);
  /// Like parse() but throws ParseError.
  static Ip4 from_string(std::string_view text);

  std::string to_string() const;

  /// RFC 1918 private space (10/8, 172.16/12, 192.168/16).
  bool is_private() const;

  friend constexpr auto operator<=>(Ip4, Ip4) = default;
};

/// CIDR block. The base never has host bits set.
class Prefix {
public:
  constexpr Prefix() = default;
  /// Throws InputError if `length > 32` or `base` has host bits set.
  Prefix(Ip4 base, int length);

  /// Masks host bits instead of rejecting them.
  static Prefix containing(Ip4 ip, int length);
  static std::optional<Prefix> parse(std::string_view text);
  static Prefix from_string(std::string_view text);

  constexpr Ip4 base() const { return base_; }
  constexpr int length() const { return length_; }
  constexpr std::uint32_t mask() const {
    return length_ == 0 ? 0u : ~std::uint32_t{0} << (32 - length_);
  }
  constexpr Ip4 last() const { return Ip4{base_.value | ~mask()}; }
  /// Number of addresses; 2^32 for /0 does not fit in 32 bits.
  constexpr std::uint64_t size() const { return std::uint64_t{1} << (32 - length_); }

  constexpr bool contains(Ip4 ip) const { return (ip.value & mask()) == base_.value; }
  constexpr bool contains(const Prefix& other) const {
    return other.length_ >= length_ && contains(other.base_);
  }

  std::string to_string() const;

  friend constexpr auto operator<=>(const Prefix&, const Prefix&) = default;

private:
  Ip4 base_{};
  int length_ = 0;
};

/// The /24 block holding `ip`.
inline Prefix to_slash24(Ip4 ip) { return Prefix::containing(ip, 24); }

} // namespace savprobe

template <>
struct std::hash<savprobe::Ip4> {
  std::size_t operator()(savprobe::Ip4 ip) const noexcept { return std::hash<std::uint32_t>{}(ip.value); }
};

template <>
struct std::hash<savprobe::Prefix> {
  std::size_t operator()(const savprobe::Prefix& p) const noexcept {
    return std::hash<std::uint64_t>{}((std::uint64_t{p.base().value} << 8) | static_cast<unsigned>(p.length()));
  }
};
