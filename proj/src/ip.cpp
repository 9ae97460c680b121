#include "savprobe/ip.hpp"

#include <charconv>

#include <fmt/format.h>

#include "savprobe/error.hpp"

namespace savprobe {

namespace {

std::optional<unsigned> parse_decimal(std::string_view text, unsigned max) {
  if (text.empty() || text.size() > 3)
    return std::nullopt;
  unsigned v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || v > max)
    return std::nullopt;
  return v;
}

} // namespace

std::optional<Ip4> Ip4::parse(std::string_view text) {
  std::uint32_t value = 0;
  for (int i = 0; i < 4; ++i) {
    auto dot = text.find('.');
    if ((i < 3) == (dot == std::string_view::npos))
      return std::nullopt;
    auto part = text.substr(0, dot);
    auto octet = parse_decimal(part, 255);
    if (!octet)
      return std::nullopt;
    value = (value << 8) | *octet;
    text = i < 3 ? text.substr(dot + 1) : std::string_view{};
  }
  return Ip4{value};
}

Ip4 Ip4::from_string(std::string_view text) {
  if (auto ip = parse(text))
    return *ip;
  throw ParseError(fmt::format("invalid IPv4 address '{}'", text));
}

std::string Ip4::to_string() const {
  return fmt::format("{}.{}.{}.{}", value >> 24, (value >> 16) & 0xff, (value >> 8) & 0xff, value & 0xff);
}

bool Ip4::is_private() const {
  return Prefix(Ip4(10, 0, 0, 0), 8).contains(*this) || Prefix(Ip4(172, 16, 0, 0), 12).contains(*this) ||
         Prefix(Ip4(192, 168, 0, 0), 16).contains(*this);
}

Prefix::Prefix(Ip4 base, int length) : base_(base), length_(length) {
  if (length < 0 || length > 32)
    throw InputError(fmt::format("prefix length {} out of range", length));
  if ((base.value & ~mask()) != 0)
    throw InputError(fmt::format("{}/{} has host bits set", base.to_string(), length));
}

Prefix Prefix::containing(Ip4 ip, int length) {
  std::uint32_t m = length == 0 ? 0u : ~std::uint32_t{0} << (32 - length);
  return Prefix(Ip4{ip.value & m}, length);
}

std::optional<Prefix> Prefix::parse(std::string_view text) {
  auto slash = text.find('/');
  if (slash == std::string_view::npos)
    return std::nullopt;
  auto ip = Ip4::parse(text.substr(0, slash));
  auto len = parse_decimal(text.substr(slash + 1), 32);
  if (!ip || !len)
    return std::nullopt;
  std::uint32_t m = *len == 0 ? 0u : ~std::uint32_t{0} << (32 - *len);
  if ((ip->value & ~m) != 0)
    return std::nullopt;
  return Prefix(*ip, static_cast<int>(*len));
}

Prefix Prefix::from_string(std::string_view text) {
  if (auto p = parse(text))
    return *p;
  throw ParseError(fmt::format("invalid prefix '{}'", text));
}

std::string Prefix::to_string() const { return fmt::format("{}/{}", base_.to_string(), length_); }

} // namespace savprobe
