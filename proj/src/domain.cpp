#include "savprobe/domain.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <vector>

#include <fmt/format.h>

#include "savprobe/error.hpp"
#include "savprobe/rng.hpp"

namespace savprobe {

namespace {

char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) { return lower(x) == lower(y); });
}

bool is_alnum(char c) { return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

std::optional<std::uint32_t> parse_hex8(std::string_view s) {
  if (s.size() != 8)
    return std::nullopt;
  std::uint32_t v = 0;
  for (char c : s) {
    char l = lower(c);
    int d;
    if (l >= '0' && l <= '9')
      d = l - '0';
    else if (l >= 'a' && l <= 'f')
      d = l - 'a' + 10;
    else
      return std::nullopt;
    v = (v << 4) | static_cast<std::uint32_t>(d);
  }
  return v;
}

std::vector<std::string_view> labels_of(std::string_view name) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= name.size()) {
    auto dot = name.find('.', start);
    if (dot == std::string_view::npos) {
      out.push_back(name.substr(start));
      break;
    }
    out.push_back(name.substr(start, dot - start));
    start = dot + 1;
  }
  return out;
}

} // namespace

std::string ScanId::to_string() const {
  return fmt::format("{}{}", direction == Direction::spoofed ? 's' : 'n', sequence);
}

std::optional<ScanId> ScanId::parse(std::string_view label) {
  if (label.size() < 2 || label.size() > 10)
    return std::nullopt;
  ScanId id;
  switch (lower(label[0])) {
  case 's':
    id.direction = Direction::spoofed;
    break;
  case 'n':
    id.direction = Direction::unspoofed;
    break;
  default:
    return std::nullopt;
  }
  auto digits = label.substr(1);
  if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }))
    return std::nullopt;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), id.sequence);
  if (ec != std::errc{} || ptr != digits.data() + digits.size())
    return std::nullopt;
  // Canonical form only, so that decode is the exact inverse of render.
  if (digits.size() > 1 && digits[0] == '0')
    return std::nullopt;
  return id;
}

std::string ProbeDomain::to_string() const {
  return fmt::format("{}.{:08x}.{}.{}", nonce, target.value, scan.to_string(), zone);
}

bool is_valid_nonce(std::string_view nonce) {
  return nonce.size() == nonce_length && std::all_of(nonce.begin(), nonce.end(), is_alnum);
}

std::string normalize_zone(std::string_view zone) {
  if (!zone.empty() && zone.back() == '.')
    zone.remove_suffix(1);
  if (zone.empty())
    throw EncodeError("zone must not be empty");
  std::string out;
  out.reserve(zone.size());
  for (char c : zone)
    out.push_back(lower(c));
  for (auto label : labels_of(out)) {
    if (label.empty() || label.size() > 63)
      throw EncodeError(fmt::format("invalid label in zone '{}'", zone));
    if (!std::all_of(label.begin(), label.end(), [](char c) { return is_alnum(c) || c == '-'; }))
      throw EncodeError(fmt::format("invalid character in zone '{}'", zone));
  }
  // Wire length: one length octet per label plus the root octet.
  if (out.size() + 2 > 255)
    throw EncodeError(fmt::format("zone '{}' too long", zone));
  return out;
}

ProbeDomain encode_domain(std::string_view nonce, Ip4 target, ScanId scan, std::string_view zone) {
  if (!is_valid_nonce(nonce))
    throw EncodeError(fmt::format("nonce '{}' is not 6 alphanumerics", nonce));
  ProbeDomain d{std::string(nonce), target, scan, normalize_zone(zone)};
  if (d.to_string().size() + 2 > 255)
    throw EncodeError(fmt::format("zone '{}' too long for a probe name", zone));
  return d;
}

std::optional<ProbeDomain> decode_domain(std::string_view name, std::string_view zone) {
  if (!name.empty() && name.back() == '.')
    name.remove_suffix(1);
  if (!zone.empty() && zone.back() == '.')
    zone.remove_suffix(1);
  if (name.size() <= zone.size() + 1 || name[name.size() - zone.size() - 1] != '.' ||
      !iequals(name.substr(name.size() - zone.size()), zone))
    return std::nullopt;
  auto labels = labels_of(name.substr(0, name.size() - zone.size() - 1));
  if (labels.size() != 3 || !is_valid_nonce(labels[0]))
    return std::nullopt;
  auto target = parse_hex8(labels[1]);
  auto scan = ScanId::parse(labels[2]);
  if (!target || !scan)
    return std::nullopt;
  std::string z;
  for (char c : zone)
    z.push_back(lower(c));
  return ProbeDomain{std::string(labels[0]), Ip4{*target}, *scan, std::move(z)};
}

bool in_zone(std::string_view name, std::string_view zone) {
  if (!name.empty() && name.back() == '.')
    name.remove_suffix(1);
  if (!zone.empty() && zone.back() == '.')
    zone.remove_suffix(1);
  if (iequals(name, zone))
    return true;
  return name.size() > zone.size() && name[name.size() - zone.size() - 1] == '.' &&
         iequals(name.substr(name.size() - zone.size()), zone);
}

std::string derive_nonce(std::uint64_t key) {
  static constexpr std::string_view alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";
  SplitMix rng(key);
  std::string out(nonce_length, 'A');
  for (auto& c : out)
    c = alphabet[rng.below(alphabet.size())];
  return out;
}

} // namespace savprobe
