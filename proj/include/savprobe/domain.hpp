#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "savprobe/ip.hpp"

namespace savprobe {

enum class Direction : std::uint8_t { spoofed, unspoofed };

/// Scan identifier label: `s<seq>` for spoofed probes, `n<seq>` for unspoofed.
struct ScanId {
  Direction direction = Direction::spoofed;
  std::uint32_t sequence = 1;

  std::string to_string() const;
  /// Case-insensitive; rejects anything but [sSnN][0-9]{1,9}.
  static std::optional<ScanId> parse(std::string_view label);

  friend constexpr auto operator<=>(const ScanId&, const ScanId&) = default;
};

/// Unique probe name `<nonce>.<hex target>.<scan id>.<zone>`.
struct ProbeDomain {
  std::string nonce; // 6 alphanumerics
  Ip4 target;
  ScanId scan;
  std::string zone; // lowercase, no trailing dot

  std::string to_string() const;
  friend bool operator==(const ProbeDomain&, const ProbeDomain&) = default;
};

inline constexpr std::size_t nonce_length = 6;

bool is_valid_nonce(std::string_view nonce);

/// Lowercases and strips one trailing dot. Throws EncodeError if the result
/// is not a valid hostname (labels 1..63 of [a-z0-9-], total wire length ≤ 255).
std::string normalize_zone(std::string_view zone);

/// Throws EncodeError on a bad nonce or if the full name would exceed DNS limits.
ProbeDomain encode_domain(std::string_view nonce, Ip4 target, ScanId scan, std::string_view zone);

/// Inverse of encode_domain. Matching is case-insensitive; anything that is not
/// exactly four labels in front of `zone` with a valid nonce, 8 hex digits and
/// a scan id yields std::nullopt. The returned nonce keeps its original case.
std::optional<ProbeDomain> decode_domain(std::string_view name, std::string_view zone);

/// True if `name` equals `zone` or is a subdomain of it (case-insensitive).
bool in_zone(std::string_view name, std::string_view zone);

/// Nonce derived from a 64-bit key; same key, same nonce.
std::string derive_nonce(std::uint64_t key);

} // namespace savprobe
