#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "savprobe/ip.hpp"

namespace savprobe {

/// Set of non-overlapping prefixes. Because no entry contains another, the
/// longest match for an address is the single entry containing it, found by
/// binary search over entries sorted by base.
class RoutingTable {
public:
  RoutingTable() = default;

  /// Keeps only the maximal prefixes: every entry contained in another is dropped.
  static RoutingTable aggregate(std::span<const Prefix> prefixes);

  struct LoadStats {
    std::size_t records = 0;
    std::size_t default_routes = 0; ///< 0.0.0.0/0 lines, skipped
    std::size_t covered = 0;        ///< entries removed by aggregation
  };
  /// Reads one `a.b.c.d/len` per line (`#` comments allowed) and aggregates.
  /// Throws ParseError naming the offending line.
  static RoutingTable load(const std::filesystem::path& path, LoadStats* stats = nullptr);

  std::optional<Prefix> lookup(Ip4 ip) const;
  bool contains(Ip4 ip) const { return lookup(ip).has_value(); }
  /// True if any entry overlaps `p`.
  bool intersects(const Prefix& p) const;

  const std::vector<Prefix>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

private:
  std::vector<Prefix> entries_; // sorted by base, pairwise disjoint
};

/// Longest-prefix-match map over possibly overlapping prefixes: one hash
/// table per prefix length, probed from /32 down to /0.
template <class T>
class PrefixMap {
public:
  /// Returns false (and leaves the old value) if `p` is already present.
  bool insert(const Prefix& p, T value) {
    auto [it, inserted] = tables_[p.length()].try_emplace(p.base().value, std::move(value));
    if (inserted)
      present_ |= std::uint64_t{1} << p.length();
    return inserted;
  }

  T* find_exact(const Prefix& p) {
    auto& t = tables_[p.length()];
    auto it = t.find(p.base().value);
    return it == t.end() ? nullptr : &it->second;
  }

  /// Longest entry containing `ip`.
  std::optional<std::pair<Prefix, const T*>> lookup(Ip4 ip) const {
    for (int len = 32; len >= 0; --len) {
      if (!(present_ & (std::uint64_t{1} << len)))
        continue;
      auto key = Prefix::containing(ip, len);
      const auto& t = tables_[len];
      if (auto it = t.find(key.base().value); it != t.end())
        return std::pair{key, &it->second};
    }
    return std::nullopt;
  }

private:
  std::array<std::unordered_map<std::uint32_t, T>, 33> tables_;
  std::uint64_t present_ = 0;
};

} // namespace savprobe
