#include "savprobe/target_plan.hpp"

#include <algorithm>
#include <limits>

#include <fmt/format.h>

#include "savprobe/error.hpp"
#include "savprobe/rng.hpp"
#include "savprobe/text_io.hpp"

namespace savprobe {

ExclusionList ExclusionList::load(const std::filesystem::path& path) {
  std::vector<Prefix> cidrs;
  for_each_record(path, [&](std::size_t line, std::string_view text) {
    if (auto p = Prefix::parse(text))
      cidrs.push_back(*p);
    else if (auto ip = Ip4::parse(text))
      cidrs.emplace_back(*ip, 32);
    else
      throw ParseError(path.string(), line, fmt::format("malformed CIDR '{}'", text));
  });
  return ExclusionList(cidrs);
}

bool is_usable_host(Ip4 ip, const Prefix& prefix) {
  if (!prefix.contains(ip))
    return false;
  if (prefix.length() <= 24) {
    auto low = ip.value & 0xff;
    return low != 0 && low != 0xff;
  }
  if (prefix.length() <= 30)
    return ip != prefix.base() && ip != prefix.last();
  return true;
}

std::uint64_t count_hosts(const Prefix& prefix) {
  if (prefix.length() <= 24)
    return (prefix.size() >> 8) * 254;
  if (prefix.length() <= 30)
    return prefix.size() - 2;
  return prefix.size();
}

std::vector<Ip4> enumerate_hosts(const Prefix& prefix) {
  std::vector<Ip4> out;
  out.reserve(count_hosts(prefix));
  const std::uint64_t first = prefix.base().value;
  const std::uint64_t last = prefix.last().value;
  for (std::uint64_t v = first; v <= last; ++v) {
    Ip4 ip{static_cast<std::uint32_t>(v)};
    if (is_usable_host(ip, prefix))
      out.push_back(ip);
  }
  return out;
}

Ip4 spoof_source(Ip4 target, const Prefix& prefix) {
  if (target.value != 0xffffffffu && is_usable_host(Ip4{target.value + 1}, prefix))
    return Ip4{target.value + 1};
  if (target.value != 0 && is_usable_host(Ip4{target.value - 1}, prefix))
    return Ip4{target.value - 1};
  return (target.value & 0xff) == 0xff ? Ip4{target.value - 1} : Ip4{target.value + 1};
}

namespace {

constexpr std::uint32_t no_block = std::numeric_limits<std::uint32_t>::max();
// Below this many remaining hosts the sampler switches to an exact
// feasibility check (a /24 holds at most 256, so above it every choice is safe).
constexpr std::uint64_t endgame_threshold = 1024;

struct Block {
  std::uint32_t base = 0; // /24 base address
  std::uint32_t piece_begin = 0;
  std::uint16_t piece_count = 0;
  std::uint16_t remaining = 0;
  std::uint16_t cursor = 0; // position in the per-block permutation
  std::uint8_t mul = 1;     // odd, so i -> mul*i + add is a bijection mod 256
  std::uint8_t add = 0;
};

class Fenwick {
public:
  explicit Fenwick(const std::vector<Block>& blocks) : tree_(blocks.size() + 1, 0) {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      tree_[i + 1] += blocks[i].remaining;
      auto parent = (i + 1) + ((i + 1) & -(i + 1));
      if (parent < tree_.size())
        tree_[parent] += tree_[i + 1];
    }
  }

  void decrement(std::size_t i) {
    for (++i; i < tree_.size(); i += i & -i)
      --tree_[i];
  }

  std::uint64_t prefix_sum(std::size_t i) const { // sum of [0, i)
    std::uint64_t s = 0;
    for (; i > 0; i -= i & -i)
      s += tree_[i];
    return s;
  }

  /// Smallest index whose inclusive prefix sum exceeds `rank`.
  std::size_t find(std::uint64_t rank) const {
    std::size_t pos = 0;
    std::size_t step = std::size_t{1} << (63 - __builtin_clzll(tree_.size()));
    for (; step > 0; step >>= 1) {
      if (pos + step < tree_.size() && tree_[pos + step] <= rank) {
        pos += step;
        rank -= tree_[pos];
      }
    }
    return pos;
  }

private:
  std::vector<std::uint64_t> tree_;
};

} // namespace

struct ScheduleStream::State {
  ScheduleConfig config;
  ExclusionList exclusions;
  std::vector<Block> blocks;
  std::vector<Prefix> pieces;
  std::unique_ptr<Fenwick> fenwick;
  std::vector<std::uint32_t> endgame; // live blocks once few hosts remain
  bool in_endgame = false;
  SplitMix rng{0};
  std::uint64_t total = 0;
  std::uint64_t remaining = 0;
  std::uint64_t emitted = 0;
  std::uint64_t conflicts = 0;
  std::uint64_t unspoofable = 0;
  std::uint32_t previous = no_block;
  std::string zone;

  const Prefix* piece_for(const Block& b, Ip4 ip) const {
    for (std::uint32_t i = 0; i < b.piece_count; ++i)
      if (pieces[b.piece_begin + i].contains(ip))
        return &pieces[b.piece_begin + i];
    return nullptr;
  }

  /// Spoofed source for an eligible target, or nullopt if the host is out of scope.
  std::optional<Ip4> source_for(const Block& b, Ip4 ip, bool count_unspoofable) {
    const Prefix* piece = piece_for(b, ip);
    if (!piece || !is_usable_host(ip, *piece) || exclusions.contains(ip))
      return std::nullopt;
    Ip4 src = spoof_source(ip, *piece);
    if (exclusions.contains(src)) {
      // Try the other neighbour before giving up on the host.
      if ((src.value > ip.value && ip.value == 0) || (src.value < ip.value && ip.value == 0xffffffffu)) {
        if (count_unspoofable)
          ++unspoofable;
        return std::nullopt;
      }
      Ip4 alt = src.value > ip.value ? Ip4{ip.value - 1} : Ip4{ip.value + 1};
      bool alt_ok = !exclusions.contains(alt) &&
                    (piece->length() == 32 ? to_slash24(alt) == to_slash24(ip) : is_usable_host(alt, *piece));
      if (!alt_ok) {
        if (count_unspoofable)
          ++unspoofable;
        return std::nullopt;
      }
      src = alt;
    }
    return src;
  }

  void add_pieces(std::uint32_t base, std::span<const Prefix> ps) {
    Block b;
    b.base = base;
    b.piece_begin = static_cast<std::uint32_t>(pieces.size());
    b.piece_count = static_cast<std::uint16_t>(ps.size());
    pieces.insert(pieces.end(), ps.begin(), ps.end());
    std::uint64_t h = mix64(config.seed, base);
    b.mul = static_cast<std::uint8_t>((h & 0xfe) | 1);
    b.add = static_cast<std::uint8_t>(h >> 8);
    Prefix block24(Ip4{base}, 24);
    if (ps.size() == 1 && ps[0].length() <= 24 && !exclusions.intersects(block24)) {
      b.remaining = 254;
    } else {
      std::uint16_t n = 0;
      for (std::uint32_t o = 0; o < 256; ++o)
        if (source_for(b, Ip4{base | o}, true))
          ++n;
      b.remaining = n;
    }
    if (b.remaining == 0) {
      pieces.resize(b.piece_begin);
      return;
    }
    blocks.push_back(b);
  }

  void build(const RoutingTable& table) {
    std::vector<Prefix> pending; // >/24 entries sharing the current /24
    std::uint32_t pending_base = 0;
    auto flush = [&] {
      if (!pending.empty())
        add_pieces(pending_base, pending);
      pending.clear();
    };
    for (const auto& p : table.entries()) {
      if (p.length() <= 24) {
        flush();
        const std::uint64_t first = p.base().value;
        const std::uint64_t last = p.last().value;
        for (std::uint64_t base = first; base <= last; base += 256)
          add_pieces(static_cast<std::uint32_t>(base), std::span(&p, 1));
      } else {
        std::uint32_t base = p.base().value & 0xffffff00u;
        if (!pending.empty() && base != pending_base)
          flush();
        pending_base = base;
        pending.push_back(p);
      }
    }
    flush();
    for (const auto& b : blocks)
      total += b.remaining;
    remaining = total;
  }

  std::uint32_t pick_block() {
    if (!in_endgame && remaining <= endgame_threshold) {
      in_endgame = true;
      for (std::uint32_t i = 0; i < blocks.size(); ++i)
        if (blocks[i].remaining > 0)
          endgame.push_back(i);
      fenwick.reset();
    }
    if (in_endgame)
      return pick_endgame();

    std::uint64_t excluded = previous == no_block ? 0 : blocks[previous].remaining;
    std::uint64_t rank = rng.below(remaining - excluded);
    if (previous != no_block && rank >= fenwick->prefix_sum(previous))
      rank += excluded;
    return static_cast<std::uint32_t>(fenwick->find(rank));
  }

  bool feasible_after(std::uint32_t choice) const {
    // After taking one host from `choice`, the rest must be arrangeable with
    // `choice` not first: max count <= ceil(n/2) and count(choice) <= floor(n/2).
    std::uint64_t n = remaining - 1;
    for (auto i : endgame) {
      std::uint64_t c = blocks[i].remaining - (i == choice ? 1 : 0);
      if (c > (n + 1) / 2)
        return false;
      if (i == choice && c > n / 2)
        return false;
    }
    return true;
  }

  std::uint32_t pick_endgame() {
    std::erase_if(endgame, [&](std::uint32_t i) { return blocks[i].remaining == 0; });
    std::uint64_t pool = 0;
    for (auto i : endgame)
      if (i != previous)
        pool += blocks[i].remaining;
    if (pool == 0) {
      ++conflicts;
      return previous;
    }
    std::uint64_t rank = rng.below(pool);
    std::uint32_t choice = no_block;
    for (auto i : endgame) {
      if (i == previous)
        continue;
      if (rank < blocks[i].remaining) {
        choice = i;
        break;
      }
      rank -= blocks[i].remaining;
    }
    if (feasible_after(choice))
      return choice;
    std::uint32_t best = no_block;
    for (auto i : endgame)
      if (i != previous && (best == no_block || blocks[i].remaining > blocks[best].remaining))
        best = i;
    return best;
  }

  Ip4 take_host(Block& b, Ip4& src) {
    while (true) {
      std::uint8_t offset = static_cast<std::uint8_t>(b.mul * b.cursor + b.add);
      ++b.cursor;
      Ip4 ip{b.base | offset};
      if (auto s = source_for(b, ip, false)) {
        src = *s;
        return ip;
      }
    }
  }
};

ScheduleStream::ScheduleStream(const RoutingTable& table, const ExclusionList& exclusions, ScheduleConfig config)
    : state_(std::make_unique<State>()) {
  state_->config = std::move(config);
  state_->zone = normalize_zone(state_->config.zone);
  state_->exclusions = exclusions;
  state_->rng = SplitMix(mix64(state_->config.seed, 0x5343484544554c45ULL));
  state_->build(table);
  if (state_->total == 0)
    throw InputError("no probe targets remain after exclusions");
  state_->fenwick = std::make_unique<Fenwick>(state_->blocks);
}

ScheduleStream::~ScheduleStream() = default;
ScheduleStream::ScheduleStream(ScheduleStream&&) noexcept = default;
ScheduleStream& ScheduleStream::operator=(ScheduleStream&&) noexcept = default;

std::optional<ProbePair> ScheduleStream::next() {
  auto& s = *state_;
  if (s.remaining == 0)
    return std::nullopt;
  std::uint32_t bi = s.pick_block();
  if (bi == s.previous && s.emitted > 0 && !s.in_endgame)
    ++s.conflicts;
  Block& b = s.blocks[bi];
  ProbePair pair;
  pair.target = s.take_host(b, pair.spoofed_src);
  --b.remaining;
  --s.remaining;
  if (s.fenwick)
    s.fenwick->decrement(bi);
  s.previous = bi;
  ++s.emitted;

  const ScanId spoofed{Direction::spoofed, s.config.scan_sequence};
  const ScanId unspoofed{Direction::unspoofed, s.config.scan_sequence};
  std::uint64_t key = mix64(s.config.seed, pair.target.value);
  pair.spoofed_domain = encode_domain(derive_nonce(mix64(key, 's')), pair.target, spoofed, s.zone);
  pair.unspoofed_domain = encode_domain(derive_nonce(mix64(key, 'n')), pair.target, unspoofed, s.zone);
  return pair;
}

std::uint64_t ScheduleStream::total() const { return state_->total; }
std::uint64_t ScheduleStream::emitted() const { return state_->emitted; }
std::uint64_t ScheduleStream::adjacency_conflicts() const { return state_->conflicts; }
std::uint64_t ScheduleStream::unspoofable() const { return state_->unspoofable; }
const ScheduleConfig& ScheduleStream::config() const { return state_->config; }

Schedule build_schedule(const RoutingTable& table, const ExclusionList& exclusions, const std::string& zone,
                        std::uint64_t seed, double rate) {
  ScheduleStream stream(table, exclusions, ScheduleConfig{zone, seed, rate, 1});
  Schedule schedule;
  schedule.rate = rate;
  schedule.seed = seed;
  schedule.pairs.reserve(stream.total());
  while (auto pair = stream.next())
    schedule.pairs.push_back(std::move(*pair));
  schedule.adjacency_conflicts = stream.adjacency_conflicts();
  return schedule;
}

void write_schedule_csv_header(std::ostream& out) { out << "target,spoofed_src,spoofed_domain,unspoofed_domain\n"; }

void write_schedule_csv_row(std::ostream& out, const ProbePair& pair) {
  out << pair.target.to_string() << ',' << pair.spoofed_src.to_string() << ',' << pair.spoofed_domain.to_string()
      << ',' << pair.unspoofed_domain.to_string() << '\n';
}

} // namespace savprobe
