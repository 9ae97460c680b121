#include "savprobe/dns.hpp"

#include <fmt/format.h>

#include "savprobe/error.hpp"

namespace savprobe::dns {

namespace {

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  put16(out, static_cast<std::uint16_t>(v >> 16));
  put16(out, static_cast<std::uint16_t>(v));
}

class Reader {
public:
  explicit Reader(std::span<const std::uint8_t> wire) : wire_(wire) {}

  bool u16(std::uint16_t& v) {
    if (pos_ + 2 > wire_.size())
      return false;
    v = static_cast<std::uint16_t>((wire_[pos_] << 8) | wire_[pos_ + 1]);
    pos_ += 2;
    return true;
  }

  bool u32(std::uint32_t& v) {
    std::uint16_t hi, lo;
    if (!u16(hi) || !u16(lo))
      return false;
    v = (std::uint32_t{hi} << 16) | lo;
    return true;
  }

  bool bytes(std::size_t n, std::vector<std::uint8_t>& out) {
    if (pos_ + n > wire_.size())
      return false;
    out.assign(wire_.begin() + static_cast<std::ptrdiff_t>(pos_), wire_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return true;
  }

  bool name(std::string& out) {
    out.clear();
    std::size_t pos = pos_;
    bool jumped = false;
    std::size_t wire_len = 0;
    // Each pointer must go strictly backwards, which bounds the loop.
    std::size_t limit = pos_;
    while (true) {
      if (pos >= wire_.size())
        return false;
      std::uint8_t len = wire_[pos];
      if ((len & 0xc0) == 0xc0) {
        if (pos + 1 >= wire_.size())
          return false;
        std::size_t target = static_cast<std::size_t>((len & 0x3f) << 8) | wire_[pos + 1];
        if (!jumped)
          pos_ = pos + 2;
        if (target >= limit)
          return false;
        limit = target;
        pos = target;
        jumped = true;
        continue;
      }
      if (len & 0xc0)
        return false; // extended label types unsupported
      ++pos;
      if (len == 0)
        break;
      if (pos + len > wire_.size())
        return false;
      wire_len += len + 1u;
      if (wire_len + 1 > 255)
        return false;
      if (!out.empty())
        out.push_back('.');
      out.append(reinterpret_cast<const char*>(wire_.data() + pos), len);
      pos += len;
    }
    if (!jumped)
      pos_ = pos;
    return true;
  }

private:
  std::span<const std::uint8_t> wire_;
  std::size_t pos_ = 0;
};

bool read_record(Reader& r, ResourceRecord& rr) {
  std::uint16_t rdlen;
  return r.name(rr.name) && r.u16(rr.type) && r.u16(rr.rclass) && r.u32(rr.ttl) && r.u16(rdlen) &&
         r.bytes(rdlen, rr.rdata);
}

void write_record(const ResourceRecord& rr, std::vector<std::uint8_t>& out) {
  encode_name(rr.name, out);
  put16(out, rr.type);
  put16(out, rr.rclass);
  put32(out, rr.ttl);
  if (rr.rdata.size() > 0xffff)
    throw EncodeError("rdata too long");
  put16(out, static_cast<std::uint16_t>(rr.rdata.size()));
  out.insert(out.end(), rr.rdata.begin(), rr.rdata.end());
}

} // namespace

std::string to_string(Rcode rc) {
  switch (rc) {
  case Rcode::noerror:
    return "NOERROR";
  case Rcode::formerr:
    return "FORMERR";
  case Rcode::servfail:
    return "SERVFAIL";
  case Rcode::nxdomain:
    return "NXDOMAIN";
  case Rcode::notimp:
    return "NOTIMP";
  case Rcode::refused:
    return "REFUSED";
  }
  return fmt::format("RCODE{}", static_cast<int>(rc));
}

std::optional<Rcode> rcode_from_string(std::string_view s) {
  for (int i = 0; i < 16; ++i) {
    auto rc = static_cast<Rcode>(i);
    if (to_string(rc) == s)
      return rc;
  }
  return std::nullopt;
}

std::uint16_t Flags::pack() const {
  return static_cast<std::uint16_t>((qr ? 0x8000 : 0) | ((opcode & 0xf) << 11) | (aa ? 0x0400 : 0) |
                                    (tc ? 0x0200 : 0) | (rd ? 0x0100 : 0) | (ra ? 0x0080 : 0) | (rcode & 0xf));
}

Flags Flags::unpack(std::uint16_t bits) {
  Flags f;
  f.qr = bits & 0x8000;
  f.opcode = static_cast<std::uint8_t>((bits >> 11) & 0xf);
  f.aa = bits & 0x0400;
  f.tc = bits & 0x0200;
  f.rd = bits & 0x0100;
  f.ra = bits & 0x0080;
  f.rcode = static_cast<std::uint8_t>(bits & 0xf);
  return f;
}

void encode_name(std::string_view name, std::vector<std::uint8_t>& out) {
  if (!name.empty() && name.back() == '.')
    name.remove_suffix(1);
  std::size_t wire_len = 1;
  while (!name.empty()) {
    auto dot = name.find('.');
    auto label = name.substr(0, dot);
    if (label.empty() || label.size() > 63)
      throw EncodeError(fmt::format("invalid label '{}'", label));
    wire_len += label.size() + 1;
    if (wire_len > 255)
      throw EncodeError("name exceeds 255 octets");
    out.push_back(static_cast<std::uint8_t>(label.size()));
    out.insert(out.end(), label.begin(), label.end());
    name = dot == std::string_view::npos ? std::string_view{} : name.substr(dot + 1);
  }
  out.push_back(0);
}

std::vector<std::uint8_t> encode(const Message& msg) {
  std::vector<std::uint8_t> out;
  out.reserve(64);
  put16(out, msg.id);
  put16(out, msg.flags.pack());
  put16(out, static_cast<std::uint16_t>(msg.questions.size()));
  put16(out, static_cast<std::uint16_t>(msg.answers.size()));
  put16(out, static_cast<std::uint16_t>(msg.authority.size()));
  put16(out, static_cast<std::uint16_t>(msg.additional.size()));
  for (const auto& q : msg.questions) {
    encode_name(q.name, out);
    put16(out, q.qtype);
    put16(out, q.qclass);
  }
  for (const auto* section : {&msg.answers, &msg.authority, &msg.additional})
    for (const auto& rr : *section)
      write_record(rr, out);
  return out;
}

std::optional<Message> decode(std::span<const std::uint8_t> wire) {
  Reader r(wire);
  Message msg;
  std::uint16_t flags, qd, an, ns, ar;
  if (!r.u16(msg.id) || !r.u16(flags) || !r.u16(qd) || !r.u16(an) || !r.u16(ns) || !r.u16(ar))
    return std::nullopt;
  msg.flags = Flags::unpack(flags);
  // Every question needs at least 5 octets, every record 11; reject counts
  // that cannot fit before allocating.
  if (std::size_t{qd} * 5 + (std::size_t{an} + ns + ar) * 11 > wire.size())
    return std::nullopt;
  msg.questions.resize(qd);
  for (auto& q : msg.questions)
    if (!r.name(q.name) || !r.u16(q.qtype) || !r.u16(q.qclass))
      return std::nullopt;
  msg.answers.resize(an);
  msg.authority.resize(ns);
  msg.additional.resize(ar);
  for (auto* section : {&msg.answers, &msg.authority, &msg.additional})
    for (auto& rr : *section)
      if (!read_record(r, rr))
        return std::nullopt;
  return msg;
}

} // namespace savprobe::dns
