#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "savprobe/asn_map.hpp"
#include "savprobe/dns.hpp"
#include "savprobe/jsonl.hpp"
#include "savprobe/target_plan.hpp"
#include "savprobe/transport.hpp"

namespace savprobe {

/// A DNS response seen by the scanner. `queried` comes from the hex label of
/// the echoed question, never from the source address.
struct ScanResponse {
  Ip4 queried;
  Ip4 responder;
  dns::Rcode rcode = dns::Rcode::noerror;
  std::string domain;
  double timestamp = 0.0;

  nlohmann::json to_json() const;
  /// Throws ParseError on missing or malformed fields.
  static ScanResponse from_json(const nlohmann::json& j);
  friend bool operator==(const ScanResponse&, const ScanResponse&) = default;
};

class ResponseSink {
public:
  virtual ~ResponseSink() = default;
  virtual void append(const ScanResponse& response) = 0;
};

class MemoryResponseSink final : public ResponseSink {
public:
  void append(const ScanResponse& response) override;
  std::vector<ScanResponse> snapshot() const;

private:
  mutable std::mutex mutex_;
  std::vector<ScanResponse> responses_;
};

/// JSONL sink `{queried, responder, rcode, domain, ts}`.
class JsonlResponseSink final : public ResponseSink {
public:
  explicit JsonlResponseSink(const std::filesystem::path& path, bool append = false) : writer_(path, append) {}
  void append(const ScanResponse& response) override { writer_.append(response.to_json()); }
  void flush() { writer_.flush(); }

private:
  JsonlWriter writer_;
};

/// Unreadable lines are skipped and counted in `bad_lines`.
std::vector<ScanResponse> load_responses(const std::filesystem::path& path, std::size_t* bad_lines = nullptr);

struct ScanOptions {
  Ip4 scanner_ip;
  std::uint16_t source_port = 53053;
  std::uint64_t txid_key = 0;
  double pair_gap = 0.050;     ///< seconds between the spoofed and unspoofed twin
  double grace = 60.0;         ///< keep listening this long after the last send
  double burst = 0.0;          ///< token bucket depth; 0 means rate/100 (at least 1)
  double poll_interval = 0.05; ///< receiver wait granularity
  std::uint64_t resume_from = 0; ///< skip this many pairs (resume cursor)
};

struct ScanRunReport {
  std::uint64_t pairs = 0;          ///< pairs fully sent (both twins) in this run
  std::uint64_t sent = 0;
  std::uint64_t spoofed_sent = 0;
  std::uint64_t unspoofed_sent = 0;
  std::uint64_t received = 0;
  std::uint64_t accepted = 0;
  std::uint64_t parse_rejects = 0;  ///< not a DNS response at all
  std::uint64_t unmatched = 0;      ///< foreign name or wrong txid
  double elapsed = 0.0;
  double rate_achieved = 0.0;       ///< packets per second over the send phase
  bool aborted = false;
  std::string error;
  std::uint64_t resume_cursor = 0;  ///< pass as resume_from to continue

  nlohmann::json to_json() const;
};

/// Sends every pair (spoofed first, unspoofed `pair_gap` later) through
/// `transport` at the schedule's rate while a receiver thread matches
/// inbound responses statelessly and appends them to `sink`. No packet is
/// retransmitted. A TransportError stops sending and is reported through
/// `aborted`/`resume_cursor`; everything already in the sink stays there.
ScanRunReport run_scan(ScheduleStream& schedule, Transport& transport, ResponseSink& sink, const ScanOptions& options);

/// Same, over a materialized schedule.
ScanRunReport run_scan(const Schedule& schedule, const std::string& zone, Transport& transport, ResponseSink& sink,
                       const ScanOptions& options);

/// Queried addresses that answered NOERROR from their own address to an
/// unspoofed probe. Answer content is not checked.
std::set<Ip4> detect_open(std::span<const ScanResponse> responses, std::string_view zone);

struct ForwarderFindings {
  std::set<std::pair<Ip4, Ip4>> misbehaving; ///< (forwarder = queried, upstream = responder)
  std::uint64_t private_responders = 0;     ///< responses from RFC 1918 space (NAT misconfiguration)
  std::uint64_t same_as = 0;                ///< two of the three ASes coincide
  std::uint64_t unknown_as = 0;             ///< some address has no origin AS
};

/// Responses whose source differs from the queried address, kept only when
/// the forwarder, the responder and the scanner sit in three different ASes.
ForwarderFindings detect_misbehaving_forwarders(std::span<const ScanResponse> responses, const AsnMap& asn,
                                                Ip4 scanner_ip, std::string_view zone);

} // namespace savprobe
