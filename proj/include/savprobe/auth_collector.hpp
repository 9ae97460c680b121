#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "savprobe/domain.hpp"
#include "savprobe/jsonl.hpp"

namespace savprobe {

/// Raw log line `{src, name, ts}` as written by the authoritative server.
struct QueryRecord {
  Ip4 src;
  std::string name;
  double timestamp = 0.0;

  nlohmann::json to_json() const;
  static QueryRecord from_json(const nlohmann::json& j);
  friend bool operator==(const QueryRecord&, const QueryRecord&) = default;
};

class QueryLogSink {
public:
  virtual ~QueryLogSink() = default;
  virtual void append(const QueryRecord& record) = 0;
};

class MemoryQueryLog final : public QueryLogSink {
public:
  void append(const QueryRecord& record) override;
  std::vector<QueryRecord> snapshot() const;
  std::size_t size() const;

private:
  mutable std::mutex mutex_;
  std::vector<QueryRecord> records_;
};

class JsonlQueryLog final : public QueryLogSink {
public:
  explicit JsonlQueryLog(const std::filesystem::path& path, bool append = true, double flush_interval = 1.0)
      : writer_(path, append, flush_interval) {}
  void append(const QueryRecord& record) override { writer_.append(record.to_json()); }
  void flush() { writer_.flush(); }

private:
  JsonlWriter writer_;
};

/// One resolution attempt that reached the collector, with its decoded probe name.
struct QueryObservation {
  Ip4 source;
  ProbeDomain decoded;
  std::string raw_name;
  double timestamp = 0.0;
};

struct ObservationLog {
  std::vector<QueryObservation> observations;
  /// In-zone names that do not decode as probe names. Kept for noise analysis.
  std::vector<QueryRecord> quarantined;
};

/// Decodes every record against `zone`; undecodable ones go to `quarantined`.
ObservationLog decode_records(std::span<const QueryRecord> records, std::string_view zone);

/// Reads a JSONL query log. Malformed lines are counted in `*bad_lines`
/// (when given) and skipped, so a truncated log can still be analyzed.
std::vector<QueryRecord> load_query_log(const std::filesystem::path& path, std::size_t* bad_lines = nullptr);

/// First occurrence per (source address, case-folded name); order kept.
ObservationLog dedup(const ObservationLog& log);

enum class ProxyClass { forwarder, non_forwarder };

/// A resolver that contacts us from the address we probed resolved the name
/// itself; any other source means the query was forwarded.
ProxyClass classify_proxy(const QueryObservation& obs);

struct AuthConfig {
  std::string zone;
  Ip4 answer{192, 0, 2, 1};
  std::uint32_t ttl = 60;
};

struct AuthStats {
  std::atomic<std::uint64_t> logged{0};      ///< A/IN queries inside the zone, all appended to the log
  std::atomic<std::uint64_t> quarantined{0}; ///< of those, names that are not probe names
  std::atomic<std::uint64_t> other_types{0};
  std::atomic<std::uint64_t> refused{0};     ///< outside the zone
  std::atomic<std::uint64_t> malformed{0};
};

/// Authoritative responder for the scan zone. handle() is thread-safe.
class AuthServer {
public:
  /// Throws EncodeError for an invalid zone.
  AuthServer(AuthConfig config, QueryLogSink& log);

  /// Response payload for a query from `src`, or nullopt if the datagram is
  /// dropped (undecodable, or itself a response).
  std::optional<std::vector<std::uint8_t>> handle(Ip4 src, std::span<const std::uint8_t> payload, double timestamp);

  const AuthStats& stats() const { return stats_; }
  const AuthConfig& config() const { return config_; }

private:
  AuthConfig config_;
  QueryLogSink& log_;
  AuthStats stats_;
};

/// Blocking UDP front end for an AuthServer.
class UdpAuthListener {
public:
  /// Binds `bind_addr:port`; port 0 picks an ephemeral port. Throws TransportError.
  UdpAuthListener(AuthServer& server, std::uint16_t port, Ip4 bind_addr = Ip4{});
  ~UdpAuthListener();
  UdpAuthListener(const UdpAuthListener&) = delete;
  UdpAuthListener& operator=(const UdpAuthListener&) = delete;

  std::uint16_t port() const { return port_; }

  /// Serves with `workers` threads until `stop` becomes true.
  void run(const std::atomic<bool>& stop, unsigned workers = 2);

private:
  void worker(const std::atomic<bool>& stop);

  AuthServer& server_;
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

} // namespace savprobe
