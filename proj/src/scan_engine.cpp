#include "savprobe/scan_engine.hpp"

#include <deque>
#include <thread>

#include "savprobe/error.hpp"
#include "savprobe/packet.hpp"

namespace savprobe {

nlohmann::json ScanResponse::to_json() const {
  return {{"queried", queried.to_string()},
          {"responder", responder.to_string()},
          {"rcode", dns::to_string(rcode)},
          {"domain", domain},
          {"ts", round_micros(timestamp)}};
}

ScanResponse ScanResponse::from_json(const nlohmann::json& j) {
  try {
    ScanResponse r;
    r.queried = Ip4::from_string(j.at("queried").get<std::string>());
    r.responder = Ip4::from_string(j.at("responder").get<std::string>());
    auto rc = dns::rcode_from_string(j.at("rcode").get<std::string>());
    if (!rc)
      throw ParseError("unknown rcode");
    r.rcode = *rc;
    r.domain = j.at("domain").get<std::string>();
    r.timestamp = j.at("ts").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad response record: ") + e.what());
  }
}

void MemoryResponseSink::append(const ScanResponse& response) {
  std::lock_guard lock(mutex_);
  responses_.push_back(response);
}

std::vector<ScanResponse> MemoryResponseSink::snapshot() const {
  std::lock_guard lock(mutex_);
  return responses_;
}

std::vector<ScanResponse> load_responses(const std::filesystem::path& path, std::size_t* bad_lines) {
  std::vector<ScanResponse> out;
  std::size_t bad = 0;
  read_jsonl(
      path,
      [&](std::size_t, const nlohmann::json& j) {
        try {
          out.push_back(ScanResponse::from_json(j));
        } catch (const ParseError&) {
          ++bad;
        }
      },
      [&](std::size_t, const std::string&) { ++bad; });
  if (bad_lines)
    *bad_lines = bad;
  return out;
}

nlohmann::json ScanRunReport::to_json() const {
  return {{"pairs", pairs},
          {"sent", sent},
          {"spoofed_sent", spoofed_sent},
          {"unspoofed_sent", unspoofed_sent},
          {"received", received},
          {"accepted", accepted},
          {"parse_rejects", parse_rejects},
          {"unmatched", unmatched},
          {"elapsed", elapsed},
          {"rate_achieved", rate_achieved},
          {"aborted", aborted},
          {"error", error},
          {"resume_cursor", resume_cursor}};
}

namespace {

using PairSource = std::function<std::optional<ProbePair>()>;

struct Counters {
  std::atomic<std::uint64_t> received{0};
  std::atomic<std::uint64_t> accepted{0};
  std::atomic<std::uint64_t> parse_rejects{0};
  std::atomic<std::uint64_t> unmatched{0};
};

void handle_inbound(const Datagram& d, std::string_view zone, const ScanOptions& options, ResponseSink& sink,
                    Counters& counters) {
  ++counters.received;
  auto parsed = parse_dns_response(d.src, d.payload);
  if (!parsed) {
    ++counters.parse_rejects;
    return;
  }
  auto decoded = decode_domain(parsed->question, zone);
  if (!decoded || parsed->txid != probe_txid(options.txid_key, decoded->target, decoded->scan)) {
    ++counters.unmatched;
    return;
  }
  sink.append(ScanResponse{decoded->target, d.src, parsed->rcode, parsed->question, d.timestamp});
  ++counters.accepted;
}

ScanRunReport run(const PairSource& next_pair, double rate, const std::string& zone, Transport& transport,
                  ResponseSink& sink, const ScanOptions& options) {
  Clock& clock = transport.clock();
  const double burst = options.burst > 0 ? options.burst : std::max(1.0, rate / 100.0);
  TokenBucket bucket(rate, burst, clock);
  Counters counters;
  std::atomic<bool> sender_done{false};
  std::atomic<bool> abort_receiver{false};
  std::atomic<double> deadline{0.0};

  std::string receive_error;
  std::exception_ptr receive_failure;
  std::thread receiver([&] {
    try {
      while (!abort_receiver.load()) {
        if (auto d = transport.receive(options.poll_interval)) {
          handle_inbound(*d, zone, options, sink, counters);
          continue;
        }
        if (sender_done.load()) {
          if (clock.now() >= deadline.load())
            break;
          if (!transport.receive_blocks())
            clock.sleep_for(options.poll_interval);
        } else if (!transport.receive_blocks()) {
          std::this_thread::yield();
        }
      }
    } catch (const TransportError& e) {
      receive_error = e.what();
    } catch (...) {
      receive_failure = std::current_exception();
    }
  });

  ScanRunReport report;
  const double start = clock.now();

  struct Pending {
    ProbePair pair;
    double due;
  };
  std::deque<Pending> pending;
  std::uint64_t skipped = 0;

  std::exception_ptr failure;
  try {
    auto send_probe = [&](const ProbePair& pair, bool spoofed) {
      const auto& domain = spoofed ? pair.spoofed_domain : pair.unspoofed_domain;
      auto query = build_query(domain, probe_txid(options.txid_key, pair.target, domain.scan));
      Ip4 src = spoofed ? pair.spoofed_src : options.scanner_ip;
      auto packet = build_raw(src, pair.target, options.source_port, 53, query);
      bucket.acquire();
      transport.send(packet, pair.target);
      ++report.sent;
      ++(spoofed ? report.spoofed_sent : report.unspoofed_sent);
    };

    bool exhausted = false;
    while (!exhausted && skipped < options.resume_from) {
      if (next_pair())
        ++skipped;
      else
        exhausted = true;
    }
    while (true) {
      if (!pending.empty() && (exhausted || pending.front().due <= clock.now())) {
        clock.sleep_until(pending.front().due);
        send_probe(pending.front().pair, false);
        pending.pop_front();
        ++report.pairs;
        continue;
      }
      if (exhausted) {
        if (pending.empty())
          break;
        continue;
      }
      auto pair = next_pair();
      if (!pair) {
        exhausted = true;
        continue;
      }
      send_probe(*pair, true);
      pending.push_back({std::move(*pair), clock.now() + options.pair_gap});
    }
  } catch (const TransportError& e) {
    report.aborted = true;
    report.error = e.what();
  } catch (...) {
    report.aborted = true;
    failure = std::current_exception();
  }
  const double send_end = clock.now();
  report.resume_cursor = skipped + report.pairs;
  deadline.store(send_end + (report.aborted ? 0.0 : options.grace));
  sender_done.store(true);
  if (failure)
    abort_receiver.store(true);
  receiver.join();
  if (failure)
    std::rethrow_exception(failure);
  if (receive_failure)
    std::rethrow_exception(receive_failure);
  if (!receive_error.empty() && !report.aborted) {
    report.aborted = true;
    report.error = receive_error;
  }

  report.received = counters.received;
  report.accepted = counters.accepted;
  report.parse_rejects = counters.parse_rejects;
  report.unmatched = counters.unmatched;
  report.elapsed = clock.now() - start;
  report.rate_achieved = send_end > start ? static_cast<double>(report.sent) / (send_end - start) : 0.0;
  return report;
}

} // namespace

ScanRunReport run_scan(ScheduleStream& schedule, Transport& transport, ResponseSink& sink, const ScanOptions& options) {
  const auto& config = schedule.config();
  return run([&] { return schedule.next(); }, config.rate, normalize_zone(config.zone), transport, sink, options);
}

ScanRunReport run_scan(const Schedule& schedule, const std::string& zone, Transport& transport, ResponseSink& sink,
                       const ScanOptions& options) {
  std::size_t i = 0;
  return run(
      [&]() -> std::optional<ProbePair> {
        if (i >= schedule.pairs.size())
          return std::nullopt;
        return schedule.pairs[i++];
      },
      schedule.rate, normalize_zone(zone), transport, sink, options);
}

std::set<Ip4> detect_open(std::span<const ScanResponse> responses, std::string_view zone) {
  std::set<Ip4> open;
  for (const auto& r : responses) {
    if (r.rcode != dns::Rcode::noerror || r.responder != r.queried)
      continue;
    auto d = decode_domain(r.domain, zone);
    if (d && d->target == r.queried && d->scan.direction == Direction::unspoofed)
      open.insert(r.queried);
  }
  return open;
}

ForwarderFindings detect_misbehaving_forwarders(std::span<const ScanResponse> responses, const AsnMap& asn,
                                                Ip4 scanner_ip, std::string_view zone) {
  ForwarderFindings f;
  const auto scanner_as = asn.lookup(scanner_ip);
  for (const auto& r : responses) {
    if (r.responder == r.queried)
      continue;
    auto d = decode_domain(r.domain, zone);
    if (!d || d->target != r.queried || d->scan.direction != Direction::unspoofed)
      continue;
    if (r.responder.is_private()) {
      ++f.private_responders;
      continue;
    }
    auto fwd_as = asn.lookup(r.queried);
    auto resp_as = asn.lookup(r.responder);
    if (!fwd_as || !resp_as || !scanner_as) {
      ++f.unknown_as;
      continue;
    }
    if (*fwd_as == *resp_as || *fwd_as == *scanner_as || *resp_as == *scanner_as) {
      ++f.same_as;
      continue;
    }
    f.misbehaving.emplace(r.queried, r.responder);
  }
  return f;
}

} // namespace savprobe
