#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "savprobe/error.hpp"
#include "savprobe/geo_report.hpp"
#include "savprobe/manifest.hpp"
#include "savprobe/pipeline.hpp"
#include "savprobe/raw_transport.hpp"
#include "savprobe/text_io.hpp"

namespace fs = std::filesystem;
using namespace savprobe;

namespace {

constexpr int exit_usage = 2;
constexpr int exit_parse = 3;
constexpr int exit_transport = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::atomic<bool> stop_requested{false};

void on_signal(int) { stop_requested.store(true); }

void warn(const std::string& msg) { std::cerr << "savprobe: warning: " << msg << "\n"; }

fs::path prepare_dir(const fs::path& dir) {
  fs::create_directories(dir);
  return dir;
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_file(path, j.dump(2) + "\n"); }

RoutingTable load_bgp(const fs::path& path) {
  RoutingTable::LoadStats stats;
  auto table = RoutingTable::load(path, &stats);
  if (stats.default_routes)
    warn(fmt::format("{}: skipped {} default route(s)", path.string(), stats.default_routes));
  return table;
}

void write_responses(const fs::path& path, std::span<const ScanResponse> responses) {
  JsonlResponseSink sink(path);
  for (const auto& r : responses)
    sink.append(r);
  sink.flush();
}

void write_auth_log(const fs::path& path, std::span<const QueryRecord> records) {
  JsonlQueryLog log(path, false);
  for (const auto& r : records)
    log.append(r);
  log.flush();
}

// ---------------------------------------------------------------------------

struct ScanArgs {
  std::string bgp, exclude, zone, transport = "raw", topology, out = ".", scanner_ip;
  std::uint64_t seed = 0, resume_from = 0;
  double rate = 10000, grace = 60, pair_gap = 0.05;
  std::uint32_t sequence = 1;
  std::uint16_t port = 53053;
  bool dry_run = false, ethics = false;
};

int cmd_scan(const ScanArgs& a) {
  RunManifest manifest;
  manifest.command = "scan";
  manifest.seed = a.seed;
  manifest.zone = normalize_zone(a.zone);
  manifest.start();

  std::optional<SimTopology> topology;
  if (a.transport == "sim") {
    if (a.topology.empty())
      throw UsageError("--transport sim requires --topology");
    topology = SimTopology::load(a.topology);
    manifest.add_input(a.topology);
  }
  if (a.bgp.empty() && !topology)
    throw UsageError("--bgp is required");
  RoutingTable table = a.bgp.empty() ? topology->routing_table() : load_bgp(a.bgp);
  if (!a.bgp.empty())
    manifest.add_input(a.bgp);
  ExclusionList exclusions;
  if (!a.exclude.empty()) {
    exclusions = ExclusionList::load(a.exclude);
    manifest.add_input(a.exclude);
  }
  ScheduleConfig config{manifest.zone, a.seed, a.rate, a.sequence};

  if (a.dry_run) {
    ScheduleStream stream(table, exclusions, config);
    write_schedule_csv_header(std::cout);
    while (auto pair = stream.next())
      write_schedule_csv_row(std::cout, *pair);
    std::cout.flush();
    if (stream.adjacency_conflicts())
      warn(fmt::format("{} unavoidable same-/24 adjacencies", stream.adjacency_conflicts()));
    return 0;
  }

  ScanOptions options;
  options.source_port = a.port;
  options.txid_key = mix64(a.seed, 0x7478);
  options.grace = a.grace;
  options.pair_gap = a.pair_gap;
  options.resume_from = a.resume_from;

  const fs::path out = prepare_dir(a.out);
  ScanRunReport report;
  ScheduleStream stream(table, exclusions, config);
  if (a.transport == "raw") {
    if (!a.ethics || a.exclude.empty())
      throw UsageError("scanning real networks requires --i-understand-ethics and --exclude FILE (may be empty)");
    if (a.scanner_ip.empty())
      throw UsageError("--transport raw requires --scanner-ip");
    options.scanner_ip = Ip4::from_string(a.scanner_ip);
    RawTransport transport(options.scanner_ip, options.source_port);
    JsonlResponseSink sink(out / "responses.jsonl", options.resume_from > 0);
    report = run_scan(stream, transport, sink, options);
    sink.flush();
  } else {
    MemoryQueryLog log;
    AuthServer auth(AuthConfig{manifest.zone}, log);
    SimTransport transport(*topology, auth, mix64(a.seed, a.sequence));
    options.scanner_ip = topology->scanner_ip;
    options.grace = std::min(options.grace, 1.0);
    options.poll_interval = 0.01;
    JsonlResponseSink sink(out / "responses.jsonl", options.resume_from > 0);
    report = run_scan(stream, transport, sink, options);
    sink.flush();
    write_auth_log(out / "auth.jsonl", log.snapshot());
  }
  write_json(out / "scan_report.json", report.to_json());
  manifest.extra = {{"transport", a.transport}, {"rate", a.rate}, {"scan_sequence", a.sequence}};
  manifest.finish();
  manifest.write(out);
  if (report.aborted) {
    std::cerr << "savprobe: scan aborted: " << report.error << "; resume with --resume-from " << report.resume_cursor
              << "\n";
    return exit_transport;
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct ServeArgs {
  std::string zone, answer = "192.0.2.1", log, bind = "0.0.0.0";
  std::uint16_t port = 53;
  unsigned workers = 2;
  double duration = 0;
};

int cmd_serve(const ServeArgs& a) {
  RunManifest manifest;
  manifest.command = "serve";
  manifest.zone = normalize_zone(a.zone);
  manifest.start();
  const fs::path log_path = a.log;
  if (log_path.has_parent_path())
    prepare_dir(log_path.parent_path());
  JsonlQueryLog log(log_path);
  AuthServer server(AuthConfig{manifest.zone, Ip4::from_string(a.answer)}, log);
  UdpAuthListener listener(server, a.port, Ip4::from_string(a.bind));
  std::cerr << "savprobe: serving " << manifest.zone << " on udp/" << listener.port() << "\n";
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::thread timer;
  if (a.duration > 0)
    timer = std::thread([&] {
      auto until = std::chrono::steady_clock::now() + std::chrono::duration<double>(a.duration);
      while (!stop_requested.load() && std::chrono::steady_clock::now() < until)
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
      stop_requested.store(true);
    });
  listener.run(stop_requested, a.workers);
  if (timer.joinable())
    timer.join();
  log.flush();
  const auto& s = server.stats();
  manifest.extra = {{"port", listener.port()},
                    {"logged", s.logged.load()},
                    {"quarantined", s.quarantined.load()},
                    {"refused", s.refused.load()},
                    {"other_types", s.other_types.load()},
                    {"malformed", s.malformed.load()}};
  manifest.finish();
  manifest.write(log_path.has_parent_path() ? log_path.parent_path() : fs::path("."));
  return 0;
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  std::vector<std::string> auth_logs, responses;
  std::string zone, bgp, asn, spoofer, exclude, scanner_ip, out = ".";
};

void write_resolvers_csv(const fs::path& path, std::span<const ResolverRecord> records) {
  std::ofstream out(path);
  out << "ip,proxy,openness\n";
  for (const auto& r : records)
    out << r.ip.to_string() << ',' << (r.proxy == ProxyClass::forwarder ? "forwarder" : "non-forwarder") << ','
        << (r.openness == Openness::open ? "open" : "closed") << '\n';
}

void write_outbound_csv(const fs::path& path, const OutboundResult& outbound) {
  std::ofstream out(path);
  out << "slash24,verdict\n";
  for (const auto& [block, v] : outbound.per_slash24)
    out << block.to_string() << ',' << to_string(v) << '\n';
}

void write_misbehaving_csv(const fs::path& path, const ForwarderFindings& f) {
  std::ofstream out(path);
  out << "forwarder,responder\n";
  for (const auto& [fwd, resp] : f.misbehaving)
    out << fwd.to_string() << ',' << resp.to_string() << '\n';
}

int cmd_analyze(const AnalyzeArgs& a) {
  RunManifest manifest;
  manifest.command = "analyze";
  manifest.zone = normalize_zone(a.zone);
  manifest.start();

  // Several runs are merged by taking the union of their logs.
  std::vector<QueryRecord> records;
  std::vector<ScanResponse> responses;
  for (const auto& path : a.auth_logs) {
    std::size_t bad = 0;
    auto part = load_query_log(path, &bad);
    records.insert(records.end(), part.begin(), part.end());
    manifest.add_input(path);
    if (bad)
      warn(fmt::format("{}: skipped {} unreadable line(s)", path, bad));
  }
  for (const auto& path : a.responses) {
    std::size_t bad = 0;
    auto part = load_responses(path, &bad);
    responses.insert(responses.end(), part.begin(), part.end());
    manifest.add_input(path);
    if (bad)
      warn(fmt::format("{}: skipped {} unreadable line(s)", path, bad));
  }

  AnalysisInput in;
  in.zone = manifest.zone;
  in.run = run_data(records, responses, manifest.zone);
  in.responses = responses;
  std::optional<RoutingTable> table;
  std::optional<AsnMap> asn;
  std::optional<ExclusionList> exclusions;
  if (!a.bgp.empty()) {
    table = load_bgp(a.bgp);
    in.table = &*table;
    manifest.add_input(a.bgp);
  }
  if (!a.asn.empty()) {
    asn = AsnMap::load(a.asn);
    in.asn = &*asn;
    manifest.add_input(a.asn);
    if (a.scanner_ip.empty())
      throw UsageError("--asn requires --scanner-ip for forwarder classification");
    in.scanner_ip = Ip4::from_string(a.scanner_ip);
  }
  if (!a.exclude.empty()) {
    exclusions = ExclusionList::load(a.exclude);
    in.exclusions = &*exclusions;
    manifest.add_input(a.exclude);
  }
  if (!a.spoofer.empty()) {
    in.spoofer = ingest_spoofer(load_spoofer_csv(a.spoofer));
    manifest.add_input(a.spoofer);
  }
  if (in.run.spoofed.quarantined.size())
    warn(fmt::format("{} collector name(s) quarantined", in.run.spoofed.quarantined.size()));

  const Analysis result = analyze(in);
  const fs::path out = prepare_dir(a.out);
  write_verdicts_csv(result.slash24, out);
  if (table)
    write_verdicts_csv(result.prefix, out);
  if (asn)
    write_verdicts_csv(result.asn, out);
  write_resolvers_csv(out / "resolvers.csv", result.resolvers);
  write_outbound_csv(out / "outbound.csv", result.outbound);
  write_misbehaving_csv(out / "misbehaving_forwarders.csv", result.forwarders);
  write_json(out / "cross_tab.json", result.cross.to_json());
  {
    std::ofstream rescan(out / "rescan.txt");
    const auto targets = rescan_targets(result.slash24);
    for (const auto& p : targets.entries())
      rescan << p.to_string() << '\n';
  }
  write_json(out / "diagnostics.json", result.diagnostics());
  manifest.finish();
  manifest.write(out);
  return 0;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string topology, targets, zone = "sim.savprobe.test", out = ".";
  std::uint64_t seed = 0;
  std::uint32_t sequence = 1;
};

int cmd_simulate(const SimulateArgs& a) {
  RunManifest manifest;
  manifest.command = "simulate";
  manifest.seed = a.seed;
  manifest.zone = normalize_zone(a.zone);
  manifest.start();
  const SimTopology topology = SimTopology::load(a.topology);
  manifest.add_input(a.topology);

  std::optional<RoutingTable> targets;
  if (!a.targets.empty()) {
    targets = load_bgp(a.targets);
    manifest.add_input(a.targets);
  }
  const SimScanResult run =
      simulate_scan(topology, manifest.zone, a.seed, a.sequence, targets ? &*targets : nullptr);
  const fs::path out = prepare_dir(a.out);
  write_responses(out / "responses.jsonl", run.responses);
  write_auth_log(out / "auth.jsonl", run.auth_log);

  {
    std::ofstream bgp(out / "bgp.txt");
    const auto routed = topology.routing_table();
    for (const auto& p : routed.entries())
      bgp << p.to_string() << '\n';
    std::ofstream asn(out / "asn.csv");
    asn << "prefix,asn\n";
    asn << topology.scanner_net.prefix.to_string() << ',' << topology.scanner_net.asn.value << '\n';
    for (const auto& n : topology.networks)
      asn << n.prefix.to_string() << ',' << n.asn.value << '\n';
  }
  {
    const GroundTruth gt = ground_truth(topology);
    std::ofstream truth(out / "ground_truth.csv");
    truth << "slash24,verdict\n";
    for (const auto& [block, v] : gt.per_slash24)
      truth << block.to_string() << ',' << to_string(v) << '\n';
  }
  nlohmann::json events = nlohmann::json::object();
  for (const auto& [k, n] : run.events)
    events[to_string(k)] = n;
  write_json(out / "scan_report.json", {{"scan", run.report.to_json()},
                                        {"scheduled", run.scheduled},
                                        {"adjacency_conflicts", run.adjacency_conflicts},
                                        {"unspoofable", run.unspoofable},
                                        {"events", events}});
  manifest.extra = {{"scanner_ip", topology.scanner_ip.to_string()}, {"scan_sequence", a.sequence}};
  manifest.finish();
  manifest.write(out);
  return 0;
}

// ---------------------------------------------------------------------------

struct ReportArgs {
  std::string verdicts, geo, asn, bgp, resolvers, out = ".";
};

int cmd_report(const ReportArgs& a) {
  RunManifest manifest;
  manifest.command = "report";
  manifest.start();
  const fs::path dir = a.verdicts;
  auto slash24_path = dir / "verdicts_slash24.csv";
  const VerdictTable slash24 = read_verdicts_csv(slash24_path, Granularity::slash24);
  manifest.add_input(slash24_path);

  VerdictTable prefix{Granularity::prefix, {}, 0};
  VerdictTable asn_table{Granularity::asn, {}, 0};
  if (fs::exists(dir / "verdicts_prefix.csv")) {
    prefix = read_verdicts_csv(dir / "verdicts_prefix.csv", Granularity::prefix);
    manifest.add_input(dir / "verdicts_prefix.csv");
  }
  if (fs::exists(dir / "verdicts_asn.csv")) {
    asn_table = read_verdicts_csv(dir / "verdicts_asn.csv", Granularity::asn);
    manifest.add_input(dir / "verdicts_asn.csv");
  }

  const GeoMap geo = GeoMap::load(a.geo);
  manifest.add_input(a.geo);
  AsnMap asn;
  if (!a.asn.empty()) {
    asn = AsnMap::load(a.asn);
    manifest.add_input(a.asn);
  }
  RoutingTable universe;
  if (!a.bgp.empty()) {
    universe = load_bgp(a.bgp);
    manifest.add_input(a.bgp);
  }
  std::vector<Ip4> resolvers;
  fs::path resolvers_path = a.resolvers.empty() ? dir / "resolvers.csv" : fs::path(a.resolvers);
  if (fs::exists(resolvers_path)) {
    for_each_record(resolvers_path, [&](std::size_t, std::string_view line) {
      auto fields = split_csv(line);
      if (fields.empty() || fields[0] == "ip")
        return;
      resolvers.push_back(Ip4::from_string(std::string(fields[0])));
    });
    manifest.add_input(resolvers_path);
  }

  const CountryReport stats = country_stats(slash24, resolvers, geo, universe);
  const fs::path out = prepare_dir(a.out);
  emit_reports(stats, as_size_cdf(asn_table, asn), prefix_size_cdf(prefix), out);
  if (stats.majority_ties)
    warn(fmt::format("{} /24(s) tied between countries", stats.majority_ties));
  manifest.extra = {{"unlocated_slash24", stats.unlocated_slash24}, {"majority_ties", stats.majority_ties}};
  manifest.finish();
  manifest.write(out);
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inbound source address validation measurement via spoofed DNS probes"};
  app.require_subcommand(1);
  app.set_version_flag("--version", tool_version);

  ScanArgs scan;
  auto* s = app.add_subcommand("scan", "Send spoofed/unspoofed probe pairs to every routed host");
  s->add_option("--bgp", scan.bgp, "BGP prefix list")->check(CLI::ExistingFile);
  s->add_option("--exclude", scan.exclude, "Exclusion list (CIDR per line)")->check(CLI::ExistingFile);
  s->add_option("--zone", scan.zone, "Probe zone")->required();
  s->add_option("--seed", scan.seed, "Schedule seed");
  s->add_option("--rate", scan.rate, "Packets per second")->check(CLI::PositiveNumber);
  s->add_option("--transport", scan.transport, "raw or sim")->check(CLI::IsMember({"raw", "sim"}));
  s->add_option("--topology", scan.topology, "Topology for --transport sim")->check(CLI::ExistingFile);
  s->add_option("--scanner-ip", scan.scanner_ip, "Scanner source address (raw)");
  s->add_option("--port", scan.port, "Scanner source port");
  s->add_option("--sequence", scan.sequence, "Scan sequence number")->check(CLI::PositiveNumber);
  s->add_option("--grace", scan.grace, "Seconds to listen after the last send")->check(CLI::NonNegativeNumber);
  s->add_option("--pair-gap", scan.pair_gap, "Seconds between the twins of a pair")->check(CLI::NonNegativeNumber);
  s->add_option("--resume-from", scan.resume_from, "Skip this many pairs");
  s->add_option("--out", scan.out, "Output directory");
  s->add_flag("--dry-run", scan.dry_run, "Print the schedule as CSV and send nothing");
  s->add_flag("--i-understand-ethics", scan.ethics, "Acknowledge probing third-party networks");

  ServeArgs serve;
  auto* sv = app.add_subcommand("serve", "Authoritative server for the probe zone");
  sv->add_option("--zone", serve.zone)->required();
  sv->add_option("--answer", serve.answer, "A record returned for probe names");
  sv->add_option("--log", serve.log, "Query log (JSONL)")->required();
  sv->add_option("--port", serve.port);
  sv->add_option("--bind", serve.bind);
  sv->add_option("--workers", serve.workers)->check(CLI::PositiveNumber);
  sv->add_option("--duration", serve.duration, "Stop after this many seconds (0: until signalled)");

  AnalyzeArgs analyze_args;
  auto* an = app.add_subcommand("analyze", "Derive verdicts from collector and scan logs");
  an->add_option("--zone", analyze_args.zone)->required();
  an->add_option("--auth-log", analyze_args.auth_logs, "Collector log(s); repeat to merge runs")
      ->required()
      ->check(CLI::ExistingFile);
  an->add_option("--responses", analyze_args.responses, "Scan response log(s)")->check(CLI::ExistingFile);
  an->add_option("--bgp", analyze_args.bgp)->check(CLI::ExistingFile);
  an->add_option("--asn", analyze_args.asn)->check(CLI::ExistingFile);
  an->add_option("--spoofer", analyze_args.spoofer, "Spoofer CSV slash24,state,timestamp")->check(CLI::ExistingFile);
  an->add_option("--exclude", analyze_args.exclude)->check(CLI::ExistingFile);
  an->add_option("--scanner-ip", analyze_args.scanner_ip);
  an->add_option("--out", analyze_args.out);

  SimulateArgs sim;
  auto* sm = app.add_subcommand("simulate", "Scan a simulated topology and write logs plus ground truth");
  sm->add_option("--topology", sim.topology)->required()->check(CLI::ExistingFile);
  sm->add_option("--seed", sim.seed);
  sm->add_option("--zone", sim.zone);
  sm->add_option("--targets", sim.targets, "Restrict the scan to these prefixes (e.g. rescan.txt)")
      ->check(CLI::ExistingFile);
  sm->add_option("--sequence", sim.sequence)->check(CLI::PositiveNumber);
  sm->add_option("--out", sim.out);

  ReportArgs report;
  auto* rp = app.add_subcommand("report", "Country statistics and size CDFs from verdict tables");
  rp->add_option("--verdicts", report.verdicts, "Directory written by analyze")->required()->check(CLI::ExistingDirectory);
  rp->add_option("--geo", report.geo, "CSV start_ip,end_ip,country")->required()->check(CLI::ExistingFile);
  rp->add_option("--asn", report.asn)->check(CLI::ExistingFile);
  rp->add_option("--bgp", report.bgp)->check(CLI::ExistingFile);
  rp->add_option("--resolvers", report.resolvers)->check(CLI::ExistingFile);
  rp->add_option("--out", report.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : exit_usage;
  }

  try {
    if (*s)
      return cmd_scan(scan);
    if (*sv)
      return cmd_serve(serve);
    if (*an)
      return cmd_analyze(analyze_args);
    if (*sm)
      return cmd_simulate(sim);
    if (*rp)
      return cmd_report(report);
  } catch (const UsageError& e) {
    std::cerr << "savprobe: " << e.what() << "\n";
    return exit_usage;
  } catch (const ParseError& e) {
    std::cerr << "savprobe: " << e.what() << "\n";
    return exit_parse;
  } catch (const InputError& e) {
    std::cerr << "savprobe: " << e.what() << "\n";
    return exit_parse;
  } catch (const EncodeError& e) {
    std::cerr << "savprobe: " << e.what() << "\n";
    return exit_usage;
  } catch (const TransportError& e) {
    std::cerr << "savprobe: " << e.what() << "\n";
    return exit_transport;
  }
  return exit_usage;
}
