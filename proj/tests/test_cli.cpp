#include <doctest.h>

#include <sys/wait.h>

#include <fstream>
#include <set>

#include "fixtures.hpp"
#include "savprobe/text_io.hpp"

namespace fs = std::filesystem;

namespace {

const std::string zone = "sim.savprobe.test";

int run(const std::string& args, const fs::path& log) {
  std::string cmd = std::string(SAVPROBE_BIN) + " " + args + " >" + (log.string() + ".out") + " 2>" +
                    (log.string() + ".err");
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string csv_column_pairs(const fs::path& path) {
  std::ifstream in(path);
  std::string line, out;
  std::getline(in, line);
  while (std::getline(in, line)) {
    auto first = line.find(',');
    auto second = line.find(',', first + 1);
    out += line.substr(0, second) + "\n";
  }
  return out;
}

fs::path topology_file(const fs::path& dir, std::size_t networks, std::uint64_t seed) {
  auto path = dir / "topology.json";
  std::ofstream(path) << fixtures::mixed_topology(networks, seed).to_json().dump(1);
  return path;
}

std::set<std::string> files_in(const fs::path& dir) {
  std::set<std::string> names;
  for (const auto& e : fs::directory_iterator(dir))
    names.insert(e.path().filename().string());
  return names;
}

} // namespace

TEST_CASE("simulate then analyze matches ground truth") {
  auto dir = fixtures::temp_dir("cli_e2e");
  auto topo = topology_file(dir, 120, 7);
  auto sim = dir / "sim";
  auto an = dir / "an";
  REQUIRE(run("simulate --topology " + topo.string() + " --seed 3 --out " + sim.string(), dir / "simulate") == 0);
  CHECK(files_in(sim) == std::set<std::string>{"asn.csv", "auth.jsonl", "bgp.txt", "ground_truth.csv",
                                               "manifest.json", "responses.jsonl", "scan_report.json"});
  REQUIRE(run("analyze --zone " + zone + " --auth-log " + (sim / "auth.jsonl").string() + " --responses " +
                  (sim / "responses.jsonl").string() + " --bgp " + (sim / "bgp.txt").string() + " --asn " +
                  (sim / "asn.csv").string() + " --scanner-ip 198.18.0.10 --out " + an.string(),
              dir / "analyze") == 0);
  auto truth = savprobe::read_file(sim / "ground_truth.csv");
  auto got = csv_column_pairs(an / "verdicts_slash24.csv");
  CHECK(truth.substr(truth.find('\n') + 1) == got);
  CHECK(!got.empty());
  for (const char* f : {"verdicts_prefix.csv", "verdicts_asn.csv", "resolvers.csv", "outbound.csv",
                        "misbehaving_forwarders.csv", "cross_tab.json", "diagnostics.json", "rescan.txt",
                        "manifest.json"})
    CHECK_MESSAGE(fs::exists(an / f), f);

  auto manifest = nlohmann::json::parse(savprobe::read_file(an / "manifest.json"));
  CHECK(manifest["command"] == "analyze");
  CHECK(manifest["inputs"].size() >= 4);

  SUBCASE("report") {
    auto geo = dir / "geo.csv";
    std::ofstream(geo) << "start_ip,end_ip,country\n20.0.0.0,20.0.63.255,AA\n20.0.64.0,20.255.255.255,BB\n";
    auto rep = dir / "rep";
    REQUIRE(run("report --verdicts " + an.string() + " --geo " + geo.string() + " --asn " + (sim / "asn.csv").string() +
                    " --bgp " + (sim / "bgp.txt").string() + " --out " + rep.string(),
                dir / "report") == 0);
    auto countries = savprobe::read_file(rep / "country_stats.csv");
    CHECK(countries.rfind("country,resolvers,vulnerable_slash24,total_slash24,fraction\n", 0) == 0);
    CHECK(countries.find("\nAA,") != std::string::npos);
    CHECK(savprobe::read_file(rep / "as_size_cdf.csv").find("\nS,") != std::string::npos);
    CHECK(fs::exists(rep / "prefix_size_cdf.csv"));
  }

  SUBCASE("replay is byte-identical apart from the manifest") {
    auto sim2 = dir / "sim2";
    auto an2 = dir / "an2";
    REQUIRE(run("simulate --topology " + topo.string() + " --seed 3 --out " + sim2.string(), dir / "simulate2") == 0);
    REQUIRE(run("analyze --zone " + zone + " --auth-log " + (sim2 / "auth.jsonl").string() + " --responses " +
                    (sim2 / "responses.jsonl").string() + " --bgp " + (sim2 / "bgp.txt").string() + " --asn " +
                    (sim2 / "asn.csv").string() + " --scanner-ip 198.18.0.10 --out " + an2.string(),
                dir / "analyze2") == 0);
    for (auto [a, b] : {std::pair(sim, sim2), std::pair(an, an2)})
      for (const auto& name : files_in(a))
        if (name != "manifest.json")
          CHECK_MESSAGE(savprobe::read_file(a / name) == savprobe::read_file(b / name), name);
  }
}

TEST_CASE("dry run prints the schedule and sends nothing") {
  auto dir = fixtures::temp_dir("cli_dry");
  std::ofstream(dir / "bgp.txt") << "20.0.0.0/24\n20.0.1.0/25\n";
  auto out = dir / "scan";
  REQUIRE(run("scan --zone z.example --bgp " + (dir / "bgp.txt").string() + " --seed 9 --dry-run --out " +
                  out.string(),
              dir / "dry") == 0);
  std::ifstream in(dir / "dry.out");
  std::string line;
  std::getline(in, line);
  CHECK(line == "target,spoofed_src,spoofed_domain,unspoofed_domain");
  std::size_t rows = 0;
  while (std::getline(in, line))
    ++rows;
  CHECK(rows == 254 + 126);
  CHECK_FALSE(fs::exists(out / "responses.jsonl"));
}

TEST_CASE("empty collector log gives no S verdicts") {
  auto dir = fixtures::temp_dir("cli_empty");
  auto topo = topology_file(dir, 40, 2);
  auto sim = dir / "sim";
  REQUIRE(run("simulate --topology " + topo.string() + " --seed 1 --out " + sim.string(), dir / "simulate") == 0);
  std::ofstream(dir / "empty.jsonl");
  auto an = dir / "an";
  REQUIRE(run("analyze --zone " + zone + " --auth-log " + (dir / "empty.jsonl").string() + " --responses " +
                  (sim / "responses.jsonl").string() + " --out " + an.string(),
              dir / "analyze") == 0);
  auto verdicts = csv_column_pairs(an / "verdicts_slash24.csv");
  CHECK(!verdicts.empty());
  CHECK(verdicts.find(",S\n") == std::string::npos);
  CHECK(verdicts.find(",I\n") == std::string::npos);
}

TEST_CASE("exit codes") {
  auto dir = fixtures::temp_dir("cli_exit");
  std::ofstream(dir / "bgp.txt") << "20.0.0.0/24\n";
  std::ofstream(dir / "bad_bgp.txt") << "20.0.0.0/24\nnot a prefix\n";
  std::ofstream(dir / "bad_topology.json") << "{\"networks\": 5";

  CHECK(run("", dir / "none") == 2);
  CHECK(run("frobnicate", dir / "unknown") == 2);
  CHECK(run("scan --bgp " + (dir / "bgp.txt").string(), dir / "nozone") == 2);
  CHECK(run("scan --zone z.example --transport raw --bgp " + (dir / "bgp.txt").string() + " --out " +
                (dir / "raw").string(),
            dir / "ethics") == 2);
  CHECK(run("scan --zone z.example --dry-run --bgp " + (dir / "bad_bgp.txt").string(), dir / "badbgp") == 3);
  CHECK(run("simulate --topology " + (dir / "bad_topology.json").string() + " --out " + (dir / "s").string(),
            dir / "badtopo") == 3);
  CHECK(run("serve --zone z.example --log " + (dir / "auth.jsonl").string() + " --bind 192.0.2.1 --port 0",
            dir / "bind") == 4);
}

TEST_CASE("serve runs for a bounded duration") {
  auto dir = fixtures::temp_dir("cli_serve");
  CHECK(run("serve --zone z.example --log " + (dir / "auth.jsonl").string() +
                " --bind 127.0.0.1 --port 0 --duration 0.3",
            dir / "serve") == 0);
  CHECK(fs::exists(dir / "manifest.json"));
}
