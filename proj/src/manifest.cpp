#include "savprobe/manifest.hpp"

#include <chrono>
#include <fstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "savprobe/error.hpp"
#include "savprobe/text_io.hpp"

namespace savprobe {

namespace {

std::string utc_now() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

} // namespace

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw InputError("cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i)
    hex += fmt::format("{:02x}", md[i]);
  return hex;
}

void RunManifest::add_input(const std::filesystem::path& path) { inputs[path.string()] = sha256_file(path); }

void RunManifest::start() { started = utc_now(); }

void RunManifest::finish() { finished = utc_now(); }

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j{{"command", command}, {"seed", seed},         {"zone", zone},
                   {"inputs", inputs},   {"started", started},   {"finished", finished},
                   {"version", version}};
  if (!extra.empty())
    j["extra"] = extra;
  return j;
}

void RunManifest::write(const std::filesystem::path& dir) const {
  write_file(dir / "manifest.json", to_json().dump(2) + "\n");
}

} // namespace savprobe
