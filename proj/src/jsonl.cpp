#include "savprobe/jsonl.hpp"

#include <chrono>
#include <cmath>

#include "savprobe/error.hpp"
#include "savprobe/text_io.hpp"

namespace savprobe {

namespace {

double wall_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

} // namespace

JsonlWriter::JsonlWriter(const std::filesystem::path& path, bool append, double flush_interval)
    : out_(path, append ? std::ios::app : std::ios::trunc), flush_interval_(flush_interval),
      last_flush_(wall_seconds()) {
  if (!out_)
    throw InputError("cannot open " + path.string() + " for writing");
}

JsonlWriter::~JsonlWriter() { flush(); }

void JsonlWriter::append(const nlohmann::json& record) {
  std::string line = record.dump();
  line.push_back('\n');
  std::lock_guard lock(mutex_);
  out_ << line;
  ++count_;
  double now = wall_seconds();
  if (now - last_flush_ >= flush_interval_) {
    out_.flush();
    last_flush_ = now;
  }
}

void JsonlWriter::flush() {
  std::lock_guard lock(mutex_);
  out_.flush();
  last_flush_ = wall_seconds();
}

std::size_t JsonlWriter::count() const {
  std::lock_guard lock(mutex_);
  return count_;
}

void read_jsonl(const std::filesystem::path& path, const std::function<void(std::size_t, const nlohmann::json&)>& fn,
                const std::function<void(std::size_t, const std::string&)>& on_bad) {
  std::ifstream in(path);
  if (!in)
    throw ParseError("cannot open " + path.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty())
      continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      if (on_bad) {
        on_bad(n, line);
        continue;
      }
      throw ParseError(path.string(), n, "invalid JSON record");
    }
    fn(n, j);
  }
}

double round_micros(double seconds) { return std::round(seconds * 1e6) / 1e6; }

} // namespace savprobe
