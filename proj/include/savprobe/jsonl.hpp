#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>

#include <json.hpp>

namespace savprobe {

/// Append-only JSON-lines file. append() is safe from many threads; each
/// record is written whole under a lock. Flushes at most every
/// `flush_interval` seconds, and always on flush()/destruction.
class JsonlWriter {
public:
  explicit JsonlWriter(const std::filesystem::path& path, bool append = false, double flush_interval = 1.0);
  ~JsonlWriter();
  JsonlWriter(const JsonlWriter&) = delete;
  JsonlWriter& operator=(const JsonlWriter&) = delete;

  void append(const nlohmann::json& record);
  void flush();
  std::size_t count() const;

private:
  mutable std::mutex mutex_;
  std::ofstream out_;
  double flush_interval_;
  double last_flush_;
  std::size_t count_ = 0;
};

/// Calls `fn(line_number, record)` for each line. Unparseable lines are
/// passed to `on_bad` when given, otherwise they throw ParseError.
void read_jsonl(const std::filesystem::path& path, const std::function<void(std::size_t, const nlohmann::json&)>& fn,
                const std::function<void(std::size_t, const std::string&)>& on_bad = {});

/// Timestamps are written rounded to microseconds.
double round_micros(double seconds);

} // namespace savprobe
