#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

namespace savprobe {

inline constexpr const char* tool_version = "0.1.0";

/// Hex SHA-256 of a file's contents. Throws InputError if unreadable.
std::string sha256_file(const std::filesystem::path& path);

struct RunManifest {
  std::string command;
  std::uint64_t seed = 0;
  std::string zone;
  std::map<std::string, std::string> inputs; ///< path -> sha256
  std::string started;
  std::string finished;
  std::string version = tool_version;
  nlohmann::json extra = nlohmann::json::object();

  void add_input(const std::filesystem::path& path);
  void start();
  void finish();

  nlohmann::json to_json() const;
  /// Writes `dir/manifest.json`.
  void write(const std::filesystem::path& dir) const;
};

} // namespace savprobe
