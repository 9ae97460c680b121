#pragma once

#include <stdexcept>
#include <string>

namespace savprobe {

/// Malformed input file or record. Carries the source location when known.
class ParseError : public std::runtime_error {
public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what) {}
};

/// Value cannot be encoded (name too long, payload too large, ...).
class EncodeError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Packet transport failed (socket setup, send error).
class TransportError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Precondition on a planning or analysis input was not met.
class InputError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace savprobe
