#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "savprobe/ip.hpp"
#include "savprobe/token_bucket.hpp"

namespace savprobe {

/// UDP payload received on the scanner's port.
struct Datagram {
  Ip4 src;
  std::uint16_t sport = 0;
  std::vector<std::uint8_t> payload;
  double timestamp = 0.0;
};

/// Moves raw IPv4 datagrams out and scanner-bound UDP payloads in. The raw
/// socket transport and the simulated internet implement the same contract:
/// send() and receive() may be called concurrently from two threads, and
/// send() throws TransportError when the packet cannot be handed off.
class Transport {
public:
  virtual ~Transport() = default;

  /// `packet` is a complete IPv4 datagram (header included).
  virtual void send(std::span<const std::uint8_t> packet, Ip4 dst) = 0;

  /// Next inbound datagram, waiting at most `timeout` seconds of clock() time.
  virtual std::optional<Datagram> receive(double timeout) = 0;

  /// True when receive() actually waits for the timeout before giving up.
  virtual bool receive_blocks() const = 0;

  virtual Clock& clock() = 0;
};

} // namespace savprobe
