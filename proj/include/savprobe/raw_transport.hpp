#pragma once

#include "savprobe/transport.hpp"

namespace savprobe {

/// Live network transport: sends hand-built datagrams through an
/// IPPROTO_RAW socket and captures UDP addressed to `scanner_ip:port`
/// through a raw UDP socket. Requires CAP_NET_RAW; the constructor throws
/// TransportError otherwise.
class RawTransport final : public Transport {
public:
  RawTransport(Ip4 scanner_ip, std::uint16_t port);
  ~RawTransport() override;
  RawTransport(const RawTransport&) = delete;
  RawTransport& operator=(const RawTransport&) = delete;

  void send(std::span<const std::uint8_t> packet, Ip4 dst) override;
  std::optional<Datagram> receive(double timeout) override;
  bool receive_blocks() const override { return true; }
  Clock& clock() override { return clock_; }

private:
  Ip4 scanner_ip_;
  std::uint16_t port_;
  int send_fd_ = -1;
  int recv_fd_ = -1;
  SteadyClock clock_;
};

} // namespace savprobe
