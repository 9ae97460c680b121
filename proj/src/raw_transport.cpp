#include "savprobe/raw_transport.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <cstring>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <fmt/format.h>

#include "savprobe/error.hpp"
#include "savprobe/packet.hpp"

namespace savprobe {

RawTransport::RawTransport(Ip4 scanner_ip, std::uint16_t port) : scanner_ip_(scanner_ip), port_(port) {
  send_fd_ = ::socket(AF_INET, SOCK_RAW, IPPROTO_RAW);
  if (send_fd_ < 0)
    throw TransportError(fmt::format("raw send socket: {}", std::strerror(errno)));
  recv_fd_ = ::socket(AF_INET, SOCK_RAW, IPPROTO_UDP);
  if (recv_fd_ < 0) {
    int err = errno;
    ::close(send_fd_);
    throw TransportError(fmt::format("raw receive socket: {}", std::strerror(err)));
  }
  int size = 8 << 20;
  ::setsockopt(recv_fd_, SOL_SOCKET, SO_RCVBUF, &size, sizeof size);
}

RawTransport::~RawTransport() {
  if (send_fd_ >= 0)
    ::close(send_fd_);
  if (recv_fd_ >= 0)
    ::close(recv_fd_);
}

void RawTransport::send(std::span<const std::uint8_t> packet, Ip4 dst) {
  sockaddr_in to{};
  to.sin_family = AF_INET;
  to.sin_addr.s_addr = htonl(dst.value);
  while (true) {
    auto n = ::sendto(send_fd_, packet.data(), packet.size(), 0, reinterpret_cast<const sockaddr*>(&to), sizeof to);
    if (n == static_cast<ssize_t>(packet.size()))
      return;
    if (n < 0 && (errno == EINTR || errno == ENOBUFS || errno == EAGAIN))
      continue;
    throw TransportError(fmt::format("sendto {}: {}", dst.to_string(), n < 0 ? std::strerror(errno) : "short write"));
  }
}

std::optional<Datagram> RawTransport::receive(double timeout) {
  const double until = clock_.now() + timeout;
  std::uint8_t buf[65536];
  while (true) {
    int wait_ms = static_cast<int>(std::max(0.0, (until - clock_.now()) * 1000.0));
    pollfd pfd{recv_fd_, POLLIN, 0};
    int rc = ::poll(&pfd, 1, wait_ms);
    if (rc < 0 && errno == EINTR)
      continue;
    if (rc <= 0)
      return std::nullopt;
    auto n = ::recv(recv_fd_, buf, sizeof buf, 0);
    if (n <= 0)
      continue;
    auto udp = parse_udp({buf, static_cast<std::size_t>(n)});
    if (udp && udp->dst == scanner_ip_ && udp->dport == port_)
      return Datagram{udp->src, udp->sport, {udp->payload.begin(), udp->payload.end()}, clock_.now()};
    if (clock_.now() >= until)
      return std::nullopt;
  }
}

} // namespace savprobe
