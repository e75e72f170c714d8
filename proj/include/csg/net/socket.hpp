// SPDX-License-Identifier: Apache-2.0
//
// Thin RAII wrappers over POSIX TCP sockets. Every failure is a csg::Error with
// Errc::connection so callers map it to one exit path.
#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <optional>
#include <span>
#include <string>

#include "csg/bytes.hpp"
#include "csg/error.hpp"
#include "csg/protocol/frame.hpp"

namespace csg::net {

struct HostPort {
  std::string host;
  std::uint16_t port = 0;

  std::string str() const {
    return host.find(':') != std::string::npos ? "[" + host + "]:" + std::to_string(port)
                                               : host + ":" + std::to_string(port);
  }
};

// "host:port" or "[v6]:port". Port 0 asks the kernel for any free port.
inline HostPort parse_host_port(std::string_view text) {
  std::string_view host, port;
  if (!text.empty() && text.front() == '[') {
    auto close = text.find(']');
    if (close == std::string_view::npos || close + 1 >= text.size() || text[close + 1] != ':')
      throw Error(Errc::config, "bad address \"" + std::string(text) + "\"");
    host = text.substr(1, close - 1);
    port = text.substr(close + 2);
  } else {
    auto colon = text.rfind(':');
    if (colon == std::string_view::npos) throw Error(Errc::config, "address needs host:port, got \"" + std::string(text) + "\"");
    host = text.substr(0, colon);
    port = text.substr(colon + 1);
  }
  if (host.empty() || port.empty() || port.size() > 5 || port.find_first_not_of("0123456789") != std::string_view::npos)
    throw Error(Errc::config, "bad address \"" + std::string(text) + "\"");
  unsigned long p = std::stoul(std::string(port));
  if (p > 65535) throw Error(Errc::config, "port out of range in \"" + std::string(text) + "\"");
  return {std::string(host), static_cast<std::uint16_t>(p)};
}

inline std::string errno_text(int err) { return std::strerror(err); }

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket() { close(); }

  Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Socket& operator=(Socket&& other) noexcept {
    if (this != &other) {
      close();
      fd_ = std::exchange(other.fd_, -1);
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }

  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  // Wakes any thread blocked in read_some on this socket.
  void shutdown() const {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

  // Signals end of output; reads keep working.
  void shutdown_write() const {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_WR);
  }

  // Receive timeout; a read that idles this long fails with Errc::connection.
  void set_read_timeout(std::chrono::milliseconds t) const {
    timeval tv{};
    tv.tv_sec = static_cast<time_t>(t.count() / 1000);
    tv.tv_usec = static_cast<suseconds_t>((t.count() % 1000) * 1000);
    ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  }

  // Half-closes, then discards what the peer still sends for a moment, so a
  // final Error frame is not destroyed by a reset over unread input.
  void linger_close(std::chrono::milliseconds grace = std::chrono::milliseconds(200)) {
    if (fd_ < 0) return;
    ::shutdown(fd_, SHUT_WR);
    auto deadline = std::chrono::steady_clock::now() + grace;
    std::array<std::uint8_t, 4096> sink{};
    std::size_t budget = 1u << 20;
    while (budget > 0) {
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) break;
      pollfd pfd{fd_, POLLIN, 0};
      if (::poll(&pfd, 1, static_cast<int>(left.count())) <= 0) break;
      ssize_t n = ::recv(fd_, sink.data(), sink.size(), 0);
      if (n <= 0) break;
      budget -= std::min(budget, static_cast<std::size_t>(n));
    }
    close();
  }

  void set_no_delay() const {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }

  // Returns 0 only when the peer closed the stream.
  std::size_t read_some(std::span<std::uint8_t> out) {
    for (;;) {
      ssize_t n = ::recv(fd_, out.data(), out.size(), 0);
      if (n >= 0) return static_cast<std::size_t>(n);
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) throw Error(Errc::connection, "read timed out");
      throw Error(Errc::connection, "read failed: " + errno_text(errno));
    }
  }

  void write_all(ByteView data) {
    while (!data.empty()) {
      ssize_t n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error(Errc::connection, "write failed: " + errno_text(errno));
      }
      data = data.subspan(static_cast<std::size_t>(n));
    }
  }

  void write_frame(const proto::Frame& f) { write_all(proto::encode_frame(f)); }

 private:
  int fd_ = -1;
};

namespace detail {

struct AddrInfoDeleter {
  void operator()(addrinfo* a) const { ::freeaddrinfo(a); }
};
using AddrInfoPtr = std::unique_ptr<addrinfo, AddrInfoDeleter>;

inline AddrInfoPtr resolve(const HostPort& hp, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = passive ? AI_PASSIVE : 0;
  addrinfo* res = nullptr;
  std::string port = std::to_string(hp.port);
  int rc = ::getaddrinfo(hp.host.c_str(), port.c_str(), &hints, &res);
  if (rc != 0) throw Error(Errc::connection, "cannot resolve " + hp.host + ": " + ::gai_strerror(rc));
  return AddrInfoPtr(res);
}

inline std::string address_of(const sockaddr_storage& ss) {
  char buf[INET6_ADDRSTRLEN] = {};
  if (ss.ss_family == AF_INET) {
    const auto* in = reinterpret_cast<const sockaddr_in*>(&ss);
    ::inet_ntop(AF_INET, &in->sin_addr, buf, sizeof buf);
    return HostPort{buf, ntohs(in->sin_port)}.str();
  }
  const auto* in6 = reinterpret_cast<const sockaddr_in6*>(&ss);
  ::inet_ntop(AF_INET6, &in6->sin6_addr, buf, sizeof buf);
  return HostPort{buf, ntohs(in6->sin6_port)}.str();
}

}  // namespace detail

inline Socket connect_tcp(const HostPort& hp) {
  auto res = detail::resolve(hp, false);
  int last_err = 0;
  for (addrinfo* ai = res.get(); ai; ai = ai->ai_next) {
    Socket s(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol));
    if (!s.valid()) {
      last_err = errno;
      continue;
    }
    if (::connect(s.fd(), ai->ai_addr, ai->ai_addrlen) == 0) {
      s.set_no_delay();
      return s;
    }
    last_err = errno;
  }
  throw Error(Errc::connection, "cannot connect to " + hp.str() + ": " + errno_text(last_err));
}

class Listener {
 public:
  explicit Listener(const HostPort& hp, int backlog = 128) {
    auto res = detail::resolve(hp, true);
    int last_err = 0;
    for (addrinfo* ai = res.get(); ai; ai = ai->ai_next) {
      Socket s(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol));
      if (!s.valid()) {
        last_err = errno;
        continue;
      }
      int one = 1;
      ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
      if (::bind(s.fd(), ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(s.fd(), backlog) == 0) {
        sock_ = std::move(s);
        break;
      }
      last_err = errno;
    }
    if (!sock_.valid()) throw Error(Errc::connection, "cannot listen on " + hp.str() + ": " + errno_text(last_err));
    sockaddr_storage ss{};
    socklen_t len = sizeof ss;
    ::getsockname(sock_.fd(), reinterpret_cast<sockaddr*>(&ss), &len);
    address_ = detail::address_of(ss);
    port_ = ntohs(ss.ss_family == AF_INET ? reinterpret_cast<sockaddr_in*>(&ss)->sin_port
                                          : reinterpret_cast<sockaddr_in6*>(&ss)->sin6_port);
  }

  const std::string& address() const { return address_; }
  std::uint16_t port() const { return port_; }

  // Waits up to timeout for a connection; nullopt on timeout or interruption.
  std::optional<Socket> accept(std::chrono::milliseconds timeout) {
    pollfd pfd{sock_.fd(), POLLIN, 0};
    int rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (rc <= 0) return std::nullopt;
    int fd = ::accept4(sock_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) return std::nullopt;
    Socket s(fd);
    s.set_no_delay();
    return s;
  }

  void close() { sock_.close(); }

 private:
  Socket sock_;
  std::string address_;
  std::uint16_t port_ = 0;
};

}  // namespace csg::net
