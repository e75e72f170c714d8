// SPDX-License-Identifier: Apache-2.0
//
// Blocking client for one gateway session.
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "csg/net/socket.hpp"
#include "csg/protocol/data.hpp"
#include "csg/protocol/handshake.hpp"

namespace csg {

// Raised when the gateway answers with an Error frame or hangs up mid-exchange.
inline constexpr std::string_view kServerClosed = "connection closed by gateway";

class Client {
 public:
  // Observes every frame on the wire: (outbound?, encoded bytes).
  using FrameTap = std::function<void(bool, ByteView)>;

  explicit Client(const keyx::DhGroup& group, RandomSource& rng = system_random()) : group_(group), rng_(rng) {}
  ~Client() {
    keypair_.wipe();
    state_.close();
  }

  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  void set_frame_tap(FrameTap tap) { tap_ = std::move(tap); }
  void set_read_timeout(std::chrono::milliseconds t) { timeout_ = t; }

  const proto::SessionState& state() const { return state_; }
  bool connected() const { return sock_.valid(); }

  // TCP connect plus ClientHello/ServerHello.
  void connect(const net::HostPort& where) {
    sock_ = net::connect_tcp(where);
    if (timeout_.count() > 0) sock_.set_read_timeout(timeout_);
    state_ = {};
    keypair_ = keyx::dh_generate(group_, rng_);
    send(proto::client_connect(state_, keypair_));
    auto reply = expect(proto::MessageType::server_hello);
    proto::client_on_server_hello(state_, reply.payload, keypair_, group_);
    keypair_.wipe();
  }

  proto::AuthResult authenticate_tunnel(std::string_view user, std::string_view pass) {
    send(proto::phase1_auth(state_, user, pass, rng_));
    auto reply = expect(proto::MessageType::phase1_result);
    auto result = proto::client_on_phase1_result(state_, reply.payload);
    if (!result.accepted) drop();
    return result;
  }

  proto::AuthResult login(std::string_view path, std::string_view user, std::string_view pass) {
    send(proto::service_request(state_, path, rng_));
    send(proto::phase2_auth(state_, user, pass, rng_));
    auto reply = expect(proto::MessageType::phase2_result);
    auto result = proto::client_on_phase2_result(state_, reply.payload);
    if (!result.accepted) drop();
    return result;
  }

  proto::DataStatus put(std::string_view name, ByteView data) {
    send(proto::make_put(state_, name, data, rng_));
    return proto::read_put_result(state_, expect(proto::MessageType::put_result).payload);
  }

  proto::GetResponse get(std::string_view name) {
    send(proto::make_get(state_, name, rng_));
    return proto::read_get_result(state_, expect(proto::MessageType::get_result).payload);
  }

  std::vector<std::string> list() {
    send(proto::make_list(state_, rng_));
    return proto::read_list_result(state_, expect(proto::MessageType::list_result).payload);
  }

  // Sends Disconnect when a connection exists; always leaves the session Closed.
  void disconnect() {
    proto::Frame bye = proto::disconnect(state_);
    if (sock_.valid()) {
      try {
        send(bye);
      } catch (const Error&) {
        // The peer may already be gone; the session is closed either way.
      }
    }
    drop();
  }

  // Raw access for tests and tools.
  void send(const proto::Frame& f) {
    if (!sock_.valid()) throw Error(Errc::connection, "not connected");
    Bytes wire = proto::encode_frame(f);
    if (tap_) tap_(true, wire);
    sock_.write_all(wire);
  }

  void send_raw(ByteView bytes) {
    if (!sock_.valid()) throw Error(Errc::connection, "not connected");
    sock_.write_all(bytes);
  }

  std::optional<proto::Frame> receive() {
    if (!sock_.valid()) throw Error(Errc::connection, "not connected");
    auto f = proto::read_frame(sock_);
    if (f && tap_) tap_(false, proto::encode_frame(*f));
    return f;
  }

 private:
  proto::Frame expect(proto::MessageType type) {
    std::optional<proto::Frame> f;
    try {
      f = receive();
    } catch (const Error& e) {
      fail();
      if (e.code() == Errc::connection) throw;
      throw Error(Errc::connection, std::string("bad frame from gateway: ") + e.what());
    }
    if (!f) {
      fail();
      throw Error(Errc::connection, std::string(kServerClosed));
    }
    if (f->type == proto::MessageType::error) {
      fail();
      throw Error(Errc::protocol_order, "gateway error: " + proto::read_error_reason(f->payload));
    }
    if (f->type != type) {
      fail();
      throw Error(Errc::protocol_order, "expected " + std::string(proto::type_name(type)) + ", got " +
                                            std::string(proto::type_name(f->type)));
    }
    return std::move(*f);
  }

  void fail() {
    state_.close();
    drop();
  }

  void drop() { sock_.close(); }

  const keyx::DhGroup& group_;
  RandomSource& rng_;
  net::Socket sock_;
  proto::SessionState state_;
  keyx::DhKeyPair keypair_;
  FrameTap tap_;
  std::chrono::milliseconds timeout_{0};
};

}  // namespace csg
