// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <string>

#include "csg/protocol/data.hpp"
#include "csg/protocol/handshake.hpp"

namespace csg::proto {

// The only (phase, incoming type) pairs a server accepts. Disconnect is accepted
// in every open phase; everything else closes the session with an Error frame.
inline bool is_legal(Phase phase, MessageType type) {
  if (phase == Phase::closed) return false;
  if (type == MessageType::disconnect) return true;
  switch (phase) {
    case Phase::init: return type == MessageType::client_hello;
    case Phase::hello_exchanged: return type == MessageType::phase1_auth;
    case Phase::tunnel_established: return type == MessageType::service_request;
    case Phase::service_requested: return type == MessageType::phase2_auth;
    case Phase::session_active:
      return type == MessageType::put || type == MessageType::get || type == MessageType::list;
    case Phase::closed: return false;
  }
  return false;
}

struct ServerContext {
  const keyx::DhGroup* group = nullptr;
  const vault::Registry* registry = nullptr;
  vault::ObjectStore* store = nullptr;
  RandomSource* rng = nullptr;
  std::function<std::int64_t()> clock;
};

// (event, customer_id if known). Events never carry secrets or object bytes.
using EventSink = std::function<void(std::string_view, const std::optional<std::string>&)>;

// Drives the server half of one connection.
class ServerSession {
 public:
  struct Reaction {
    std::optional<Frame> reply;
    bool close = false;
  };

  explicit ServerSession(ServerContext ctx, EventSink sink = {}) : ctx_(std::move(ctx)), sink_(std::move(sink)) {}

  ~ServerSession() { state_.close(); }

  ServerSession(const ServerSession&) = delete;
  ServerSession& operator=(const ServerSession&) = delete;

  const SessionState& state() const { return state_; }
  bool closed() const { return state_.phase == Phase::closed; }

  Reaction handle(const Frame& in) {
    if (closed()) return {std::nullopt, true};
    if (in.type == MessageType::disconnect) {
      emit("disconnect");
      state_.close();
      return {std::nullopt, true};
    }
    if (!is_legal(state_.phase, in.type)) {
      emit("protocol error " + std::string(type_name(in.type)) + " in " + std::string(phase_name(state_.phase)));
      return fail(reason::unexpected);
    }
    switch (in.type) {
      case MessageType::client_hello: return on_hello(in);
      case MessageType::phase1_auth: return on_phase1(in);
      case MessageType::service_request: return on_service_request(in);
      case MessageType::phase2_auth: return on_phase2(in);
      default: return on_data(in);
    }
  }

  // Framing failed (truncated, unknown type, oversized). The stream is no longer trusted.
  Reaction on_stream_error(const Error& e) {
    if (closed()) return {std::nullopt, true};
    emit("frame error " + std::string(errc_name(e.code())));
    return fail(e.code() == Errc::unknown_type ? reason::unexpected : reason::malformed);
  }

  void on_peer_closed() {
    if (!closed()) emit("peer closed");
    state_.close();
  }

 private:
  Reaction fail(std::string_view why) {
    state_.close();
    return {make_error_frame(why), true};
  }

  std::optional<std::string> known_customer() const {
    if (state_.customer_id) return state_.customer_id;
    return state_.tunnel_customer;
  }

  void emit(std::string_view event, std::optional<std::string> customer = std::nullopt) {
    if (!sink_) return;
    sink_(event, customer ? customer : known_customer());
  }

  Reaction on_hello(const Frame& in) {
    try {
      auto keypair = keyx::dh_generate(*ctx_.group, *ctx_.rng);
      auto nonce = ctx_.rng->array<16>();
      Frame reply = server_hello(state_, in.payload, *ctx_.group, keypair, nonce);
      keypair.wipe();
      emit("hello");
      return {std::move(reply), false};
    } catch (const Error& e) {
      emit("hello fail " + std::string(errc_name(e.code())));
      return fail(e.code() == Errc::version_mismatch     ? reason::version
                  : e.code() == Errc::invalid_public_key ? reason::bad_public
                                                         : reason::malformed);
    }
  }

  Reaction on_phase1(const Frame& in) {
    Verdict v = server_verify_phase1(state_, in.payload, *ctx_.registry, *ctx_.rng);
    if (v.outcome == AuthOutcome::accepted) {
      emit("phase1 ok", v.customer_id);
      return {std::move(v.reply), false};
    }
    emit("phase1 fail reason=" + std::string(outcome_name(v.outcome)), std::nullopt);
    return {std::move(v.reply), true};
  }

  Reaction on_service_request(const Frame& in) {
    try {
      server_on_service_request(state_, in.payload);
    } catch (const Error&) {
      emit("service request fail");
      return fail(reason::malformed);
    }
    emit("service request");
    return {std::nullopt, false};
  }

  Reaction on_phase2(const Frame& in) {
    std::optional<std::string> before = known_customer();
    Verdict v = server_verify_phase2(state_, in.payload, *ctx_.registry, ctx_.clock(), *ctx_.rng);
    std::string cert = v.certificate ? " cert=" + std::string(vault::verdict_name(*v.certificate)) : "";
    if (v.outcome == AuthOutcome::accepted) {
      try {
        ctx_.store->open_space(*state_.customer_id);
      } catch (const Error&) {
        // Surfaces later as a storage error on the first data request.
      }
      emit("phase2 ok" + cert);
      return {std::move(v.reply), false};
    }
    std::string detail = v.certificate ? cert : " reason=" + std::string(outcome_name(v.outcome));
    emit("phase2 fail" + detail, before);
    return {std::move(v.reply), true};
  }

  Reaction on_data(const Frame& in) {
    const vault::CustomerRecord* record =
        state_.customer_id ? ctx_.registry->find(*state_.customer_id) : nullptr;
    if (!record) {
      emit("data fail unknown customer");
      return fail(reason::malformed);
    }
    std::string op = in.type == MessageType::put ? "put" : in.type == MessageType::get ? "get" : "list";
    try {
      DataReply r = data_exchange(state_, in, *ctx_.store, *record, *ctx_.rng);
      emit(op + " " + std::string(status_name(r.status)));
      return {std::move(r.frame), false};
    } catch (const Error&) {
      emit(op + " fail malformed", record->customer_id);
      return fail(reason::malformed);
    }
  }

  ServerContext ctx_;
  EventSink sink_;
  SessionState state_;
};

}  // namespace csg::proto
