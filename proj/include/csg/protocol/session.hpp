// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>

#include "csg/error.hpp"
#include "csg/keyx.hpp"

namespace csg::proto {

using Nonce = std::array<std::uint8_t, 16>;

// Fixed order: Init -> HelloExchanged -> TunnelEstablished -> ServiceRequested
// -> SessionActive; any violation lands in Closed.
enum class Phase { init, hello_exchanged, tunnel_established, service_requested, session_active, closed };

inline constexpr Phase kAllPhases[] = {Phase::init,          Phase::hello_exchanged, Phase::tunnel_established,
                                       Phase::service_requested, Phase::session_active,  Phase::closed};

inline std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::init: return "Init";
    case Phase::hello_exchanged: return "HelloExchanged";
    case Phase::tunnel_established: return "TunnelEstablished";
    case Phase::service_requested: return "ServiceRequested";
    case Phase::session_active: return "SessionActive";
    case Phase::closed: return "Closed";
  }
  return "?";
}

struct SessionState {
  Phase phase = Phase::init;
  std::optional<keyx::SessionKeys> keys;
  std::optional<Nonce> server_nonce;
  // Bound only while SessionActive.
  std::optional<std::string> customer_id;

  // Server-side bookkeeping between the two authentication phases.
  std::optional<std::string> tunnel_customer;
  std::optional<std::string> requested_path;

  // Moves to Closed and overwrites every secret held by the session.
  void close() {
    if (keys) keys->wipe();
    keys.reset();
    if (server_nonce) secure_wipe(*server_nonce);
    server_nonce.reset();
    customer_id.reset();
    tunnel_customer.reset();
    requested_path.reset();
    phase = Phase::closed;
  }

  const keyx::SessionKeys& session_keys() const {
    if (!keys) throw Error(Errc::protocol_order, "no session keys established");
    return *keys;
  }
};

inline void require_phase(SessionState& state, Phase expected, std::string_view op) {
  if (state.phase != expected) {
    Phase was = state.phase;
    state.close();
    throw Error(Errc::protocol_order, std::string(op) + " not allowed in phase " + std::string(phase_name(was)));
  }
}

}  // namespace csg::proto
