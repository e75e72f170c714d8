// SPDX-License-Identifier: Apache-2.0
//
// Client and server halves of the handshake.
//
//   C -> S  ClientHello     version(1) | u16 len | DH public
//   S -> C  ServerHello     u16 len | DH public | server nonce(16)
//   C -> S  Phase1Auth      IV | CBC_k1( str(user) | str(pass) | nonce )
//   S -> C  Phase1Result    IV | CBC_k1( status | [str(reason)] )
//   C -> S  ServiceRequest  IV | CBC_kd( str(path) )
//   C -> S  Phase2Auth      IV | CBC_k2( str(user) | str(pass) | nonce )
//   S -> C  Phase2Result    IV | CBC_k2( status | [str(reason)] )
//
// status 0x01 accepts, 0x00 rejects. Disconnect carries no payload and Error
// carries a plaintext str(reason); neither ever holds secret material.
#pragma once

#include <string>
#include <string_view>

#include "csg/cbc.hpp"
#include "csg/keyx.hpp"
#include "csg/protocol/frame.hpp"
#include "csg/protocol/session.hpp"
#include "csg/vault/registry.hpp"

namespace csg::proto {

inline constexpr std::uint8_t kProtocolVersion = 0x01;
inline constexpr std::uint8_t kAccept = 0x01;
inline constexpr std::uint8_t kReject = 0x00;

namespace reason {
inline constexpr std::string_view auth_failed = "auth failed";
inline constexpr std::string_view unknown_path = "unknown service path";
inline constexpr std::string_view cert_expired = "certificate expired";
inline constexpr std::string_view cert_revoked = "certificate revoked";
inline constexpr std::string_view rights_missing = "rights missing";
inline constexpr std::string_view unexpected = "unexpected message";
inline constexpr std::string_view malformed = "malformed request";
inline constexpr std::string_view version = "version mismatch";
inline constexpr std::string_view bad_public = "invalid public key";
inline constexpr std::string_view busy = "server busy";
}  // namespace reason

inline Frame make_error_frame(std::string_view why) {
  Bytes payload;
  put_str(payload, why);
  return {MessageType::error, std::move(payload)};
}

inline std::string read_error_reason(ByteView payload) {
  try {
    ByteReader r(payload);
    return r.str();
  } catch (const Error&) {
    return "unspecified error";
  }
}

inline Bytes encode_public(const keyx::BigInt& value) {
  Bytes mag = keyx::bigint_to_bytes(value);
  Bytes out;
  if (mag.size() > 0xffff) throw Error(Errc::length, "public value too large");
  put_u16(out, static_cast<std::uint16_t>(mag.size()));
  put_bytes(out, mag);
  return out;
}

// Rejects leading zero bytes so every value has exactly one encoding.
inline keyx::BigInt read_public(ByteReader& r) {
  auto len = r.u16();
  auto mag = r.take(len);
  if (!mag.empty() && mag[0] == 0) throw Error(Errc::malformed, "public value has leading zero bytes");
  return keyx::bigint_from_bytes(mag);
}

// Plaintext of a credential blob: str(user) | str(pass) | nonce.
struct Credentials {
  std::string user;
  std::string pass;
  Nonce nonce{};

  ~Credentials() {
    secure_wipe(std::span(reinterpret_cast<std::uint8_t*>(pass.data()), pass.size()));
  }
};

inline Bytes seal_credentials(std::string_view user, std::string_view pass, const Nonce& nonce,
                              const aes::CipherKey& key, RandomSource& rng) {
  Bytes inner;
  put_str(inner, user);
  put_str(inner, pass);
  put_bytes(inner, nonce);
  Bytes out = aes::seal(inner, key, rng);
  secure_wipe(inner);
  return out;
}

inline Credentials open_credentials(ByteView payload, const aes::CipherKey& key) {
  Bytes inner = aes::open(payload, key);
  Credentials c;
  ByteReader r(inner);
  c.user = r.str();
  c.pass = r.str();
  c.nonce = r.fixed<16>();
  r.expect_end();
  secure_wipe(inner);
  return c;
}

struct AuthResult {
  bool accepted = false;
  std::string reason;
};

inline Bytes encode_result(const AuthResult& result) {
  Bytes inner;
  if (result.accepted) {
    put_u8(inner, kAccept);
  } else {
    put_u8(inner, kReject);
    put_str(inner, result.reason);
  }
  return inner;
}

inline AuthResult decode_result(ByteView inner) {
  ByteReader r(inner);
  auto status = r.u8();
  AuthResult out;
  if (status == kAccept) {
    out.accepted = true;
  } else if (status == kReject) {
    out.reason = r.str();
  } else {
    throw Error(Errc::malformed, "unknown result status");
  }
  r.expect_end();
  return out;
}

// Client side ---------------------------------------------------------------

// Phase stays Init until the ServerHello arrives.
inline Frame client_connect(SessionState& state, const keyx::DhKeyPair& keypair) {
  require_phase(state, Phase::init, "client_connect");
  Bytes payload{kProtocolVersion};
  put_bytes(payload, encode_public(keypair.public_key));
  return {MessageType::client_hello, std::move(payload)};
}

inline void client_on_server_hello(SessionState& state, ByteView payload, const keyx::DhKeyPair& keypair,
                                   const keyx::DhGroup& group) {
  require_phase(state, Phase::init, "ServerHello");
  try {
    ByteReader r(payload);
    keyx::BigInt server_public = read_public(r);
    Nonce nonce = r.fixed<16>();
    r.expect_end();
    Bytes shared = keyx::dh_shared(keypair, server_public, group);
    state.keys = keyx::derive_keys(shared);
    secure_wipe(shared);
    state.server_nonce = nonce;
    state.phase = Phase::hello_exchanged;
  } catch (...) {
    state.close();
    throw;
  }
}

inline Frame phase1_auth(SessionState& state, std::string_view tunnel_user, std::string_view tunnel_pass,
                         RandomSource& rng) {
  require_phase(state, Phase::hello_exchanged, "phase1_auth");
  return {MessageType::phase1_auth,
          seal_credentials(tunnel_user, tunnel_pass, *state.server_nonce, state.session_keys().k_phase1, rng)};
}

inline AuthResult client_on_phase1_result(SessionState& state, ByteView payload) {
  require_phase(state, Phase::hello_exchanged, "Phase1Result");
  try {
    AuthResult result = decode_result(aes::open(payload, state.session_keys().k_phase1));
    if (result.accepted)
      state.phase = Phase::tunnel_established;
    else
      state.close();
    return result;
  } catch (...) {
    state.close();
    throw;
  }
}

inline Frame service_request(SessionState& state, std::string_view url_path, RandomSource& rng) {
  require_phase(state, Phase::tunnel_established, "service_request");
  Bytes inner;
  put_str(inner, url_path);
  Frame f{MessageType::service_request, aes::seal(inner, state.session_keys().k_data, rng)};
  state.phase = Phase::service_requested;
  return f;
}

inline Frame phase2_auth(SessionState& state, std::string_view service_user, std::string_view service_pass,
                         RandomSource& rng) {
  require_phase(state, Phase::service_requested, "phase2_auth");
  return {MessageType::phase2_auth,
          seal_credentials(service_user, service_pass, *state.server_nonce, state.session_keys().k_phase2, rng)};
}

inline AuthResult client_on_phase2_result(SessionState& state, ByteView payload) {
  require_phase(state, Phase::service_requested, "Phase2Result");
  try {
    AuthResult result = decode_result(aes::open(payload, state.session_keys().k_phase2));
    if (result.accepted)
      state.phase = Phase::session_active;
    else
      state.close();
    return result;
  } catch (...) {
    state.close();
    throw;
  }
}

// Valid from any phase; keys are overwritten before the frame is returned.
inline Frame disconnect(SessionState& state) {
  state.close();
  return {MessageType::disconnect, {}};
}

// Server side ---------------------------------------------------------------

inline Frame server_hello(SessionState& state, ByteView client_hello, const keyx::DhGroup& group,
                          const keyx::DhKeyPair& keypair, const Nonce& nonce) {
  require_phase(state, Phase::init, "ClientHello");
  try {
    ByteReader r(client_hello);
    if (r.u8() != kProtocolVersion) throw Error(Errc::version_mismatch, "unsupported protocol version");
    keyx::BigInt client_public = read_public(r);
    r.expect_end();
    Bytes shared = keyx::dh_shared(keypair, client_public, group);
    state.keys = keyx::derive_keys(shared);
    secure_wipe(shared);
  } catch (...) {
    state.close();
    throw;
  }
  state.server_nonce = nonce;
  state.phase = Phase::hello_exchanged;

  Bytes payload = encode_public(keypair.public_key);
  put_bytes(payload, nonce);
  return {MessageType::server_hello, std::move(payload)};
}

// Internal outcome; the client only ever sees the coarse reason string.
enum class AuthOutcome {
  accepted,
  undecryptable,
  malformed,
  replay_detected,
  bad_credentials,
  customer_mismatch,
  path_mismatch,
  certificate_rejected,
};

inline std::string_view outcome_name(AuthOutcome o) {
  switch (o) {
    case AuthOutcome::accepted: return "ok";
    case AuthOutcome::undecryptable: return "undecryptable";
    case AuthOutcome::malformed: return "malformed";
    case AuthOutcome::replay_detected: return "replay";
    case AuthOutcome::bad_credentials: return "credentials";
    case AuthOutcome::customer_mismatch: return "customer-mismatch";
    case AuthOutcome::path_mismatch: return "path";
    case AuthOutcome::certificate_rejected: return "certificate";
  }
  return "?";
}

struct Verdict {
  Frame reply;
  AuthOutcome outcome = AuthOutcome::bad_credentials;
  std::optional<vault::CertificateVerdict> certificate;
  // Customer identified by the credentials, when they checked out.
  std::optional<std::string> customer_id;
};

namespace detail {

struct OpenedCredentials {
  std::optional<Credentials> creds;
  AuthOutcome failure = AuthOutcome::accepted;
};

inline OpenedCredentials open_and_bind(ByteView payload, const aes::CipherKey& key, const Nonce& nonce) {
  OpenedCredentials out;
  try {
    out.creds.emplace(open_credentials(payload, key));
  } catch (const Error& e) {
    out.creds.reset();
    out.failure = (e.code() == Errc::padding || e.code() == Errc::length) ? AuthOutcome::undecryptable
                                                                          : AuthOutcome::malformed;
    return out;
  }
  if (!constant_time_equal(out.creds->nonce, nonce)) {
    out.creds.reset();
    out.failure = AuthOutcome::replay_detected;
  }
  return out;
}

inline Frame result_frame(MessageType type, const AuthResult& result, const aes::CipherKey& key, RandomSource& rng) {
  return {type, aes::seal(encode_result(result), key, rng)};
}

}  // namespace detail

inline Verdict server_verify_phase1(SessionState& state, ByteView payload, const vault::Registry& registry,
                                    RandomSource& rng) {
  require_phase(state, Phase::hello_exchanged, "Phase1Auth");
  const auto key = state.session_keys().k_phase1;
  Verdict v;
  auto opened = detail::open_and_bind(payload, key, *state.server_nonce);
  if (opened.creds) {
    v.customer_id = registry.check_credentials(vault::CredentialKind::tunnel, opened.creds->user, opened.creds->pass);
    v.outcome = v.customer_id ? AuthOutcome::accepted : AuthOutcome::bad_credentials;
  } else {
    v.outcome = opened.failure;
  }

  if (v.outcome == AuthOutcome::accepted) {
    v.reply = detail::result_frame(MessageType::phase1_result, {true, {}}, key, rng);
    state.tunnel_customer = v.customer_id;
    state.phase = Phase::tunnel_established;
  } else {
    v.reply = detail::result_frame(MessageType::phase1_result, {false, std::string(reason::auth_failed)}, key, rng);
    state.close();
  }
  return v;
}

inline void server_on_service_request(SessionState& state, ByteView payload) {
  require_phase(state, Phase::tunnel_established, "ServiceRequest");
  try {
    Bytes inner = aes::open(payload, state.session_keys().k_data);
    ByteReader r(inner);
    state.requested_path = r.str();
    r.expect_end();
  } catch (...) {
    state.close();
    throw;
  }
  state.phase = Phase::service_requested;
}

// Order of checks: credentials (bound to the same customer as phase 1), service
// path, then the certificate. Credential failures stay generic; path and
// certificate failures are reported specifically.
inline Verdict server_verify_phase2(SessionState& state, ByteView payload, const vault::Registry& registry,
                                    std::int64_t now, RandomSource& rng) {
  require_phase(state, Phase::service_requested, "Phase2Auth");
  const auto key = state.session_keys().k_phase2;
  Verdict v;
  std::string_view why = reason::auth_failed;

  auto opened = detail::open_and_bind(payload, key, *state.server_nonce);
  if (!opened.creds) {
    v.outcome = opened.failure;
  } else {
    v.customer_id =
        registry.check_credentials(vault::CredentialKind::service, opened.creds->user, opened.creds->pass);
    const vault::CustomerRecord* record = v.customer_id ? registry.find(*v.customer_id) : nullptr;
    if (!record) {
      v.outcome = AuthOutcome::bad_credentials;
    } else if (!state.tunnel_customer || *state.tunnel_customer != record->customer_id) {
      v.outcome = AuthOutcome::customer_mismatch;
    } else if (!state.requested_path || *state.requested_path != record->space_path) {
      v.outcome = AuthOutcome::path_mismatch;
      why = reason::unknown_path;
    } else {
      v.certificate = vault::check_certificate(record->certificate, now);
      switch (*v.certificate) {
        case vault::CertificateVerdict::valid: v.outcome = AuthOutcome::accepted; break;
        case vault::CertificateVerdict::expired: why = reason::cert_expired; break;
        case vault::CertificateVerdict::revoked: why = reason::cert_revoked; break;
        case vault::CertificateVerdict::rights_missing: why = reason::rights_missing; break;
      }
      if (v.outcome != AuthOutcome::accepted) v.outcome = AuthOutcome::certificate_rejected;
    }
  }

  if (v.outcome == AuthOutcome::accepted) {
    v.reply = detail::result_frame(MessageType::phase2_result, {true, {}}, key, rng);
    state.customer_id = v.customer_id;
    state.phase = Phase::session_active;
  } else {
    v.reply = detail::result_frame(MessageType::phase2_result, {false, std::string(why)}, key, rng);
    state.close();
  }
  return v;
}

}  // namespace csg::proto
