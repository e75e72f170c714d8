// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace csg {

enum class Errc {
  padding,
  length,
  entropy,
  invalid_public_key,
  frame_too_large,
  truncated_frame,
  unknown_type,
  malformed,
  protocol_order,
  version_mismatch,
  replay_detected,
  auth_failed,
  parse,
  duplicate_user,
  invalid_name,
  quota_exceeded,
  no_such_object,
  corrupt_object,
  io,
  config,
  connection,
};

inline std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::padding: return "PaddingError";
    case Errc::length: return "LengthError";
    case Errc::entropy: return "EntropyError";
    case Errc::invalid_public_key: return "InvalidPublicKey";
    case Errc::frame_too_large: return "FrameTooLarge";
    case Errc::truncated_frame: return "TruncatedFrame";
    case Errc::unknown_type: return "UnknownType";
    case Errc::malformed: return "MalformedPayload";
    case Errc::protocol_order: return "ProtocolOrderError";
    case Errc::version_mismatch: return "VersionMismatch";
    case Errc::replay_detected: return "ReplayDetected";
    case Errc::auth_failed: return "AuthFailed";
    case Errc::parse: return "ParseError";
    case Errc::duplicate_user: return "DuplicateUser";
    case Errc::invalid_name: return "InvalidName";
    case Errc::quota_exceeded: return "QuotaExceeded";
    case Errc::no_such_object: return "NoSuchObject";
    case Errc::corrupt_object: return "CorruptObject";
    case Errc::io: return "IoError";
    case Errc::config: return "ConfigError";
    case Errc::connection: return "ConnectionError";
  }
  return "Error";
}

// Every failure in the library surfaces as this exception; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace csg
