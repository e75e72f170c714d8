// SPDX-License-Identifier: Apache-2.0
//
// Wire framing: 4-byte big-endian length (type byte + payload), 1 type byte, payload.
#pragma once

#include <concepts>
#include <cstdint>
#include <optional>
#include <span>

#include "csg/bytes.hpp"

namespace csg::proto {

inline constexpr std::uint32_t kMaxFrameLength = 16u * 1024 * 1024;
inline constexpr std::size_t kMaxPayload = kMaxFrameLength - 1;

enum class MessageType : std::uint8_t {
  client_hello = 0x01,
  server_hello = 0x02,
  phase1_auth = 0x03,
  phase1_result = 0x04,
  service_request = 0x05,
  phase2_auth = 0x06,
  phase2_result = 0x07,
  put = 0x08,
  put_result = 0x09,
  get = 0x0A,
  get_result = 0x0B,
  list = 0x0C,
  list_result = 0x0D,
  disconnect = 0x0E,
  error = 0x0F,
};

inline constexpr std::uint8_t kFirstType = 0x01;
inline constexpr std::uint8_t kLastType = 0x0F;

inline bool is_known_type(std::uint8_t code) { return code >= kFirstType && code <= kLastType; }

inline std::string_view type_name(MessageType t) {
  switch (t) {
    case MessageType::client_hello: return "ClientHello";
    case MessageType::server_hello: return "ServerHello";
    case MessageType::phase1_auth: return "Phase1Auth";
    case MessageType::phase1_result: return "Phase1Result";
    case MessageType::service_request: return "ServiceRequest";
    case MessageType::phase2_auth: return "Phase2Auth";
    case MessageType::phase2_result: return "Phase2Result";
    case MessageType::put: return "Put";
    case MessageType::put_result: return "PutResult";
    case MessageType::get: return "Get";
    case MessageType::get_result: return "GetResult";
    case MessageType::list: return "List";
    case MessageType::list_result: return "ListResult";
    case MessageType::disconnect: return "Disconnect";
    case MessageType::error: return "Error";
  }
  return "Unknown";
}

struct Frame {
  MessageType type{};
  Bytes payload;

  friend bool operator==(const Frame&, const Frame&) = default;
};

inline Bytes encode_frame(MessageType type, ByteView payload) {
  if (payload.size() > kMaxPayload) throw Error(Errc::frame_too_large, "payload exceeds the 16 MiB frame cap");
  Bytes out;
  out.reserve(5 + payload.size());
  put_u32(out, static_cast<std::uint32_t>(payload.size() + 1));
  put_u8(out, static_cast<std::uint8_t>(type));
  put_bytes(out, payload);
  return out;
}

inline Bytes encode_frame(const Frame& f) { return encode_frame(f.type, f.payload); }

// Anything that yields bytes: read_some returns 0 only at end of stream.
template <typename S>
concept ByteSource = requires(S& s, std::span<std::uint8_t> buf) {
  { s.read_some(buf) } -> std::convertible_to<std::size_t>;
};

class SpanSource {
 public:
  explicit SpanSource(ByteView data) : data_(data) {}

  std::size_t read_some(std::span<std::uint8_t> out) {
    std::size_t n = std::min(out.size(), data_.size() - pos_);
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(pos_), n, out.begin());
    pos_ += n;
    return n;
  }

  std::size_t position() const { return pos_; }
  bool exhausted() const { return pos_ == data_.size(); }

 private:
  ByteView data_;
  std::size_t pos_ = 0;
};

namespace detail {

// Number of bytes actually read; short only at end of stream.
template <ByteSource S>
std::size_t read_full(S& src, std::span<std::uint8_t> out) {
  std::size_t done = 0;
  while (done < out.size()) {
    std::size_t n = src.read_some(out.subspan(done));
    if (n == 0) break;
    done += n;
  }
  return done;
}

}  // namespace detail

// Reads one frame. Returns nullopt when the stream ends cleanly on a frame boundary.
// The whole declared frame is consumed before the type is checked, so the source
// always ends up positioned at the next frame.
template <ByteSource S>
std::optional<Frame> read_frame(S& src) {
  std::array<std::uint8_t, 4> header{};
  std::size_t got = detail::read_full(src, header);
  if (got == 0) return std::nullopt;
  if (got < header.size()) throw Error(Errc::truncated_frame, "stream ended inside a frame header");
  std::uint32_t length = load_u32(header);
  if (length > kMaxFrameLength) throw Error(Errc::frame_too_large, "declared frame length over the 16 MiB cap");
  if (length == 0) throw Error(Errc::truncated_frame, "frame too short to hold a type byte");

  std::uint8_t code = 0;
  if (detail::read_full(src, std::span(&code, 1)) != 1) throw Error(Errc::truncated_frame, "stream ended before the type byte");
  // Grow as bytes arrive so a lying header cannot force a 16 MiB allocation up front.
  constexpr std::size_t kChunk = 64 * 1024;
  const std::size_t want = length - 1;
  Bytes payload;
  while (payload.size() < want) {
    std::size_t old = payload.size();
    std::size_t step = std::min(kChunk, want - old);
    payload.resize(old + step);
    if (detail::read_full(src, std::span(payload).subspan(old, step)) != step)
      throw Error(Errc::truncated_frame, "stream ended inside a frame payload");
  }
  if (!is_known_type(code)) throw Error(Errc::unknown_type, "unknown message type " + std::to_string(code));
  return Frame{static_cast<MessageType>(code), std::move(payload)};
}

template <ByteSource S>
Frame decode_frame(S& src) {
  auto f = read_frame(src);
  if (!f) throw Error(Errc::truncated_frame, "stream ended before a frame");
  return std::move(*f);
}

inline Frame decode_frame(ByteView bytes) {
  SpanSource src(bytes);
  return decode_frame(src);
}

}  // namespace csg::proto
