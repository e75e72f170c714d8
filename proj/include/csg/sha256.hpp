// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <cstring>

#include "csg/bytes.hpp"

namespace csg {

using Digest = std::array<std::uint8_t, 32>;

class Sha256 {
 public:
  Sha256() { reset(); }

  void reset() {
    state_ = {0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
              0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19};
    buffered_ = 0;
    total_bits_ = 0;
  }

  Sha256& update(ByteView data) {
    total_bits_ += static_cast<std::uint64_t>(data.size()) * 8;
    std::size_t i = 0;
    if (buffered_ > 0) {
      std::size_t take = std::min(data.size(), 64 - buffered_);
      std::memcpy(buffer_.data() + buffered_, data.data(), take);
      buffered_ += take;
      i = take;
      if (buffered_ < 64) return *this;
      compress(buffer_.data());
      buffered_ = 0;
    }
    for (; i + 64 <= data.size(); i += 64) compress(data.data() + i);
    if (i < data.size()) {
      buffered_ = data.size() - i;
      std::memcpy(buffer_.data(), data.data() + i, buffered_);
    }
    return *this;
  }

  Sha256& update(std::string_view s) { return update(as_bytes(s)); }

  Digest finish() {
    std::uint64_t bits = total_bits_;
    std::array<std::uint8_t, 72> tail{};
    std::size_t pad_len = (buffered_ < 56) ? (56 - buffered_) : (120 - buffered_);
    tail[0] = 0x80;
    for (int k = 0; k < 8; ++k) tail[pad_len + k] = static_cast<std::uint8_t>(bits >> (56 - 8 * k));
    update(ByteView(tail.data(), pad_len + 8));
    Digest out{};
    for (int k = 0; k < 8; ++k) {
      out[4 * k + 0] = static_cast<std::uint8_t>(state_[k] >> 24);
      out[4 * k + 1] = static_cast<std::uint8_t>(state_[k] >> 16);
      out[4 * k + 2] = static_cast<std::uint8_t>(state_[k] >> 8);
      out[4 * k + 3] = static_cast<std::uint8_t>(state_[k]);
    }
    reset();
    return out;
  }

 private:
  static constexpr std::array<std::uint32_t, 64> kRound = {
      0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
      0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
      0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
      0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
      0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
      0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
      0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
      0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2};

  static constexpr std::uint32_t rotr(std::uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

  void compress(const std::uint8_t* block) {
    std::array<std::uint32_t, 64> w{};
    for (int t = 0; t < 16; ++t) w[t] = load_u32(ByteView(block + 4 * t, 4));
    for (int t = 16; t < 64; ++t) {
      std::uint32_t s0 = rotr(w[t - 15], 7) ^ rotr(w[t - 15], 18) ^ (w[t - 15] >> 3);
      std::uint32_t s1 = rotr(w[t - 2], 17) ^ rotr(w[t - 2], 19) ^ (w[t - 2] >> 10);
      w[t] = w[t - 16] + s0 + w[t - 7] + s1;
    }
    auto [a, b, c, d, e, f, g, h] = state_;
    for (int t = 0; t < 64; ++t) {
      std::uint32_t t1 = h + (rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25)) + ((e & f) ^ (~e & g)) + kRound[t] + w[t];
      std::uint32_t t2 = (rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22)) + ((a & b) ^ (a & c) ^ (b & c));
      h = g;
      g = f;
      f = e;
      e = d + t1;
      d = c;
      c = b;
      b = a;
      a = t1 + t2;
    }
    state_[0] += a;
    state_[1] += b;
    state_[2] += c;
    state_[3] += d;
    state_[4] += e;
    state_[5] += f;
    state_[6] += g;
    state_[7] += h;
  }

  std::array<std::uint32_t, 8> state_{};
  std::array<std::uint8_t, 64> buffer_{};
  std::size_t buffered_ = 0;
  std::uint64_t total_bits_ = 0;
};

inline Digest sha256(ByteView data) { return Sha256().update(data).finish(); }

}  // namespace csg
