// SPDX-License-Identifier: Apache-2.0
//
// AES-128 block cipher.
//
// The state is the 16-byte table laid out column-major: byte index = row + 4 * column.
// Encryption is an initial AddRoundKey, nine full rounds (SubBytes, ShiftRows,
// MixColumns, AddRoundKey) and a final round without MixColumns. Decryption runs
// the rounds backwards using the untransformed round keys.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "csg/bytes.hpp"

namespace csg::aes {

inline constexpr std::size_t kBlockSize = 16;
inline constexpr std::size_t kKeySize = 16;
inline constexpr int kRounds = 10;

using Block = std::array<std::uint8_t, kBlockSize>;

struct CipherKey {
  std::array<std::uint8_t, kKeySize> bytes{};

  friend bool operator==(const CipherKey&, const CipherKey&) = default;

  void wipe() { secure_wipe(bytes); }
};

namespace detail {

constexpr std::uint8_t xtime(std::uint8_t x) {
  return static_cast<std::uint8_t>((x << 1) ^ ((x & 0x80) ? 0x1b : 0x00));
}

// Multiplication in GF(2^8) modulo x^8 + x^4 + x^3 + x + 1.
constexpr std::uint8_t gmul(std::uint8_t a, std::uint8_t b) {
  std::uint8_t product = 0;
  while (b != 0) {
    if (b & 1) product ^= a;
    a = xtime(a);
    b >>= 1;
  }
  return product;
}

// x^254 is the multiplicative inverse of x (and maps 0 to 0).
constexpr std::uint8_t ginv(std::uint8_t x) {
  std::uint8_t result = 1;
  std::uint8_t base = x;
  unsigned e = 254;
  while (e != 0) {
    if (e & 1) result = gmul(result, base);
    base = gmul(base, base);
    e >>= 1;
  }
  return result;
}

constexpr std::uint8_t rotl8(std::uint8_t x, int n) {
  return static_cast<std::uint8_t>((x << n) | (x >> (8 - n)));
}

constexpr std::array<std::uint8_t, 256> make_sbox() {
  std::array<std::uint8_t, 256> box{};
  for (int i = 0; i < 256; ++i) {
    auto inv = ginv(static_cast<std::uint8_t>(i));
    box[i] = inv ^ rotl8(inv, 1) ^ rotl8(inv, 2) ^ rotl8(inv, 3) ^ rotl8(inv, 4) ^ 0x63;
  }
  return box;
}

constexpr std::array<std::uint8_t, 256> invert(const std::array<std::uint8_t, 256>& box) {
  std::array<std::uint8_t, 256> inv{};
  for (int i = 0; i < 256; ++i) inv[box[i]] = static_cast<std::uint8_t>(i);
  return inv;
}

}  // namespace detail

inline constexpr std::array<std::uint8_t, 256> kSbox = detail::make_sbox();
inline constexpr std::array<std::uint8_t, 256> kInvSbox = detail::invert(kSbox);

static_assert(kSbox[0x00] == 0x63 && kSbox[0x53] == 0xed);

// Expanded round keys TK[0..10]; immutable once built.
class KeySchedule {
 public:
  static constexpr int rounds = kRounds;

  explicit KeySchedule(const CipherKey& key) {
    std::array<std::uint32_t, 4 * (kRounds + 1)> w{};
    for (int i = 0; i < 4; ++i) w[i] = load_u32(ByteView(key.bytes).subspan(4 * i, 4));

    std::uint8_t rcon = 0x01;
    for (std::size_t i = 4; i < w.size(); ++i) {
      std::uint32_t temp = w[i - 1];
      if (i % 4 == 0) {
        temp = (temp << 8) | (temp >> 24);  // RotWord
        temp = (std::uint32_t{kSbox[(temp >> 24) & 0xff]} << 24) |
               (std::uint32_t{kSbox[(temp >> 16) & 0xff]} << 16) |
               (std::uint32_t{kSbox[(temp >> 8) & 0xff]} << 8) | std::uint32_t{kSbox[temp & 0xff]};
        temp ^= std::uint32_t{rcon} << 24;
        rcon = detail::xtime(rcon);
      }
      w[i] = w[i - 4] ^ temp;
    }

    words_ = w;
    for (int r = 0; r <= kRounds; ++r) {
      for (int c = 0; c < 4; ++c) {
        std::uint32_t word = w[4 * r + c];
        round_keys_[r][4 * c + 0] = static_cast<std::uint8_t>(word >> 24);
        round_keys_[r][4 * c + 1] = static_cast<std::uint8_t>(word >> 16);
        round_keys_[r][4 * c + 2] = static_cast<std::uint8_t>(word >> 8);
        round_keys_[r][4 * c + 3] = static_cast<std::uint8_t>(word);
      }
    }
  }

  const Block& round_key(int round) const { return round_keys_[static_cast<std::size_t>(round)]; }
  std::size_t size() const { return round_keys_.size(); }

  // w[i] for i in [0, 44), each the big-endian reading of four key bytes.
  std::uint32_t word(std::size_t i) const { return words_[i]; }

 private:
  std::array<Block, kRounds + 1> round_keys_{};
  std::array<std::uint32_t, 4 * (kRounds + 1)> words_{};
};

inline KeySchedule key_expansion(const CipherKey& key) { return KeySchedule(key); }

namespace detail {

inline void add_round_key(Block& s, const Block& rk) {
  for (std::size_t i = 0; i < kBlockSize; ++i) s[i] ^= rk[i];
}

inline void sub_bytes(Block& s) {
  for (auto& b : s) b = kSbox[b];
}

inline void inv_sub_bytes(Block& s) {
  for (auto& b : s) b = kInvSbox[b];
}

// Row r rotates left by r columns.
inline void shift_rows(Block& s) {
  Block t = s;
  for (int r = 1; r < 4; ++r)
    for (int c = 0; c < 4; ++c) s[r + 4 * c] = t[r + 4 * ((c + r) % 4)];
}

inline void inv_shift_rows(Block& s) {
  Block t = s;
  for (int r = 1; r < 4; ++r)
    for (int c = 0; c < 4; ++c) s[r + 4 * ((c + r) % 4)] = t[r + 4 * c];
}

inline void mix_columns(Block& s) {
  for (int c = 0; c < 4; ++c) {
    std::uint8_t* col = &s[4 * c];
    std::uint8_t a0 = col[0], a1 = col[1], a2 = col[2], a3 = col[3];
    col[0] = xtime(a0) ^ (xtime(a1) ^ a1) ^ a2 ^ a3;
    col[1] = a0 ^ xtime(a1) ^ (xtime(a2) ^ a2) ^ a3;
    col[2] = a0 ^ a1 ^ xtime(a2) ^ (xtime(a3) ^ a3);
    col[3] = (xtime(a0) ^ a0) ^ a1 ^ a2 ^ xtime(a3);
  }
}

inline void inv_mix_columns(Block& s) {
  for (int c = 0; c < 4; ++c) {
    std::uint8_t* col = &s[4 * c];
    std::uint8_t a0 = col[0], a1 = col[1], a2 = col[2], a3 = col[3];
    col[0] = gmul(a0, 0x0e) ^ gmul(a1, 0x0b) ^ gmul(a2, 0x0d) ^ gmul(a3, 0x09);
    col[1] = gmul(a0, 0x09) ^ gmul(a1, 0x0e) ^ gmul(a2, 0x0b) ^ gmul(a3, 0x0d);
    col[2] = gmul(a0, 0x0d) ^ gmul(a1, 0x09) ^ gmul(a2, 0x0e) ^ gmul(a3, 0x0b);
    col[3] = gmul(a0, 0x0b) ^ gmul(a1, 0x0d) ^ gmul(a2, 0x09) ^ gmul(a3, 0x0e);
  }
}

inline void round(Block& s, const Block& rk) {
  sub_bytes(s);
  shift_rows(s);
  mix_columns(s);
  add_round_key(s, rk);
}

inline void final_round(Block& s, const Block& rk) {
  sub_bytes(s);
  shift_rows(s);
  add_round_key(s, rk);
}

}  // namespace detail

inline Block encrypt_block(Block state, const KeySchedule& ks) {
  detail::add_round_key(state, ks.round_key(0));
  for (int i = 1; i < kRounds; ++i) detail::round(state, ks.round_key(i));
  detail::final_round(state, ks.round_key(kRounds));
  return state;
}

inline Block decrypt_block(Block state, const KeySchedule& ks) {
  detail::add_round_key(state, ks.round_key(kRounds));
  for (int r = kRounds - 1; r > 0; --r) {
    detail::inv_shift_rows(state);
    detail::inv_sub_bytes(state);
    detail::add_round_key(state, ks.round_key(r));
    detail::inv_mix_columns(state);
  }
  detail::inv_shift_rows(state);
  detail::inv_sub_bytes(state);
  detail::add_round_key(state, ks.round_key(0));
  return state;
}

}  // namespace csg::aes
