// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>

#include "csg/aes.hpp"
#include "csg/bytes.hpp"
#include "csg/random.hpp"

namespace csg::aes {

// PKCS#7: append n copies of n, 1 <= n <= 16.
inline Bytes pad(ByteView data) {
  std::size_t n = kBlockSize - data.size() % kBlockSize;
  Bytes out(data.begin(), data.end());
  out.insert(out.end(), n, static_cast<std::uint8_t>(n));
  return out;
}

inline Bytes unpad(ByteView data) {
  if (data.empty() || data.size() % kBlockSize != 0)
    throw Error(Errc::length, "padded data must be a positive multiple of 16 bytes");
  std::size_t n = data.back();
  if (n == 0 || n > kBlockSize || n > data.size()) throw Error(Errc::padding, "invalid padding length");
  // Inspect the whole final block so the work done does not depend on n.
  std::uint8_t bad = 0;
  for (std::size_t i = 1; i <= kBlockSize; ++i) {
    std::uint8_t expect_pad = i <= n ? 0xff : 0x00;
    bad |= expect_pad & (data[data.size() - i] ^ static_cast<std::uint8_t>(n));
  }
  if (bad != 0) throw Error(Errc::padding, "invalid padding bytes");
  return Bytes(data.begin(), data.end() - static_cast<std::ptrdiff_t>(n));
}

inline Bytes cbc_encrypt(ByteView plaintext, const KeySchedule& ks, const Block& iv) {
  Bytes out = pad(plaintext);
  Block chain = iv;
  for (std::size_t off = 0; off < out.size(); off += kBlockSize) {
    for (std::size_t i = 0; i < kBlockSize; ++i) chain[i] ^= out[off + i];
    chain = encrypt_block(chain, ks);
    std::copy(chain.begin(), chain.end(), out.begin() + static_cast<std::ptrdiff_t>(off));
  }
  return out;
}

inline Bytes cbc_encrypt(ByteView plaintext, const CipherKey& key, const Block& iv) {
  return cbc_encrypt(plaintext, KeySchedule(key), iv);
}

inline Bytes cbc_decrypt(ByteView ciphertext, const KeySchedule& ks, const Block& iv) {
  if (ciphertext.empty() || ciphertext.size() % kBlockSize != 0)
    throw Error(Errc::length, "ciphertext must be a positive multiple of 16 bytes");
  Bytes out(ciphertext.size());
  Block prev = iv;
  for (std::size_t off = 0; off < ciphertext.size(); off += kBlockSize) {
    Block c{};
    std::copy_n(ciphertext.begin() + static_cast<std::ptrdiff_t>(off), kBlockSize, c.begin());
    Block p = decrypt_block(c, ks);
    for (std::size_t i = 0; i < kBlockSize; ++i) out[off + i] = p[i] ^ prev[i];
    prev = c;
  }
  return unpad(out);
}

inline Bytes cbc_decrypt(ByteView ciphertext, const CipherKey& key, const Block& iv) {
  return cbc_decrypt(ciphertext, KeySchedule(key), iv);
}

// IV || ciphertext with a fresh IV; the envelope used for every encrypted wire payload.
inline Bytes seal(ByteView plaintext, const CipherKey& key, RandomSource& rng) {
  auto iv = rng.array<kBlockSize>();
  Bytes out(iv.begin(), iv.end());
  put_bytes(out, cbc_encrypt(plaintext, key, iv));
  return out;
}

inline Bytes open(ByteView sealed, const CipherKey& key) {
  if (sealed.size() < 2 * kBlockSize)
    throw Error(Errc::length, "sealed payload shorter than IV plus one block");
  Block iv{};
  std::copy_n(sealed.begin(), kBlockSize, iv.begin());
  return cbc_decrypt(sealed.subspan(kBlockSize), key, iv);
}

}  // namespace csg::aes
