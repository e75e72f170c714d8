// SPDX-License-Identifier: Apache-2.0
//
// Symmetric-key establishment: finite-field Diffie-Hellman, derivation of the
// three session sub-keys, and salted iterated hashing for stored passwords.
#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <cstddef>
#include <iterator>
#include <string>
#include <string_view>

#include "csg/aes.hpp"
#include "csg/bytes.hpp"
#include "csg/random.hpp"
#include "csg/sha256.hpp"

namespace csg::keyx {

using BigInt = boost::multiprecision::cpp_int;
using Salt = std::array<std::uint8_t, 16>;

inline constexpr unsigned kDefaultIterations = 10'000;

inline BigInt bigint_from_bytes(ByteView be) {
  BigInt v;
  if (!be.empty()) boost::multiprecision::import_bits(v, be.begin(), be.end(), 8, true);
  return v;
}

// Minimal big-endian magnitude; zero encodes as no bytes.
inline Bytes bigint_to_bytes(const BigInt& v) {
  Bytes out;
  if (v.is_zero()) return out;
  boost::multiprecision::export_bits(v, std::back_inserter(out), 8, true);
  return out;
}

inline Bytes bigint_to_bytes(const BigInt& v, std::size_t width) {
  Bytes raw = bigint_to_bytes(v);
  if (raw.size() > width) throw Error(Errc::length, "integer wider than its field");
  Bytes out(width - raw.size(), 0);
  put_bytes(out, raw);
  return out;
}

// Left-to-right square-and-multiply.
inline BigInt mod_pow(const BigInt& base, const BigInt& exponent, const BigInt& modulus) {
  if (modulus == 1) return 0;
  BigInt result = 1;
  BigInt b = base % modulus;
  if (exponent.is_zero()) return result;
  for (auto bit = static_cast<long>(boost::multiprecision::msb(exponent)); bit >= 0; --bit) {
    result = (result * result) % modulus;
    if (boost::multiprecision::bit_test(exponent, static_cast<unsigned>(bit))) result = (result * b) % modulus;
  }
  return result;
}

struct DhGroup {
  std::string name;
  BigInt p;
  BigInt g;
  std::size_t byte_len = 0;

  bool valid() const { return p > 3 && boost::multiprecision::bit_test(p, 0) && g > 1 && g < p; }

  static DhGroup make(std::string name, BigInt p, BigInt g) {
    DhGroup group{std::move(name), std::move(p), std::move(g), 0};
    group.byte_len = bigint_to_bytes(group.p).size();
    if (!group.valid()) throw Error(Errc::config, "invalid Diffie-Hellman group");
    return group;
  }

  // 2048-bit MODP group 14 from RFC 3526, generator 2.
  static const DhGroup& rfc3526_14() {
    static const DhGroup group = make(
        "rfc3526-14",
        BigInt("0x"
               "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
               "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
               "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
               "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
               "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
               "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
               "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
               "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF"),
        2);
    return group;
  }

  // p = 23, g = 5. Offers no security; gated behind an explicit flag by the tools.
  static const DhGroup& test_small() {
    static const DhGroup group = make("test-small", 23, 5);
    return group;
  }

  static const DhGroup* by_name(std::string_view name) {
    if (name == "rfc3526-14") return &rfc3526_14();
    if (name == "test-small") return &test_small();
    return nullptr;
  }
};

struct DhKeyPair {
  BigInt private_key;
  BigInt public_key;

  void wipe() {
    private_key = 0;
    public_key = 0;
  }
};

// Builds a keypair from a chosen private exponent. Intended for tests and known-answer checks.
inline DhKeyPair dh_from_private(const DhGroup& group, const BigInt& private_key) {
  if (private_key < 2 || private_key > group.p - 2)
    throw Error(Errc::malformed, "private exponent outside [2, p-2]");
  return {private_key, mod_pow(group.g, private_key, group.p)};
}

// Private exponent uniform in [2, p-2] by rejection sampling. Exponents whose
// public value is p-1 are redrawn too: every peer must reject that value, and
// in small groups (p=23: 5^11 = 22) it is reachable.
inline DhKeyPair dh_generate(const DhGroup& group, RandomSource& rng) {
  const BigInt span = group.p - 3;  // count of values in [2, p-2]
  const auto bits = boost::multiprecision::msb(span) + 1;
  Bytes buf((bits + 7) / 8);
  const unsigned top_bits = static_cast<unsigned>(bits % 8);
  for (;;) {
    rng.fill(buf);
    if (top_bits != 0) buf[0] &= static_cast<std::uint8_t>((1u << top_bits) - 1);
    BigInt candidate = bigint_from_bytes(buf);
    if (candidate < span) {
      DhKeyPair kp = dh_from_private(group, candidate + 2);
      if (kp.public_key == group.p - 1) {
        kp.wipe();
        continue;
      }
      secure_wipe(buf);
      return kp;
    }
  }
}

inline bool is_valid_public(const DhGroup& group, const BigInt& value) {
  return value > 1 && value < group.p - 1;
}

// peer_public^private mod p, big-endian, left-padded to the group's byte length.
inline Bytes dh_shared(const DhKeyPair& own, const BigInt& peer_public, const DhGroup& group) {
  if (!is_valid_public(group, peer_public))
    throw Error(Errc::invalid_public_key, "peer public value outside (1, p-1)");
  return bigint_to_bytes(mod_pow(peer_public, own.private_key, group.p), group.byte_len);
}

struct SessionKeys {
  aes::CipherKey k_phase1;
  aes::CipherKey k_phase2;
  aes::CipherKey k_data;

  friend bool operator==(const SessionKeys&, const SessionKeys&) = default;

  void wipe() {
    k_phase1.wipe();
    k_phase2.wipe();
    k_data.wipe();
  }
};

// First 16 bytes of SHA-256(parts...).
template <typename... Parts>
aes::CipherKey truncated_hash_key(const Parts&... parts) {
  Sha256 h;
  (h.update(parts), ...);
  Digest d = h.finish();
  aes::CipherKey key;
  std::copy_n(d.begin(), key.bytes.size(), key.bytes.begin());
  secure_wipe(d);
  return key;
}

inline SessionKeys derive_keys(ByteView shared) {
  if (shared.empty()) throw Error(Errc::length, "shared secret is empty");
  return {truncated_hash_key(shared, std::string_view("phase1")),
          truncated_hash_key(shared, std::string_view("phase2")),
          truncated_hash_key(shared, std::string_view("data"))};
}

// h1 = SHA-256(salt || password), h_i = SHA-256(h_{i-1}).
inline Digest hash_password(std::string_view password, const Salt& salt, unsigned iterations = kDefaultIterations) {
  if (iterations < 1) throw Error(Errc::length, "iterations must be at least 1");
  Digest h = Sha256().update(salt).update(password).finish();
  for (unsigned i = 1; i < iterations; ++i) h = sha256(h);
  return h;
}

}  // namespace csg::keyx
