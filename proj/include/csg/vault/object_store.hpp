// SPDX-License-Identifier: Apache-2.0
//
// Per-customer encrypted object store.
//
//   <root>/<customer_id>/<name>        object files
//   <root>/.index/<customer_id>.json   plaintext byte counts used for quota
//   <root>/.tmp/                       staging area for atomic replacement
//
// Object file layout (big-endian):
//   "CSG1" | 0x01 | IV (16) | ciphertext length (8) | AES-128-CBC ciphertext
#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <vector>

#include "csg/cbc.hpp"
#include "csg/keyx.hpp"
#include "csg/vault/names.hpp"

namespace csg::vault {

inline constexpr std::string_view kObjectMagic = "CSG1";
inline constexpr std::uint8_t kObjectVersion = 0x01;
inline constexpr std::size_t kObjectHeaderSize = 4 + 1 + 16 + 8;

// First 16 bytes of SHA-256(master_key || customer_id || "storage").
inline aes::CipherKey storage_key(const aes::CipherKey& master_key, std::string_view customer_id) {
  return keyx::truncated_hash_key(ByteView(master_key.bytes), customer_id, std::string_view("storage"));
}

inline Bytes encode_object(ByteView plaintext, const aes::CipherKey& key, const aes::Block& iv) {
  Bytes ct = aes::cbc_encrypt(plaintext, key, iv);
  ByteView magic = as_bytes(kObjectMagic);
  Bytes out(magic.begin(), magic.end());
  out.reserve(kObjectHeaderSize + ct.size());
  put_u8(out, kObjectVersion);
  put_bytes(out, iv);
  put_u64(out, ct.size());
  put_bytes(out, ct);
  return out;
}

struct ObjectHeader {
  aes::Block iv{};
  std::uint64_t ciphertext_length = 0;
};

// Validates magic, version and the length invariants against the full file size.
inline ObjectHeader parse_object_header(ByteView head, std::uint64_t file_size) {
  if (head.size() < kObjectHeaderSize || file_size < kObjectHeaderSize)
    throw Error(Errc::corrupt_object, "object shorter than its header");
  ByteReader r(head.first(kObjectHeaderSize));
  if (to_string(r.take(4)) != kObjectMagic) throw Error(Errc::corrupt_object, "bad object magic");
  if (r.u8() != kObjectVersion) throw Error(Errc::corrupt_object, "unsupported object version");
  ObjectHeader h;
  h.iv = r.fixed<16>();
  h.ciphertext_length = r.u64();
  if (h.ciphertext_length == 0 || h.ciphertext_length % aes::kBlockSize != 0 ||
      h.ciphertext_length != file_size - kObjectHeaderSize)
    throw Error(Errc::corrupt_object, "object length does not match header");
  return h;
}

inline Bytes decode_object(ByteView file, const aes::CipherKey& key) {
  ObjectHeader h = parse_object_header(file, file.size());
  try {
    return aes::cbc_decrypt(file.subspan(kObjectHeaderSize), key, h.iv);
  } catch (const Error& e) {
    throw Error(Errc::corrupt_object, std::string("object does not decrypt: ") + e.what());
  }
}

class ObjectStore {
 public:
  // Recomputes every customer's usage from the object headers on open.
  ObjectStore(std::filesystem::path root, const aes::CipherKey& master_key, RandomSource& rng = system_random())
      : root_(std::move(root)), master_key_(master_key), rng_(rng) {
    std::error_code ec;
    std::filesystem::create_directories(root_ / ".tmp", ec);
    if (!ec) std::filesystem::create_directories(root_ / ".index", ec);
    if (ec) throw Error(Errc::io, "cannot prepare object root " + root_.string() + ": " + ec.message());
    for (const auto& leftover : std::filesystem::directory_iterator(root_ / ".tmp"))
      std::filesystem::remove(leftover.path(), ec);
    rescan();
  }

  ~ObjectStore() { master_key_.wipe(); }

  ObjectStore(const ObjectStore&) = delete;
  ObjectStore& operator=(const ObjectStore&) = delete;

  const std::filesystem::path& root() const { return root_; }

  std::filesystem::path space_dir(std::string_view customer_id) const { return root_ / std::string(customer_id); }

  // Creates the customer's space directory if it does not exist yet.
  void open_space(std::string_view customer_id) {
    check_customer(customer_id);
    std::unique_lock lock(mutex_);
    std::error_code ec;
    std::filesystem::create_directories(space_dir(customer_id), ec);
    if (ec) throw Error(Errc::io, "cannot create space for " + std::string(customer_id) + ": " + ec.message());
  }

  void put(std::string_view customer_id, std::string_view name, ByteView plaintext, std::uint64_t quota_bytes) {
    check_customer(customer_id);
    if (!is_valid_object_name(name)) throw Error(Errc::invalid_name, "invalid object name");

    std::unique_lock lock(mutex_);
    auto& sizes = usage_[std::string(customer_id)];
    std::uint64_t total = 0;
    for (const auto& [n, sz] : sizes) total += sz;
    auto existing = sizes.find(std::string(name));
    if (existing != sizes.end()) total -= existing->second;
    if (total + plaintext.size() > quota_bytes) throw Error(Errc::quota_exceeded, "quota exceeded");

    auto key = storage_key(master_key_, customer_id);
    Bytes file = encode_object(plaintext, key, rng_.array<aes::kBlockSize>());
    key.wipe();

    auto dir = space_dir(customer_id);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(Errc::io, "cannot create space directory: " + ec.message());
    write_atomically(dir / std::string(name), file);

    sizes[std::string(name)] = plaintext.size();
    write_index(customer_id, sizes);
  }

  Bytes get(std::string_view customer_id, std::string_view name) const {
    check_customer(customer_id);
    if (!is_valid_object_name(name)) throw Error(Errc::invalid_name, "invalid object name");
    std::shared_lock lock(mutex_);
    auto path = space_dir(customer_id) / std::string(name);
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) throw Error(Errc::no_such_object, "no such object");
    Bytes file = read_file(path);
    auto key = storage_key(master_key_, customer_id);
    Bytes out;
    try {
      out = decode_object(file, key);
    } catch (...) {
      key.wipe();
      throw;
    }
    key.wipe();
    return out;
  }

  // Names in lexicographic byte order.
  std::vector<std::string> list(std::string_view customer_id) const {
    check_customer(customer_id);
    std::shared_lock lock(mutex_);
    std::vector<std::string> names;
    std::error_code ec;
    std::filesystem::directory_iterator it(space_dir(customer_id), ec), end;
    if (ec) throw Error(Errc::io, "cannot list space of " + std::string(customer_id) + ": " + ec.message());
    for (; it != end; it.increment(ec)) {
      if (ec) throw Error(Errc::io, "error while listing space: " + ec.message());
      if (it->is_regular_file(ec)) names.push_back(it->path().filename().string());
    }
    std::sort(names.begin(), names.end());
    return names;
  }

  // Plaintext bytes currently counted against the customer's quota.
  std::uint64_t usage(std::string_view customer_id) const {
    std::shared_lock lock(mutex_);
    auto it = usage_.find(std::string(customer_id));
    if (it == usage_.end()) return 0;
    std::uint64_t total = 0;
    for (const auto& [n, sz] : it->second) total += sz;
    return total;
  }

  std::filesystem::path index_path(std::string_view customer_id) const {
    return root_ / ".index" / (std::string(customer_id) + ".json");
  }

 private:
  using SizeMap = std::map<std::string, std::uint64_t>;

  static void check_customer(std::string_view customer_id) {
    if (!is_valid_customer_id(customer_id)) throw Error(Errc::invalid_name, "invalid customer id");
  }

  static Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io, "cannot open object");
    Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw Error(Errc::io, "cannot read object");
    return data;
  }

  void write_atomically(const std::filesystem::path& target, ByteView data) {
    auto tmp = root_ / ".tmp" / to_hex(rng_.array<8>());
    int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0600);
    if (fd < 0) throw Error(Errc::io, "cannot create staging file");
    std::size_t done = 0;
    bool ok = true;
    while (done < data.size()) {
      ssize_t n = ::write(fd, data.data() + done, data.size() - done);
      if (n < 0) {
        if (errno == EINTR) continue;
        ok = false;
        break;
      }
      done += static_cast<std::size_t>(n);
    }
    ok = ok && ::fsync(fd) == 0;
    ok = (::close(fd) == 0) && ok;
    std::error_code ec;
    if (ok) std::filesystem::rename(tmp, target, ec);
    if (!ok || ec) {
      std::filesystem::remove(tmp, ec);
      throw Error(Errc::io, "cannot write object " + target.filename().string());
    }
  }

  void write_index(std::string_view customer_id, const SizeMap& sizes) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, size] : sizes) j[name] = size;
    std::string text = j.dump();
    write_atomically(index_path(customer_id), as_bytes(text));
  }

  // Plaintext length from the header plus the final ciphertext block.
  std::uint64_t plaintext_length(const std::filesystem::path& path, std::string_view customer_id) const {
    std::ifstream in(path, std::ios::binary);
    auto file_size = std::filesystem::file_size(path);
    Bytes head(kObjectHeaderSize);
    in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
    if (!in) throw Error(Errc::corrupt_object, "short object");
    ObjectHeader h = parse_object_header(head, file_size);

    aes::Block prev = h.iv;
    if (h.ciphertext_length > aes::kBlockSize) {
      in.seekg(static_cast<std::streamoff>(file_size - 2 * aes::kBlockSize));
      in.read(reinterpret_cast<char*>(prev.data()), aes::kBlockSize);
    }
    aes::Block last{};
    in.seekg(static_cast<std::streamoff>(file_size - aes::kBlockSize));
    in.read(reinterpret_cast<char*>(last.data()), aes::kBlockSize);
    if (!in) throw Error(Errc::corrupt_object, "short object");
    auto key = storage_key(master_key_, customer_id);
    Bytes tail = aes::cbc_decrypt(last, key, prev);
    key.wipe();
    return h.ciphertext_length - (aes::kBlockSize - tail.size());
  }

  void rescan() {
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(root_, ec)) {
      auto customer = entry.path().filename().string();
      if (!entry.is_directory() || !is_valid_customer_id(customer)) continue;
      SizeMap sizes;
      for (const auto& obj : std::filesystem::directory_iterator(entry.path(), ec)) {
        if (!obj.is_regular_file() || !is_valid_object_name(obj.path().filename().string())) continue;
        std::uint64_t size;
        try {
          size = plaintext_length(obj.path(), customer);
        } catch (const Error&) {
          // Unreadable objects still occupy space; count the ciphertext.
          size = obj.file_size(ec);
        }
        sizes[obj.path().filename().string()] = size;
      }
      write_index(customer, sizes);
      usage_[customer] = std::move(sizes);
    }
    if (ec) throw Error(Errc::io, "cannot scan object root: " + ec.message());
  }

  std::filesystem::path root_;
  aes::CipherKey master_key_;
  RandomSource& rng_;
  // A single store-wide lock: writers exclusive, readers shared.
  mutable std::shared_mutex mutex_;
  std::map<std::string, SizeMap> usage_;
};

}  // namespace csg::vault
