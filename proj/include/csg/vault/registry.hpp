// SPDX-License-Identifier: Apache-2.0
//
// Customer registry: both credential pairs, the provisioned space path, the
// contract certificate and the storage quota of every customer. Stored as UTF-8
// text, one JSON object per line, binary fields as lowercase hex.
#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "csg/bytes.hpp"
#include "csg/keyx.hpp"
#include "csg/vault/names.hpp"

namespace csg::vault {

struct Certificate {
  std::string customer_id;
  std::int64_t issued_at = 0;
  std::int64_t last_update = 0;
  std::int64_t expiry_date = 0;
  std::vector<std::string> rights;
  bool revoked = false;

  friend bool operator==(const Certificate&, const Certificate&) = default;

  bool well_formed() const { return issued_at <= last_update && last_update <= expiry_date; }
};

enum class CertificateVerdict { valid, expired, revoked, rights_missing };

inline std::string_view verdict_name(CertificateVerdict v) {
  switch (v) {
    case CertificateVerdict::valid: return "valid";
    case CertificateVerdict::expired: return "expired";
    case CertificateVerdict::revoked: return "revoked";
    case CertificateVerdict::rights_missing: return "rights-missing";
  }
  return "unknown";
}

inline constexpr std::string_view kStorageRight = "storage";

// Precedence: revoked, then expired (inclusive of expiry_date), then missing right.
inline CertificateVerdict check_certificate(const Certificate& cert, std::int64_t now) {
  if (cert.revoked) return CertificateVerdict::revoked;
  if (now >= cert.expiry_date) return CertificateVerdict::expired;
  if (std::find(cert.rights.begin(), cert.rights.end(), kStorageRight) == cert.rights.end())
    return CertificateVerdict::rights_missing;
  return CertificateVerdict::valid;
}

struct CustomerRecord {
  std::string customer_id;
  std::string tunnel_user;
  keyx::Salt tunnel_salt{};
  Digest tunnel_hash{};
  std::string service_user;
  keyx::Salt service_salt{};
  Digest service_hash{};
  std::string space_path;
  Certificate certificate;
  std::uint64_t quota_bytes = 0;

  friend bool operator==(const CustomerRecord&, const CustomerRecord&) = default;
};

enum class CredentialKind { tunnel, service };

// Builds a record with fresh salts, hashing both passwords.
inline CustomerRecord make_customer(std::string customer_id, std::string tunnel_user, std::string_view tunnel_pass,
                                    std::string service_user, std::string_view service_pass, std::string space_path,
                                    Certificate certificate, std::uint64_t quota_bytes,
                                    RandomSource& rng = system_random()) {
  CustomerRecord r;
  r.customer_id = std::move(customer_id);
  r.tunnel_user = std::move(tunnel_user);
  r.tunnel_salt = rng.array<16>();
  r.tunnel_hash = keyx::hash_password(tunnel_pass, r.tunnel_salt);
  r.service_user = std::move(service_user);
  r.service_salt = rng.array<16>();
  r.service_hash = keyx::hash_password(service_pass, r.service_salt);
  r.space_path = std::move(space_path);
  r.certificate = std::move(certificate);
  if (r.certificate.customer_id.empty()) r.certificate.customer_id = r.customer_id;
  r.quota_bytes = quota_bytes;
  return r;
}

class Registry {
 public:
  void add(CustomerRecord record) {
    if (!is_valid_customer_id(record.customer_id))
      throw Error(Errc::parse, "invalid customer_id \"" + record.customer_id + "\"");
    if (by_customer_.count(record.customer_id))
      throw Error(Errc::duplicate_user, "duplicate customer_id \"" + record.customer_id + "\"");
    if (by_tunnel_user_.count(record.tunnel_user))
      throw Error(Errc::duplicate_user, "duplicate tunnel_user \"" + record.tunnel_user + "\"");
    if (by_service_user_.count(record.service_user))
      throw Error(Errc::duplicate_user, "duplicate service_user \"" + record.service_user + "\"");
    std::size_t idx = records_.size();
    by_customer_.emplace(record.customer_id, idx);
    by_tunnel_user_.emplace(record.tunnel_user, idx);
    by_service_user_.emplace(record.service_user, idx);
    records_.push_back(std::move(record));
  }

  const std::vector<CustomerRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  const CustomerRecord* find(std::string_view customer_id) const {
    auto it = by_customer_.find(std::string(customer_id));
    return it == by_customer_.end() ? nullptr : &records_[it->second];
  }

  // Returns the customer_id on success; nullopt means AuthFailed. The password is
  // hashed and compared even for unknown users so both failures cost the same.
  std::optional<std::string> check_credentials(CredentialKind kind, std::string_view user,
                                               std::string_view pass,
                                               unsigned iterations = keyx::kDefaultIterations) const {
    const auto& index = kind == CredentialKind::tunnel ? by_tunnel_user_ : by_service_user_;
    auto it = index.find(std::string(user));
    const CustomerRecord* record = it == index.end() ? nullptr : &records_[it->second];

    const auto& [salt, stored] = record ? (kind == CredentialKind::tunnel
                                               ? std::pair{record->tunnel_salt, record->tunnel_hash}
                                               : std::pair{record->service_salt, record->service_hash})
                                        : dummy();
    Digest computed = keyx::hash_password(pass, salt, iterations);
    bool match = constant_time_equal(computed, stored);
    secure_wipe(computed);
    if (record == nullptr || !match) return std::nullopt;
    return record->customer_id;
  }

 private:
  static const std::pair<keyx::Salt, Digest>& dummy() {
    static const std::pair<keyx::Salt, Digest> d = [] {
      keyx::Salt salt = system_random().array<16>();
      auto pw = system_random().array<16>();
      return std::pair{salt, keyx::hash_password(to_hex(pw), salt)};
    }();
    return d;
  }

  std::vector<CustomerRecord> records_;
  std::unordered_map<std::string, std::size_t> by_customer_;
  std::unordered_map<std::string, std::size_t> by_tunnel_user_;
  std::unordered_map<std::string, std::size_t> by_service_user_;
};

// JSON codec ---------------------------------------------------------------

inline nlohmann::json to_json(const Certificate& c) {
  return {{"customer_id", c.customer_id}, {"issued_at", c.issued_at},     {"last_update", c.last_update},
          {"expiry_date", c.expiry_date}, {"rights", c.rights},          {"revoked", c.revoked}};
}

inline nlohmann::json to_json(const CustomerRecord& r) {
  return {{"customer_id", r.customer_id},
          {"tunnel_user", r.tunnel_user},
          {"tunnel_salt", to_hex(r.tunnel_salt)},
          {"tunnel_hash", to_hex(r.tunnel_hash)},
          {"service_user", r.service_user},
          {"service_salt", to_hex(r.service_salt)},
          {"service_hash", to_hex(r.service_hash)},
          {"space_path", r.space_path},
          {"certificate", to_json(r.certificate)},
          {"quota_bytes", r.quota_bytes}};
}

namespace detail {

template <std::size_t N>
std::array<std::uint8_t, N> hex_field(const nlohmann::json& j, const char* key) {
  auto v = fixed_from_hex<N>(j.at(key).get<std::string>());
  if (!v) throw Error(Errc::parse, std::string("field ") + key + " must be " + std::to_string(2 * N) + " hex digits");
  return *v;
}

}  // namespace detail

inline Certificate certificate_from_json(const nlohmann::json& j) {
  Certificate c;
  c.customer_id = j.at("customer_id").get<std::string>();
  c.issued_at = j.at("issued_at").get<std::int64_t>();
  c.last_update = j.at("last_update").get<std::int64_t>();
  c.expiry_date = j.at("expiry_date").get<std::int64_t>();
  c.rights = j.at("rights").get<std::vector<std::string>>();
  c.revoked = j.at("revoked").get<bool>();
  return c;
}

inline CustomerRecord record_from_json(const nlohmann::json& j) {
  CustomerRecord r;
  r.customer_id = j.at("customer_id").get<std::string>();
  r.tunnel_user = j.at("tunnel_user").get<std::string>();
  r.tunnel_salt = detail::hex_field<16>(j, "tunnel_salt");
  r.tunnel_hash = detail::hex_field<32>(j, "tunnel_hash");
  r.service_user = j.at("service_user").get<std::string>();
  r.service_salt = detail::hex_field<16>(j, "service_salt");
  r.service_hash = detail::hex_field<32>(j, "service_hash");
  r.space_path = j.at("space_path").get<std::string>();
  r.certificate = certificate_from_json(j.at("certificate"));
  r.quota_bytes = j.at("quota_bytes").get<std::uint64_t>();
  return r;
}

inline Registry parse_registry(std::istream& in) {
  Registry reg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto where = [&] { return "registry line " + std::to_string(line_no) + ": "; };
    CustomerRecord record;
    try {
      record = record_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::parse, where() + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), where() + e.what());
    }
    try {
      reg.add(std::move(record));
    } catch (const Error& e) {
      throw Error(e.code(), where() + e.what());
    }
  }
  return reg;
}

inline Registry load_registry(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot read registry " + path.string());
  return parse_registry(in);
}

inline std::string serialize_registry(const Registry& reg) {
  std::string out;
  for (const auto& r : reg.records()) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

inline void save_registry(const Registry& reg, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << serialize_registry(reg);
    if (!out.flush()) throw Error(Errc::io, "cannot write registry " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(Errc::io, "cannot replace registry " + path.string() + ": " + ec.message());
}

}  // namespace csg::vault
