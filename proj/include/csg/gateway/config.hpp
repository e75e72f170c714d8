// SPDX-License-Identifier: Apache-2.0
//
// Gateway configuration. Precedence: command-line flags > CSG_* environment >
// JSON config file > built-in defaults. Every error names the key and its source.
#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "csg/aes.hpp"
#include "csg/error.hpp"
#include "csg/keyx.hpp"
#include "csg/net/socket.hpp"

namespace csg::gateway {

struct GatewayConfig {
  std::string listen_addr = "127.0.0.1:9443";
  std::string registry_path;
  std::string objects_dir = "objects";
  std::string master_key_hex;
  std::string dh_group = "rfc3526-14";
  std::size_t max_sessions = 256;
  std::string audit_log = "gateway-audit.log";
  bool allow_insecure_group = false;

  aes::CipherKey master_key() const {
    auto k = fixed_from_hex<16>(master_key_hex);
    if (!k) throw Error(Errc::config, "master_key_hex: must be 32 hex digits");
    return {*k};
  }
  const keyx::DhGroup& group() const {
    const keyx::DhGroup* g = keyx::DhGroup::by_name(dh_group);
    if (!g) throw Error(Errc::config, "dh_group: unknown group " + dh_group);
    return *g;
  }
  net::HostPort listen() const { return net::parse_host_port(listen_addr); }
};

inline constexpr const char* kConfigKeys[] = {"listen_addr", "dh_group",     "registry_path", "objects_dir",
                                              "master_key_hex", "max_sessions", "audit_log"};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

inline EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    return v ? std::optional<std::string>(v) : std::nullopt;
  };
}

struct ConfigSources {
  // Keyed by config key (e.g. "listen_addr"), already mapped from CLI flag names.
  std::map<std::string, std::string> flags;
  bool allow_insecure_group = false;
  EnvLookup env = [](const std::string&) { return std::optional<std::string>{}; };
  std::optional<std::filesystem::path> file;
};

inline std::string env_name(std::string_view key) {
  std::string out = "CSG_";
  for (char c : key) out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return out;
}

namespace detail {

inline Error config_error(std::string_view key, std::string_view source, std::string_view why) {
  return Error(Errc::config, "config error: " + std::string(key) + " (from " + std::string(source) + "): " +
                                 std::string(why));
}

struct Resolved {
  std::string value;
  std::string source;
};

inline std::map<std::string, Resolved> read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::config, "config error: cannot read config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::config, "config error: " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw Error(Errc::config, "config error: " + path.string() + " must hold a JSON object");
  std::map<std::string, Resolved> out;
  const std::string source = "config file " + path.string();
  for (const auto& [key, v] : j.items()) {
    bool known = false;
    for (const char* k : kConfigKeys) known = known || key == k;
    if (!known) throw config_error(key, source, "unknown key");
    if (v.is_string())
      out[key] = {v.get<std::string>(), source};
    else if (v.is_number_unsigned())
      out[key] = {std::to_string(v.get<std::uint64_t>()), source};
    else
      throw config_error(key, source, "must be a string or a non-negative integer");
  }
  return out;
}

}  // namespace detail

inline GatewayConfig load_config(const ConfigSources& src) {
  std::map<std::string, detail::Resolved> values;
  if (src.file)
    for (auto& [k, v] : detail::read_file(*src.file)) values[k] = v;
  for (const char* key : kConfigKeys) {
    std::string name = env_name(key);
    if (auto v = src.env(name)) values[key] = {*v, "environment " + name};
  }
  for (const auto& [key, v] : src.flags) {
    bool known = false;
    for (const char* k : kConfigKeys) known = known || key == k;
    if (!known) throw detail::config_error(key, "command line", "unknown key");
    values[key] = {v, "command line"};
  }

  GatewayConfig cfg;
  cfg.allow_insecure_group = src.allow_insecure_group;
  auto take = [&](const char* key, std::string& field) {
    if (auto it = values.find(key); it != values.end()) field = it->second.value;
  };
  auto source_of = [&](const char* key) {
    auto it = values.find(key);
    return it == values.end() ? std::string("defaults") : it->second.source;
  };
  take("listen_addr", cfg.listen_addr);
  take("registry_path", cfg.registry_path);
  take("objects_dir", cfg.objects_dir);
  take("master_key_hex", cfg.master_key_hex);
  take("dh_group", cfg.dh_group);
  take("audit_log", cfg.audit_log);

  if (auto it = values.find("max_sessions"); it != values.end()) {
    const std::string& text = it->second.value;
    if (text.empty() || text.size() > 9 || text.find_first_not_of("0123456789") != std::string::npos)
      throw detail::config_error("max_sessions", it->second.source, "must be a positive integer");
    cfg.max_sessions = std::stoul(text);
  }
  if (cfg.max_sessions == 0) throw detail::config_error("max_sessions", source_of("max_sessions"), "must be at least 1");

  if (cfg.registry_path.empty()) throw detail::config_error("registry_path", source_of("registry_path"), "required");
  if (cfg.objects_dir.empty()) throw detail::config_error("objects_dir", source_of("objects_dir"), "must not be empty");
  if (cfg.audit_log.empty()) throw detail::config_error("audit_log", source_of("audit_log"), "must not be empty");
  if (!fixed_from_hex<16>(cfg.master_key_hex))
    throw detail::config_error("master_key_hex", source_of("master_key_hex"),
                               cfg.master_key_hex.empty() ? "required (32 hex digits)" : "must be exactly 32 hex digits");
  try {
    cfg.listen();
  } catch (const Error& e) {
    throw detail::config_error("listen_addr", source_of("listen_addr"), e.what());
  }
  if (!keyx::DhGroup::by_name(cfg.dh_group))
    throw detail::config_error("dh_group", source_of("dh_group"), "must be rfc3526-14 or test-small");
  if (cfg.dh_group == "test-small" && !cfg.allow_insecure_group)
    throw detail::config_error("dh_group", source_of("dh_group"),
                               "test-small is insecure; pass --allow-insecure-group to use it");
  return cfg;
}

}  // namespace csg::gateway
