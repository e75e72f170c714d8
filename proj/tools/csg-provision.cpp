// SPDX-License-Identifier: Apache-2.0
//
// Registry maintenance for the gateway operator.
//
//   csg-provision keygen
//   csg-provision add --registry R --customer C --tunnel-user U --service-user S
//                     [--path /space/C] [--days 365] [--quota BYTES] [--rights storage,...]
//   csg-provision revoke --registry R --customer C
//   csg-provision list --registry R
//
// Passwords are prompted without echo, or read from CSG_TUNNEL_PASS and
// CSG_SERVICE_PASS when set.
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "csg/gateway/server.hpp"
#include "csg/vpnc/shell.hpp"

namespace {

using namespace csg;

vault::Registry load_or_empty(const std::string& path) {
  if (!std::filesystem::exists(path)) return {};
  return vault::load_registry(path);
}

std::string need_secret(vpnc::Secret which) {
  auto v = vpnc::script_secrets()(which);
  if (!v || v->empty()) throw Error(Errc::config, std::string(vpnc::secret_env(which)) + " not set and no terminal");
  return *v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Provision customers for the storage gateway"};
  app.require_subcommand(1);

  app.add_subcommand("keygen", "print a fresh master key (32 hex digits)");

  auto* add = app.add_subcommand("add", "enroll a customer");
  std::string registry, customer, tunnel_user, service_user, path, rights = "storage";
  std::int64_t days = 365;
  std::uint64_t quota = 1ull << 30;
  add->add_option("--registry", registry)->required();
  add->add_option("--customer", customer)->required();
  add->add_option("--tunnel-user", tunnel_user)->required();
  add->add_option("--service-user", service_user)->required();
  add->add_option("--path", path, "space path (default /space/<customer>)");
  add->add_option("--days", days, "contract length in days")->capture_default_str();
  add->add_option("--quota", quota, "quota in bytes")->capture_default_str();
  add->add_option("--rights", rights, "comma-separated rights")->capture_default_str();

  auto* revoke = app.add_subcommand("revoke", "revoke a customer's certificate");
  revoke->add_option("--registry", registry)->required();
  revoke->add_option("--customer", customer)->required();

  auto* list = app.add_subcommand("list", "list enrolled customers");
  list->add_option("--registry", registry)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("keygen")) {
      std::cout << to_hex(system_random().array<16>()) << "\n";
      return 0;
    }
    if (*add) {
      auto reg = load_or_empty(registry);
      vault::Certificate cert;
      std::int64_t now = gateway::unix_now();
      cert.issued_at = now;
      cert.last_update = now;
      cert.expiry_date = now + days * 86'400;
      std::stringstream ss(rights);
      for (std::string r; std::getline(ss, r, ',');)
        if (!r.empty()) cert.rights.push_back(r);
      std::string tunnel_pass = need_secret(vpnc::Secret::tunnel);
      std::string service_pass = need_secret(vpnc::Secret::service);
      reg.add(vault::make_customer(customer, tunnel_user, tunnel_pass, service_user, service_pass,
                                   path.empty() ? "/space/" + customer : path, cert, quota));
      vault::save_registry(reg, registry);
      std::cout << "enrolled " << customer << "\n";
      return 0;
    }
    if (*revoke) {
      auto reg = vault::load_registry(registry);
      vault::Registry updated;
      bool found = false;
      for (auto rec : reg.records()) {
        if (rec.customer_id == customer) {
          rec.certificate.revoked = true;
          rec.certificate.last_update = gateway::unix_now();
          found = true;
        }
        updated.add(std::move(rec));
      }
      if (!found) throw Error(Errc::config, "no customer " + customer);
      vault::save_registry(updated, registry);
      std::cout << "revoked " << customer << "\n";
      return 0;
    }
    if (*list) {
      auto reg = vault::load_registry(registry);
      std::int64_t now = gateway::unix_now();
      for (const auto& rec : reg.records())
        std::cout << rec.customer_id << "\t" << rec.space_path << "\t"
                  << vault::verdict_name(vault::check_certificate(rec.certificate, now)) << "\n";
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "csg-provision: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
