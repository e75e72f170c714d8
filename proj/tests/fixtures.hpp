// SPDX-License-Identifier: Apache-2.0
//
// Shared customers and an in-memory client/server driver for protocol tests.
#pragma once

#include <string>
#include <vector>

#include "csg/protocol/server_session.hpp"
#include "test_util.hpp"

namespace test {

inline constexpr std::int64_t kNow = 1'800'000'000;  // fixed clock for certificate checks

struct Account {
  std::string customer_id;
  std::string tunnel_user;
  std::string tunnel_pass;
  std::string service_user;
  std::string service_pass;
  std::string space_path;
};

inline csg::vault::Certificate certificate_for(std::int64_t expiry, bool revoked = false,
                                               std::vector<std::string> rights = {"storage"}) {
  csg::vault::Certificate c;
  c.issued_at = kNow - 86'400 * 30;
  c.last_update = std::min(kNow - 86'400, expiry);
  c.expiry_date = expiry;
  c.rights = std::move(rights);
  c.revoked = revoked;
  return c;
}

inline Account make_account(const std::string& cid, std::mt19937_64& engine) {
  return {cid, cid + "-tunnel", random_password(engine), cid + "-svc", random_password(engine), "/space/" + cid};
}

inline void enroll(csg::vault::Registry& registry, const Account& a, csg::vault::Certificate cert,
                   std::uint64_t quota = 64ull << 20) {
  registry.add(csg::vault::make_customer(a.customer_id, a.tunnel_user, a.tunnel_pass, a.service_user, a.service_pass,
                                         a.space_path, std::move(cert), quota));
}

// A registry, store and group wired into ServerSession contexts.
class World {
 public:
  World() : store_(dir_.path() / "objects", master_key()) {}

  static const csg::aes::CipherKey& master_key() {
    static const csg::aes::CipherKey k{csg::fixed_from_hex<16>("000102030405060708090a0b0c0d0e0f").value()};
    return k;
  }

  csg::vault::Registry& registry() { return registry_; }
  csg::vault::ObjectStore& store() { return store_; }
  const csg::keyx::DhGroup& group() const { return group_; }
  const std::filesystem::path& root() const { return dir_.path(); }

  Account add(const std::string& cid, csg::vault::Certificate cert = certificate_for(kNow + 86'400 * 365),
              std::uint64_t quota = 64ull << 20) {
    Account a = make_account(cid, rng());
    enroll(registry_, a, std::move(cert), quota);
    return a;
  }

  csg::proto::ServerContext context() {
    return {&group_, &registry_, &store_, &csg::system_random(), [] { return kNow; }};
  }

 private:
  TempDir dir_;
  csg::keyx::DhGroup group_ = csg::keyx::DhGroup::test_small();
  csg::vault::Registry registry_;
  csg::vault::ObjectStore store_;
};

// Client half plus a server session, joined by real encode/decode of every frame.
class Loopback {
 public:
  explicit Loopback(World& world, csg::proto::EventSink sink = {})
      : group_(world.group()), server_(world.context(), std::move(sink)) {}

  csg::proto::SessionState& client() { return client_; }
  csg::proto::ServerSession& server() { return server_; }
  const std::vector<csg::Bytes>& wire() const { return wire_; }
  const std::optional<csg::proto::Frame>& last_reply() const { return last_reply_; }
  bool server_closed_connection() const { return dropped_; }

  // Sends one frame; returns the decoded reply, if any.
  std::optional<csg::proto::Frame> send(const csg::proto::Frame& f) {
    csg::Bytes bytes = csg::proto::encode_frame(f);
    wire_.push_back(bytes);
    auto reaction = server_.handle(csg::proto::decode_frame(bytes));
    dropped_ = reaction.close;
    last_reply_.reset();
    if (reaction.reply) {
      csg::Bytes back = csg::proto::encode_frame(*reaction.reply);
      wire_.push_back(back);
      last_reply_ = csg::proto::decode_frame(back);
    }
    return last_reply_;
  }

  void hello(csg::RandomSource& rng = csg::system_random()) {
    keypair_ = csg::keyx::dh_generate(group_, rng);
    auto reply = send(csg::proto::client_connect(client_, keypair_));
    if (!reply || reply->type != csg::proto::MessageType::server_hello)
      throw csg::Error(csg::Errc::protocol_order, "no ServerHello");
    csg::proto::client_on_server_hello(client_, reply->payload, keypair_, group_);
  }

  csg::proto::AuthResult tunnel(std::string_view user, std::string_view pass) {
    auto reply = send(csg::proto::phase1_auth(client_, user, pass, csg::system_random()));
    return csg::proto::client_on_phase1_result(client_, reply.value().payload);
  }

  csg::proto::AuthResult login(std::string_view path, std::string_view user, std::string_view pass) {
    if (send(csg::proto::service_request(client_, path, csg::system_random())))
      throw csg::Error(csg::Errc::protocol_order, "unexpected reply to ServiceRequest");
    auto reply = send(csg::proto::phase2_auth(client_, user, pass, csg::system_random()));
    return csg::proto::client_on_phase2_result(client_, reply.value().payload);
  }

  // Full honest run; returns the last AuthResult seen.
  csg::proto::AuthResult establish(const Account& a) {
    hello();
    auto r = tunnel(a.tunnel_user, a.tunnel_pass);
    if (!r.accepted) return r;
    return login(a.space_path, a.service_user, a.service_pass);
  }

 private:
  const csg::keyx::DhGroup& group_;
  csg::proto::SessionState client_;
  csg::proto::ServerSession server_;
  csg::keyx::DhKeyPair keypair_;
  std::vector<csg::Bytes> wire_;
  std::optional<csg::proto::Frame> last_reply_;
  bool dropped_ = false;
};

}  // namespace test
