// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <thread>

#include "csg/gateway/server.hpp"
#include "live.hpp"
#include "process.hpp"

namespace {

using namespace csg;
using namespace csg::gateway;
using test::error_code;

std::string config_message(const ConfigSources& src) {
  try {
    load_config(src);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::config);
    return e.what();
  }
  return {};
}

EnvLookup env_of(std::map<std::string, std::string> vars) {
  return [vars = std::move(vars)](const std::string& k) -> std::optional<std::string> {
    auto it = vars.find(k);
    return it == vars.end() ? std::nullopt : std::optional<std::string>(it->second);
  };
}

std::filesystem::path write_file(const test::TempDir& dir, const std::string& name, const std::string& body) {
  auto p = dir.path() / name;
  std::ofstream(p) << body;
  return p;
}

const std::string kKey = "000102030405060708090a0b0c0d0e0f";

// Configuration -----------------------------------------------------------------

TEST(Config, DefaultsApply) {
  ConfigSources src;
  src.flags = {{"registry_path", "reg.jsonl"}, {"master_key_hex", kKey}};
  auto cfg = load_config(src);
  EXPECT_EQ(cfg.listen_addr, "127.0.0.1:9443");
  EXPECT_EQ(cfg.objects_dir, "objects");
  EXPECT_EQ(cfg.dh_group, "rfc3526-14");
  EXPECT_EQ(cfg.max_sessions, 256u);
  EXPECT_EQ(cfg.audit_log, "gateway-audit.log");
}

TEST(Config, PrecedenceFlagsOverEnvOverFileOverDefaults) {
  test::TempDir dir;
  auto file = write_file(dir, "gw.json",
                         R"({"listen_addr": "10.0.0.1:1", "registry_path": "file.jsonl", "objects_dir": "file-objs",
                             "master_key_hex": ")" + kKey + R"(", "max_sessions": 7})");
  ConfigSources src;
  src.file = file;
  src.env = env_of({{"CSG_LISTEN_ADDR", "10.0.0.2:2"}, {"CSG_OBJECTS_DIR", "env-objs"}});
  src.flags = {{"listen_addr", "127.0.0.1:9443"}};
  auto cfg = load_config(src);
  EXPECT_EQ(cfg.listen_addr, "127.0.0.1:9443");  // flag beats env and file
  EXPECT_EQ(cfg.objects_dir, "env-objs");        // env beats file
  EXPECT_EQ(cfg.registry_path, "file.jsonl");    // file beats default
  EXPECT_EQ(cfg.max_sessions, 7u);
  EXPECT_EQ(cfg.audit_log, "gateway-audit.log");  // default
}

TEST(Config, ListenFlagOverridesFile) {
  test::TempDir dir;
  auto file = write_file(dir, "gw.json",
                         R"({"listen_addr": "0.0.0.0:1234", "registry_path": "r", "master_key_hex": ")" + kKey + R"("})");
  ConfigSources src;
  src.file = file;
  src.flags = {{"listen_addr", "127.0.0.1:9443"}};
  EXPECT_EQ(load_config(src).listen_addr, "127.0.0.1:9443");
}

TEST(Config, MissingRegistryPathNamed) {
  ConfigSources src;
  src.flags = {{"master_key_hex", kKey}};
  EXPECT_NE(config_message(src).find("registry_path"), std::string::npos);
}

TEST(Config, MalformedMasterKeyNamesFieldAndSource) {
  ConfigSources src;
  src.flags = {{"registry_path", "r"}};
  src.env = env_of({{"CSG_MASTER_KEY_HEX", "abc"}});
  auto msg = config_message(src);
  EXPECT_NE(msg.find("master_key_hex"), std::string::npos);
  EXPECT_NE(msg.find("CSG_MASTER_KEY_HEX"), std::string::npos);
  src.env = env_of({{"CSG_MASTER_KEY_HEX", std::string(32, 'g')}});
  EXPECT_NE(config_message(src).find("master_key_hex"), std::string::npos);
  src.env = env_of({{"CSG_MASTER_KEY_HEX", kKey + "00"}});
  EXPECT_NE(config_message(src).find("master_key_hex"), std::string::npos);
}

TEST(Config, InsecureGroupNeedsExplicitFlag) {
  ConfigSources src;
  src.flags = {{"registry_path", "r"}, {"master_key_hex", kKey}};
  src.env = env_of({{"CSG_DH_GROUP", "test-small"}});
  auto msg = config_message(src);
  EXPECT_NE(msg.find("dh_group"), std::string::npos);
  EXPECT_NE(msg.find("allow-insecure-group"), std::string::npos);
  src.allow_insecure_group = true;
  EXPECT_EQ(load_config(src).dh_group, "test-small");
}

TEST(Config, UnknownGroupRejected) {
  ConfigSources src;
  src.flags = {{"registry_path", "r"}, {"master_key_hex", kKey}, {"dh_group", "modp1024"}};
  EXPECT_NE(config_message(src).find("dh_group"), std::string::npos);
}

TEST(Config, FileErrorsNameTheKey) {
  test::TempDir dir;
  ConfigSources src;
  src.file = write_file(dir, "a.json", R"({"registry_path": "r", "colour": "blue"})");
  EXPECT_NE(config_message(src).find("colour"), std::string::npos);
  src.file = write_file(dir, "b.json", R"({"registry_path": "r", "max_sessions": -3})");
  EXPECT_NE(config_message(src).find("max_sessions"), std::string::npos);
  src.file = write_file(dir, "c.json", "{not json");
  EXPECT_NE(config_message(src).find("c.json"), std::string::npos);
  src.file = dir.path() / "absent.json";
  EXPECT_NE(config_message(src).find("absent.json"), std::string::npos);
}

TEST(Config, MaxSessionsValidation) {
  ConfigSources src;
  src.flags = {{"registry_path", "r"}, {"master_key_hex", kKey}};
  src.env = env_of({{"CSG_MAX_SESSIONS", "0"}});
  EXPECT_NE(config_message(src).find("max_sessions"), std::string::npos);
  src.env = env_of({{"CSG_MAX_SESSIONS", "12x"}});
  EXPECT_NE(config_message(src).find("max_sessions"), std::string::npos);
  src.env = env_of({{"CSG_MAX_SESSIONS", "12"}});
  EXPECT_EQ(load_config(src).max_sessions, 12u);
}

TEST(Config, ListenAddressValidation) {
  ConfigSources src;
  src.flags = {{"registry_path", "r"}, {"master_key_hex", kKey}, {"listen_addr", "no-port"}};
  EXPECT_NE(config_message(src).find("listen_addr"), std::string::npos);
  src.flags["listen_addr"] = "host:99999";
  EXPECT_NE(config_message(src).find("listen_addr"), std::string::npos);
}

TEST(Config, HostPortParsing) {
  auto hp = net::parse_host_port("127.0.0.1:9443");
  EXPECT_EQ(hp.host, "127.0.0.1");
  EXPECT_EQ(hp.port, 9443);
  hp = net::parse_host_port("[::1]:80");
  EXPECT_EQ(hp.host, "::1");
  EXPECT_EQ(hp.str(), "[::1]:80");
  EXPECT_EQ(net::parse_host_port("localhost:0").port, 0);
  for (const char* bad : {"", ":", "host:", ":80", "host:-1", "[::1]80", "h:65536"})
    EXPECT_EQ(error_code([&] { net::parse_host_port(bad); }), Errc::config) << bad;
}

// Audit log ----------------------------------------------------------------------

TEST(Audit, LineRoundTrip) {
  AuditRecord r{utc_timestamp(), "s42", "phase2 ok cert=valid", "acme"};
  auto parsed = parse_audit_line(format_audit_line(r));
  ASSERT_TRUE(parsed);
  EXPECT_EQ(parsed->timestamp, r.timestamp);
  EXPECT_EQ(parsed->session, "s42");
  EXPECT_EQ(parsed->event, "phase2 ok cert=valid");
  EXPECT_EQ(parsed->customer, "acme");
  auto anon = parse_audit_line(format_audit_line({r.timestamp, "s1", "hello", std::nullopt}));
  ASSERT_TRUE(anon);
  EXPECT_FALSE(anon->customer.has_value());
}

TEST(Audit, TimestampShape) {
  auto t = utc_timestamp(std::chrono::system_clock::time_point(std::chrono::milliseconds(1'700'000'000'123)));
  EXPECT_EQ(t, "2023-11-14T22:13:20.123Z");
}

TEST(Audit, ControlCharactersCannotSplitRecords) {
  AuditRecord r{"t", "s1", "evil\tevent\nnext", "cu\tst"};
  std::string line = format_audit_line(r);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  auto parsed = parse_audit_line(line);
  ASSERT_TRUE(parsed);
  EXPECT_EQ(parsed->event, "evil event next");
}

TEST(Audit, WriteFailuresAreCountedNotThrown) {
  test::TempDir dir;
  AuditLog log(dir.path().string());  // a directory cannot be opened for append
  EXPECT_NO_THROW(log.record("s1", "hello", std::nullopt));
  EXPECT_GE(log.failures(), 1u);
}

TEST(Audit, ConcurrentWritersProduceWholeLines) {
  test::TempDir dir;
  auto path = dir.path() / "audit.log";
  {
    AuditLog log(path.string());
    std::vector<std::thread> pool;
    for (int t = 0; t < 4; ++t)
      pool.emplace_back([&, t] {
        for (int i = 0; i < 250; ++i) log.record("s" + std::to_string(t), "put ok", "acme");
      });
    for (auto& th : pool) th.join();
    EXPECT_EQ(log.failures(), 0u);
  }
  std::ifstream in(path);
  int n = 0;
  for (std::string line; std::getline(in, line); ++n) ASSERT_TRUE(parse_audit_line(line)) << line;
  EXPECT_EQ(n, 1000);
}

// Live gateway -------------------------------------------------------------------

TEST(Live, HonestSessionOverLoopback) {
  test::LiveGateway live;
  auto c = live.login("acme");
  EXPECT_EQ(c->state().phase, proto::Phase::session_active);
  Bytes data = test::random_bytes(test::rng(), 5000);
  EXPECT_EQ(c->put("blob", data), proto::DataStatus::ok);
  EXPECT_EQ(c->get("blob").data, data);
  EXPECT_EQ(c->list(), std::vector<std::string>{"blob"});
  c->disconnect();
}

TEST(Live, TwoCustomersConcurrently) {
  test::LiveGateway live({{"acme", test::certificate_for(test::kNow + 1000)},
                          {"bolt", test::certificate_for(test::kNow + 1000)}});
  std::atomic<int> ok{0};
  auto worker = [&](const std::string& cid) {
    auto c = live.login(cid);
    for (int i = 0; i < 20; ++i) {
      std::string body = cid + "-" + std::to_string(i);
      if (c->put("obj" + std::to_string(i), as_bytes(body)) != proto::DataStatus::ok) return;
      auto got = c->get("obj" + std::to_string(i));
      if (to_string(got.data) != body) return;
    }
    if (c->list().size() != 20) return;
    c->disconnect();
    ++ok;
  };
  std::thread a(worker, "acme"), b(worker, "bolt");
  a.join();
  b.join();
  EXPECT_EQ(ok.load(), 2);
}

TEST(Live, CustomersCannotSeeEachOther) {
  test::LiveGateway live({{"acme", test::certificate_for(test::kNow + 1000)},
                          {"bolt", test::certificate_for(test::kNow + 1000)}});
  auto a = live.login("acme");
  ASSERT_EQ(a->put("private", as_bytes(std::string_view("acme only"))), proto::DataStatus::ok);
  auto b = live.login("bolt");
  EXPECT_EQ(b->get("private").status, proto::DataStatus::no_such_object);
  EXPECT_TRUE(b->list().empty());
  EXPECT_EQ(b->get("../acme/private").status, proto::DataStatus::invalid_name);
}

TEST(Live, ExpiredCertificateReason) {
  test::LiveGateway live({{"old", test::certificate_for(test::kNow - 5)}});
  const auto& a = live.account("old");
  Client c(keyx::DhGroup::test_small());
  c.connect(live.where());
  ASSERT_TRUE(c.authenticate_tunnel(a.tunnel_user, a.tunnel_pass).accepted);
  auto r = c.login(a.space_path, a.service_user, a.service_pass);
  EXPECT_FALSE(r.accepted);
  EXPECT_EQ(r.reason, "certificate expired");
  EXPECT_FALSE(c.connected());
}

TEST(Live, BusyGatewayRejectsImmediately) {
  test::LiveGateway live({}, {.max_sessions = 2});
  auto one = live.login("acme");
  auto two = live.login("acme");
  Client three(keyx::DhGroup::test_small());
  three.set_read_timeout(std::chrono::milliseconds(5000));
  auto start = std::chrono::steady_clock::now();
  try {
    three.connect(live.where());
    FAIL() << "third session should be refused";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("server busy"), std::string::npos) << e.what();
  }
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(2));
  EXPECT_EQ(live.gateway().rejected_busy(), 1u);
  // Capacity frees up once a session ends.
  one->disconnect();
  for (int i = 0; i < 200 && live.gateway().active_sessions() > 1; ++i)
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  EXPECT_NO_THROW(live.login("acme"));
}

TEST(Live, ShutdownDrainsOpenSessions) {
  test::LiveGateway live;
  auto c = live.login("acme");
  std::thread stopper([&] { live.shutdown(); });
  // The session keeps working during the drain window.
  std::this_thread::sleep_for(std::chrono::milliseconds(200));
  EXPECT_EQ(c->put("late", as_bytes(std::string_view("still here"))), proto::DataStatus::ok);
  c->disconnect();
  auto t0 = std::chrono::steady_clock::now();
  stopper.join();
  EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(2));
  EXPECT_EQ(live.gateway().active_sessions(), 0u);
  // New connections are refused after the stop.
  Client late(keyx::DhGroup::test_small());
  EXPECT_EQ(error_code([&] { late.connect(live.where()); }), Errc::connection);
}

TEST(Live, DrainDeadlineCutsIdleSessions) {
  test::LiveGateway live({}, {.drain_timeout = std::chrono::milliseconds(300)});
  auto idle = live.login("acme");
  auto t0 = std::chrono::steady_clock::now();
  live.shutdown();
  auto took = std::chrono::steady_clock::now() - t0;
  EXPECT_GE(took, std::chrono::milliseconds(250));
  EXPECT_LT(took, std::chrono::seconds(3));
  EXPECT_EQ(live.gateway().active_sessions(), 0u);
  EXPECT_EQ(error_code([&] { idle->list(); }), Errc::connection);
}

TEST(Live, IdleConnectionsTimeOut) {
  test::LiveGateway live({}, {.idle_timeout = std::chrono::milliseconds(200)});
  net::Socket s = net::connect_tcp(live.where());
  for (int i = 0; i < 200 && live.gateway().active_sessions() == 0; ++i)
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  for (int i = 0; i < 300 && live.gateway().active_sessions() > 0; ++i)
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  EXPECT_EQ(live.gateway().active_sessions(), 0u);
}

TEST(Live, MalformedStreamsGetErrorAndClose) {
  test::LiveGateway live;
  struct Case {
    const char* name;
    std::string hex;
    std::optional<std::string> reason;  // expected Error reason, nullopt: silent close
  } cases[] = {
      {"unknown type", "00000002ff00", "unexpected message"},
      {"oversized", "ffffffff08", "malformed request"},
      {"out of order", "000000010c", "unexpected message"},
      {"bad version", "00000005" "01" "02000108", "version mismatch"},
      {"degenerate public", "00000005" "01" "01000101", "invalid public key"},
  };
  for (const auto& c : cases) {
    SCOPED_TRACE(c.name);
    net::Socket s = net::connect_tcp(live.where());
    s.set_read_timeout(std::chrono::milliseconds(5000));
    s.write_all(from_hex(c.hex).value());
    auto f = proto::read_frame(s);
    ASSERT_TRUE(f);
    EXPECT_EQ(f->type, proto::MessageType::error);
    EXPECT_EQ(proto::read_error_reason(f->payload), *c.reason);
    EXPECT_FALSE(proto::read_frame(s).has_value());  // connection closed after the error
  }
}

TEST(Live, TruncatedFrameThenHangup) {
  test::LiveGateway live;
  {
    net::Socket s = net::connect_tcp(live.where());
    s.write_all(from_hex("0000100001aabb").value());
  }
  auto c = live.login("acme");
  EXPECT_EQ(c->list().size(), 0u);
}

// Fuzz clients alongside honest ones; the honest ones must all succeed.
TEST(Live, ChaosFuzzersDoNotDisturbHonestClients) {
  test::LiveGateway live({{"h0", test::certificate_for(test::kNow + 1000)},
                          {"h1", test::certificate_for(test::kNow + 1000)},
                          {"h2", test::certificate_for(test::kNow + 1000)},
                          {"h3", test::certificate_for(test::kNow + 1000)},
                          {"h4", test::certificate_for(test::kNow + 1000)}},
                         {.max_sessions = 128});
  std::atomic<int> honest_ok{0};
  std::vector<std::thread> fuzzers;
  for (int f = 0; f < 50; ++f) {
    fuzzers.emplace_back([&, f] {
      std::mt19937_64 engine(static_cast<std::uint64_t>(f) * 7919 + 1);
      for (int round = 0; round < 4; ++round) {
        try {
          net::Socket s = net::connect_tcp(live.where());
          s.set_read_timeout(std::chrono::milliseconds(2000));
          switch ((f + round) % 4) {
            case 0: s.write_all(test::random_bytes(engine, 1 + engine() % 200)); break;
            case 1: {
              auto type = static_cast<proto::MessageType>(1 + engine() % 15);
              s.write_frame({type, test::random_bytes(engine, engine() % 100)});
              break;
            }
            case 2:  // promise 16 MiB, send nothing, hang up
              s.write_all(from_hex("00ffffff08").value());
              continue;
            default: {
              // Valid hello then garbage credentials.
              auto kp = keyx::dh_generate(keyx::DhGroup::test_small(), system_random());
              proto::SessionState st;
              s.write_frame(proto::client_connect(st, kp));
              proto::read_frame(s);
              s.write_frame({proto::MessageType::phase1_auth, test::random_bytes(engine, 64)});
              break;
            }
          }
          Bytes sink(256);
          while (s.read_some(sink) > 0) {
          }
        } catch (const Error&) {
        }
      }
    });
  }
  std::vector<std::thread> honest;
  for (int h = 0; h < 5; ++h) {
    honest.emplace_back([&, h] {
      try {
        std::string cid = "h" + std::to_string(h);
        auto c = live.login(cid);
        Bytes body = test::random_bytes(test::rng(), 10'000 + h);
        for (int i = 0; i < 10; ++i) {
          if (c->put("k" + std::to_string(i), body) != proto::DataStatus::ok) return;
          if (c->get("k" + std::to_string(i)).data != body) return;
        }
        c->disconnect();
        ++honest_ok;
      } catch (const Error&) {
      }
    });
  }
  for (auto& t : honest) t.join();
  for (auto& t : fuzzers) t.join();
  EXPECT_EQ(honest_ok.load(), 5);
  // Still serving afterwards.
  EXPECT_NO_THROW(live.login("h0")->disconnect());
}

TEST(Live, AuditLogIsRedactedAndParses) {
  test::LiveGateway live;
  const auto& a = live.account("acme");
  std::string blob = "TOP-SECRET-" + test::random_password(test::rng(), 32);
  {
    auto c = live.login("acme");
    ASSERT_EQ(c->put("doc", as_bytes(blob)), proto::DataStatus::ok);
    c->get("doc");
    c->get("nothing");
    c->list();
    c->disconnect();
  }
  {
    Client bad(keyx::DhGroup::test_small());
    bad.connect(live.where());
    EXPECT_FALSE(bad.authenticate_tunnel(a.tunnel_user, "wrong-" + a.service_pass).accepted);
  }
  live.shutdown();
  auto lines = live.audit_lines();
  ASSERT_GE(lines.size(), 8u);
  bool saw_fail = false, saw_ok = false;
  for (const auto& line : lines) {
    auto rec = parse_audit_line(line);
    ASSERT_TRUE(rec) << line;
    saw_fail = saw_fail || rec->event == "phase1 fail reason=credentials";
    saw_ok = saw_ok || rec->event == "phase2 ok cert=valid";
    for (const std::string& secret : {a.tunnel_pass, a.service_pass, blob, std::string(test::kMasterKeyHex)})
      EXPECT_EQ(line.find(secret), std::string::npos) << line;
  }
  EXPECT_TRUE(saw_fail);
  EXPECT_TRUE(saw_ok);
  EXPECT_EQ(live.gateway().audit().failures(), 0u);
}

// Executable -----------------------------------------------------------------------

TEST(Binary, BadMasterKeyExitsNonzeroNamingField) {
  test::TempDir dir;
  auto r = test::run({CSG_GATEWAY_BIN, "--registry", "reg.jsonl", "--listen", "127.0.0.1:0"},
                     {{"CSG_MASTER_KEY_HEX", "nothex"}}, dir.path().string());
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("master_key_hex"), std::string::npos) << r.output;
  EXPECT_EQ(std::count(r.output.begin(), r.output.end(), '\n'), 1) << r.output;
}

TEST(Binary, UnreadableRegistryExitsNonzero) {
  test::TempDir dir;
  auto r = test::run({CSG_GATEWAY_BIN, "--registry", "missing.jsonl", "--listen", "127.0.0.1:0"},
                     {{"CSG_MASTER_KEY_HEX", kKey}}, dir.path().string());
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("missing.jsonl"), std::string::npos) << r.output;
}

TEST(Binary, ReadinessLineAndCleanShutdown) {
  test::TempDir dir;
  vault::Registry reg;
  auto acct = test::make_account("acme", test::rng());
  test::enroll(reg, acct, test::certificate_for(4'000'000'000));
  vault::save_registry(reg, dir.path() / "reg.jsonl");
  std::ofstream(dir.path() / "gw.json") << R"({"registry_path": "reg.jsonl", "listen_addr": "127.0.0.1:0",
                                               "dh_group": "test-small", "master_key_hex": ")" + kKey + R"("})";
  auto child = test::spawn({CSG_GATEWAY_BIN, "--config", "gw.json", "--allow-insecure-group"}, {},
                           dir.path().string());
  std::string out;
  ASSERT_TRUE(test::read_until(child.out_fd, out, "\n")) << out;
  ASSERT_EQ(out.rfind("gateway listening on 127.0.0.1:", 0), 0u) << out;
  auto port = static_cast<std::uint16_t>(std::stoi(out.substr(out.rfind(':') + 1)));

  Client c(keyx::DhGroup::test_small());
  c.connect({"127.0.0.1", port});
  ASSERT_TRUE(c.authenticate_tunnel(acct.tunnel_user, acct.tunnel_pass).accepted);
  ASSERT_TRUE(c.login(acct.space_path, acct.service_user, acct.service_pass).accepted);
  c.disconnect();

  ::kill(child.pid, SIGTERM);
  EXPECT_EQ(test::wait_exit(child.pid), 0);
  ::close(child.out_fd);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "gateway-audit.log"));
}

TEST(Binary, InsecureGroupRefusedWithoutFlag) {
  test::TempDir dir;
  auto r = test::run({CSG_GATEWAY_BIN, "--registry", "r.jsonl"},
                     {{"CSG_MASTER_KEY_HEX", kKey}, {"CSG_DH_GROUP", "test-small"}}, dir.path().string());
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("dh_group"), std::string::npos) << r.output;
}

}  // namespace
