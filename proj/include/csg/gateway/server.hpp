// SPDX-License-Identifier: Apache-2.0
//
// The storage gateway: accepts TCP connections and runs one ServerSession per
// connection on its own thread. Sessions share only the read-only registry, the
// object store and the audit log.
#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <map>
#include <mutex>
#include <thread>

#include "csg/gateway/audit.hpp"
#include "csg/gateway/config.hpp"
#include "csg/net/socket.hpp"
#include "csg/protocol/server_session.hpp"
#include "csg/vault/object_store.hpp"
#include "csg/vault/registry.hpp"

namespace csg::gateway {

inline std::int64_t unix_now() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

struct GatewayOptions {
  std::function<std::int64_t()> clock = unix_now;
  // A connection idle this long is dropped.
  std::chrono::milliseconds idle_timeout{60'000};
  // Grace period for open sessions after a stop request.
  std::chrono::milliseconds drain_timeout{5'000};
  RandomSource* rng = &system_random();
};

class Gateway {
 public:
  // Loads the registry from cfg.registry_path.
  explicit Gateway(GatewayConfig cfg, GatewayOptions opts = {})
      : Gateway(cfg, vault::load_registry(cfg.registry_path), std::move(opts)) {}

  Gateway(GatewayConfig cfg, vault::Registry registry, GatewayOptions opts = {})
      : cfg_(std::move(cfg)),
        opts_(std::move(opts)),
        group_(cfg_.group()),
        registry_(std::move(registry)),
        store_(cfg_.objects_dir, cfg_.master_key(), *opts_.rng),
        audit_(cfg_.audit_log) {}

  ~Gateway() {
    stop();
    wait();
  }

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  // Binds and starts accepting. After this returns address() is final.
  void start() {
    listener_.emplace(cfg_.listen());
    acceptor_ = std::thread([this] { accept_loop(); });
  }

  const std::string& address() const { return listener_->address(); }
  std::uint16_t port() const { return listener_->port(); }

  // Thread-safe; returns at once. wait() performs the drain.
  void stop() {
    stopping_ = true;
    cv_.notify_all();
  }

  // Joins the acceptor, then gives open sessions drain_timeout to finish
  // before cutting their connections.
  void wait() {
    if (acceptor_.joinable()) acceptor_.join();
    std::unique_lock lock(mu_);
    if (!cv_.wait_for(lock, opts_.drain_timeout, [&] { return live_.empty(); })) {
      for (auto& [id, fd] : live_) ::shutdown(fd, SHUT_RDWR);
      cv_.wait(lock, [&] { return live_.empty(); });
    }
  }

  std::size_t active_sessions() const {
    std::lock_guard lock(mu_);
    return live_.size();
  }
  std::size_t sessions_started() const { return started_.load(); }
  std::size_t rejected_busy() const { return rejected_.load(); }
  AuditLog& audit() { return audit_; }
  vault::ObjectStore& store() { return store_; }
  const vault::Registry& registry() const { return registry_; }

 private:
  void accept_loop() {
    while (!stopping_) {
      auto sock = listener_->accept(std::chrono::milliseconds(100));
      if (!sock) continue;
      std::unique_lock lock(mu_);
      if (live_.size() >= cfg_.max_sessions) {
        lock.unlock();
        ++rejected_;
        audit_.record("-", "busy reject", std::nullopt);
        try {
          sock->write_frame(proto::make_error_frame(proto::reason::busy));
        } catch (const Error&) {
        }
        ::shutdown(sock->fd(), SHUT_WR);
        continue;
      }
      std::uint64_t id = ++next_id_;
      live_.emplace(id, sock->fd());
      lock.unlock();
      ++started_;
      std::thread([this, id, s = std::move(*sock)]() mutable { serve(std::move(s), id); }).detach();
    }
    listener_->close();
  }

  void serve(net::Socket sock, std::uint64_t id) {
    const std::string sid = "s" + std::to_string(id);
    try {
      sock.set_read_timeout(opts_.idle_timeout);
      run_session(sock, sid);
    } catch (...) {
      // A session must never take the process down.
    }
    sock.linger_close();
    std::lock_guard lock(mu_);
    live_.erase(id);
    cv_.notify_all();
  }

  void run_session(net::Socket& sock, const std::string& sid) {
    proto::ServerSession session(
        {&group_, &registry_, &store_, opts_.rng, opts_.clock},
        [&](std::string_view event, const std::optional<std::string>& customer) { audit_.record(sid, event, customer); });
    for (;;) {
      std::optional<proto::Frame> frame;
      try {
        frame = proto::read_frame(sock);
      } catch (const Error& e) {
        if (e.code() == Errc::connection) {
          session.on_peer_closed();
          return;
        }
        auto r = session.on_stream_error(e);
        if (r.reply) {
          try {
            sock.write_frame(*r.reply);
          } catch (const Error&) {
          }
        }
        return;
      }
      if (!frame) {
        session.on_peer_closed();
        return;
      }
      auto r = session.handle(*frame);
      try {
        if (r.reply) sock.write_frame(*r.reply);
      } catch (const Error&) {
        session.on_peer_closed();
        return;
      }
      if (r.close) return;
    }
  }

  GatewayConfig cfg_;
  GatewayOptions opts_;
  const keyx::DhGroup& group_;
  vault::Registry registry_;
  vault::ObjectStore store_;
  AuditLog audit_;

  std::optional<net::Listener> listener_;
  std::thread acceptor_;
  std::atomic<bool> stopping_{false};
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::uint64_t, int> live_;
  std::uint64_t next_id_ = 0;
  std::atomic<std::size_t> started_{0};
  std::atomic<std::size_t> rejected_{0};
};

}  // namespace csg::gateway
