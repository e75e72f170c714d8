// SPDX-License-Identifier: Apache-2.0
//
// Append-only audit log. One tab-separated line per event:
//
//   <UTC timestamp>\t<session id>\t<event>\t<customer_id or ->
//
// Events are fixed phrases plus verdict names; they never carry passwords,
// keys, nonces or object bytes. Write failures are counted, never thrown.
#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace csg::gateway {

struct AuditRecord {
  std::string timestamp;
  std::string session;
  std::string event;
  std::optional<std::string> customer;
};

inline std::string utc_timestamp(std::chrono::system_clock::time_point t = std::chrono::system_clock::now()) {
  auto secs = std::chrono::system_clock::to_time_t(t);
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count() % 1000;
  std::tm tm{};
  ::gmtime_r(&secs, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

// Tabs and line breaks would split a record; replace them.
inline std::string audit_field(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  return out;
}

inline std::string format_audit_line(const AuditRecord& r) {
  return audit_field(r.timestamp) + '\t' + audit_field(r.session) + '\t' + audit_field(r.event) + '\t' +
         (r.customer ? audit_field(*r.customer) : "-");
}

inline std::optional<AuditRecord> parse_audit_line(std::string_view line) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (;;) {
    auto tab = line.find('\t', start);
    parts.emplace_back(line.substr(start, tab == std::string_view::npos ? tab : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  if (parts.size() != 4 || parts[0].empty() || parts[1].empty() || parts[2].empty() || parts[3].empty())
    return std::nullopt;
  AuditRecord r{parts[0], parts[1], parts[2], std::nullopt};
  if (parts[3] != "-") r.customer = parts[3];
  return r;
}

class AuditLog {
 public:
  // An empty path keeps records in memory only (tests).
  explicit AuditLog(const std::string& path = {}) : path_(path) {
    if (!path_.empty()) {
      out_.open(path_, std::ios::app);
      if (!out_) ++failures_;
    }
  }

  void record(std::string_view session, std::string_view event, const std::optional<std::string>& customer) {
    AuditRecord r{utc_timestamp(), std::string(session), std::string(event), customer};
    std::string line = format_audit_line(r);
    std::lock_guard lock(mu_);
    ++written_;
    if (path_.empty()) {
      memory_.push_back(std::move(line));
      return;
    }
    if (!out_) {
      ++failures_;
      return;
    }
    out_ << line << '\n';
    out_.flush();
    if (!out_) ++failures_;
  }

  std::size_t failures() const { return failures_.load(); }
  std::size_t written() const {
    std::lock_guard lock(mu_);
    return written_;
  }
  std::vector<std::string> memory_lines() const {
    std::lock_guard lock(mu_);
    return memory_;
  }

 private:
  std::string path_;
  mutable std::mutex mu_;
  std::ofstream out_;
  std::vector<std::string> memory_;
  std::size_t written_ = 0;
  std::atomic<std::size_t> failures_{0};
};

}  // namespace csg::gateway
