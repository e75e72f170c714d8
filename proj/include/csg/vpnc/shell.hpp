// SPDX-License-Identifier: Apache-2.0
//
// Command interpreter behind the vpnc tool. Commands:
//
//   connect --host H --port P --user U     hello + tunnel authentication
//   login --path /space/X --user S         service request + service authentication
//   put <local-file> <name>
//   get <name> <local-file>
//   ls
//   quit
//
// Passwords are never taken from the command line; they come from the secret
// reader (an un-echoed prompt, or the environment in script mode).
#pragma once

#include <termios.h>
#include <unistd.h>

#include <fcntl.h>

#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "csg/client.hpp"

namespace csg::vpnc {

enum ExitCode : int { kOk = 0, kAuth = 2, kProtocol = 3, kUsage = 4 };

// Which password a prompt is for; script mode maps these to environment variables.
enum class Secret { tunnel, service };

using SecretReader = std::function<std::optional<std::string>(Secret)>;

inline std::string_view secret_prompt(Secret s) {
  return s == Secret::tunnel ? "tunnel password: " : "service password: ";
}

inline std::string_view secret_env(Secret s) { return s == Secret::tunnel ? "CSG_TUNNEL_PASS" : "CSG_SERVICE_PASS"; }

// Prompts on the controlling terminal with echo turned off.
inline std::optional<std::string> prompt_secret_tty(Secret s) {
  int fd = ::open("/dev/tty", O_RDWR | O_CLOEXEC);
  if (fd < 0) return std::nullopt;
  termios saved{};
  bool restore = ::tcgetattr(fd, &saved) == 0;
  if (restore) {
    termios quiet = saved;
    quiet.c_lflag &= ~static_cast<tcflag_t>(ECHO);
    quiet.c_lflag |= ECHONL;
    ::tcsetattr(fd, TCSAFLUSH, &quiet);
  }
  // Prompt only once echo is off, so nothing typed in response is echoed.
  std::string_view prompt = secret_prompt(s);
  (void)!::write(fd, prompt.data(), prompt.size());
  std::string line;
  char c = 0;
  bool got_newline = false;
  while (::read(fd, &c, 1) == 1) {
    if (c == '\n' || c == '\r') {
      got_newline = true;
      break;
    }
    line.push_back(c);
  }
  if (restore) ::tcsetattr(fd, TCSAFLUSH, &saved);
  ::close(fd);
  if (!got_newline && line.empty()) return std::nullopt;
  return line;
}

// Script mode: environment first, then the terminal if there is one.
inline SecretReader script_secrets() {
  return [](Secret s) -> std::optional<std::string> {
    if (const char* v = std::getenv(std::string(secret_env(s)).c_str())) return std::string(v);
    return prompt_secret_tty(s);
  };
}

inline std::vector<std::string> tokenize(std::string_view line) {
  std::istringstream in{std::string(line)};
  return {std::istream_iterator<std::string>(in), std::istream_iterator<std::string>()};
}

struct ShellOptions {
  const keyx::DhGroup* group = &keyx::DhGroup::rfc3526_14();
  std::chrono::milliseconds timeout{30'000};
  // Scripts stop at the first usage error; interactive sessions carry on.
  bool stop_on_usage_error = false;
  Client::FrameTap tap;
};

class Shell {
 public:
  Shell(ShellOptions opts, std::ostream& out, std::ostream& err, SecretReader secrets)
      : opts_(std::move(opts)), out_(out), err_(err), secrets_(std::move(secrets)) {}

  ~Shell() {
    if (client_) client_->disconnect();
  }

  bool in_session() const { return client_ && client_->state().phase == proto::Phase::session_active; }
  bool has_tunnel() const { return client_ && client_->state().phase == proto::Phase::tunnel_established; }

  // Runs one command. nullopt: keep going; otherwise the process exit code.
  std::optional<int> execute(const std::vector<std::string>& argv) {
    if (argv.empty()) return std::nullopt;
    const std::string& cmd = argv[0];
    try {
      if (cmd == "connect") return do_connect(argv);
      if (cmd == "login") return do_login(argv);
      if (cmd == "put") return do_put(argv);
      if (cmd == "get") return do_get(argv);
      if (cmd == "ls") return do_ls(argv);
      if (cmd == "quit" || cmd == "exit") return do_quit();
      if (cmd == "help") {
        out_ << "commands: connect --host H --port P --user U | login --path P --user S | put <file> <name> | "
                "get <name> <file> | ls | quit\n";
        return std::nullopt;
      }
      return usage("unknown command: " + cmd);
    } catch (const Error& e) {
      client_.reset();
      if (e.code() == Errc::connection) err_ << "connection failed: " << e.what() << "\n";
      else err_ << "protocol error: " << e.what() << "\n";
      return kProtocol;
    }
  }

  // Reads commands until quit, a fatal error, or end of input.
  int run(std::istream& in, bool show_prompt = false) {
    std::string line;
    for (;;) {
      if (show_prompt) out_ << "vpnc> " << std::flush;
      if (!std::getline(in, line)) break;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      if (auto code = execute(tokenize(line))) return *code;
    }
    if (client_) do_quit();
    return kOk;
  }

 private:
  using Flags = std::map<std::string, std::string>;

  std::optional<int> usage(const std::string& msg) {
    err_ << msg << "\n";
    if (opts_.stop_on_usage_error) return kUsage;
    return std::nullopt;
  }

  // Parses "--key value" pairs; every listed key is required.
  static std::optional<Flags> parse_flags(const std::vector<std::string>& argv,
                                          std::initializer_list<std::string_view> keys) {
    Flags flags;
    for (std::size_t i = 1; i < argv.size(); i += 2) {
      if (argv[i].rfind("--", 0) != 0 || i + 1 >= argv.size()) return std::nullopt;
      std::string key = argv[i].substr(2);
      if (std::find(keys.begin(), keys.end(), key) == keys.end()) return std::nullopt;
      flags[key] = argv[i + 1];
    }
    for (auto k : keys)
      if (!flags.count(std::string(k))) return std::nullopt;
    return flags;
  }

  std::optional<int> do_connect(const std::vector<std::string>& argv) {
    auto flags = parse_flags(argv, {"host", "port", "user"});
    if (!flags) return usage("usage: connect --host H --port P --user U");
    if (client_) return usage("already connected; quit first");
    net::HostPort where;
    try {
      where = net::parse_host_port(flags->at("host") + ":" + flags->at("port"));
    } catch (const Error&) {
      return usage("bad host or port");
    }
    auto pass = secrets_(Secret::tunnel);
    if (!pass) return usage("no tunnel password given");

    client_ = std::make_unique<Client>(*opts_.group);
    client_->set_read_timeout(opts_.timeout);
    if (opts_.tap) client_->set_frame_tap(opts_.tap);
    try {
      client_->connect(where);
    } catch (const Error& e) {
      client_.reset();
      secure_wipe_string(*pass);
      if (e.code() == Errc::connection) {
        err_ << "connection refused: " << e.what() << "\n";
        return kProtocol;
      }
      throw;
    }
    auto result = client_->authenticate_tunnel(flags->at("user"), *pass);
    secure_wipe_string(*pass);
    if (!result.accepted) {
      client_.reset();
      err_ << result.reason << "\n";
      return kAuth;
    }
    out_ << "tunnel established\n";
    return std::nullopt;
  }

  std::optional<int> do_login(const std::vector<std::string>& argv) {
    auto flags = parse_flags(argv, {"path", "user"});
    if (!flags) return usage("usage: login --path /space/X --user S");
    if (!has_tunnel()) return usage("no tunnel");
    auto pass = secrets_(Secret::service);
    if (!pass) return usage("no service password given");
    auto result = client_->login(flags->at("path"), flags->at("user"), *pass);
    secure_wipe_string(*pass);
    if (!result.accepted) {
      client_.reset();
      err_ << result.reason << "\n";
      return kAuth;
    }
    out_ << "access granted\n";
    return std::nullopt;
  }

  std::optional<int> do_put(const std::vector<std::string>& argv) {
    if (argv.size() != 3) return usage("usage: put <local-file> <name>");
    if (!in_session()) return usage("no session; connect and login first");
    std::ifstream in(argv[1], std::ios::binary);
    if (!in) {
      err_ << "cannot read " << argv[1] << "\n";
      return std::nullopt;
    }
    Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) {
      err_ << "cannot read " << argv[1] << "\n";
      return std::nullopt;
    }
    if (data.size() > proto::kMaxPayload - 1024) {
      err_ << "file too large for one object\n";
      return std::nullopt;
    }
    auto status = client_->put(argv[2], data);
    if (status == proto::DataStatus::ok)
      out_ << "stored " << argv[2] << " (" << data.size() << " bytes)\n";
    else
      err_ << proto::status_name(status) << "\n";
    return std::nullopt;
  }

  std::optional<int> do_get(const std::vector<std::string>& argv) {
    if (argv.size() != 3) return usage("usage: get <name> <local-file>");
    if (!in_session()) return usage("no session; connect and login first");
    auto resp = client_->get(argv[1]);
    if (resp.status != proto::DataStatus::ok) {
      err_ << proto::status_name(resp.status) << "\n";
      return std::nullopt;
    }
    std::ofstream out(argv[2], std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(resp.data.data()), static_cast<std::streamsize>(resp.data.size()));
    out.close();
    if (!out) {
      err_ << "cannot write " << argv[2] << "\n";
      return std::nullopt;
    }
    out_ << "retrieved " << argv[1] << " (" << resp.data.size() << " bytes)\n";
    return std::nullopt;
  }

  std::optional<int> do_ls(const std::vector<std::string>& argv) {
    if (argv.size() != 1) return usage("usage: ls");
    if (!in_session()) return usage("no session; connect and login first");
    for (const auto& name : client_->list()) out_ << name << "\n";
    return std::nullopt;
  }

  int do_quit() {
    if (client_) client_->disconnect();
    client_.reset();
    return kOk;
  }

  static void secure_wipe_string(std::string& s) {
    secure_wipe(std::span(reinterpret_cast<std::uint8_t*>(s.data()), s.size()));
    s.clear();
  }

  ShellOptions opts_;
  std::ostream& out_;
  std::ostream& err_;
  SecretReader secrets_;
  std::unique_ptr<Client> client_;
};

}  // namespace csg::vpnc
