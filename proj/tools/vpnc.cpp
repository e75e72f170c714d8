// SPDX-License-Identifier: Apache-2.0
//
// vpnc                                      interactive shell
// vpnc connect --host H --port P --user U   connect, then continue interactively
// vpnc run --script <file>                  execute a command file
//
// Add --group test-small --allow-insecure-group to talk to a test gateway.
// Exit codes: 0 success, 2 authentication, 3 protocol or network, 4 usage.
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "csg/vpnc/shell.hpp"

namespace {

int usage_error(const std::string& msg) {
  std::cerr << "vpnc: " << msg << std::endl;
  return csg::vpnc::kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Client for the encrypted storage gateway"};
  std::string group_name = "rfc3526-14";
  bool insecure = false;
  app.add_option("--group", group_name, "DH group: rfc3526-14 or test-small")->capture_default_str();
  app.add_flag("--allow-insecure-group", insecure, "permit the small test DH group");

  auto* connect = app.add_subcommand("connect", "connect and authenticate the tunnel");
  connect->fallthrough();
  std::string host, user;
  std::uint16_t port = 0;
  connect->add_option("--host", host)->required();
  connect->add_option("--port", port)->required();
  connect->add_option("--user", user)->required();

  auto* run = app.add_subcommand("run", "execute commands from a script file");
  run->fallthrough();
  std::string script;
  run->add_option("--script", script)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return csg::vpnc::kUsage;
  }

  const csg::keyx::DhGroup* group = csg::keyx::DhGroup::by_name(group_name);
  if (!group) return usage_error("unknown group " + group_name);
  if (group_name == "test-small" && !insecure) return usage_error("test-small requires --allow-insecure-group");

  csg::vpnc::ShellOptions opts;
  opts.group = group;

  if (*run) {
    std::ifstream in(script);
    if (!in) return usage_error("cannot read script " + script);
    opts.stop_on_usage_error = true;
    csg::vpnc::Shell shell(opts, std::cout, std::cerr, csg::vpnc::script_secrets());
    return shell.run(in);
  }

  csg::vpnc::Shell shell(opts, std::cout, std::cerr, csg::vpnc::prompt_secret_tty);
  if (*connect) {
    std::vector<std::string> cmd{"connect", "--host", host, "--port", std::to_string(port), "--user", user};
    if (auto code = shell.execute(cmd)) return *code;
  }
  return shell.run(std::cin, isatty(STDIN_FILENO) != 0);
}
