// SPDX-License-Identifier: Apache-2.0
//
// gateway --config <file> [--listen <addr>] [--registry <path>] [--objects <dir>]
//         [--allow-insecure-group]
#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "csg/gateway/server.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Encrypted storage gateway"};
  std::string config_file, listen, registry, objects;
  bool insecure = false;
  app.add_option("--config", config_file, "JSON configuration file");
  app.add_option("--listen", listen, "listen address host:port (overrides listen_addr)");
  app.add_option("--registry", registry, "customer registry file (overrides registry_path)");
  app.add_option("--objects", objects, "object store directory (overrides objects_dir)");
  app.add_flag("--allow-insecure-group", insecure, "permit the small test DH group");
  CLI11_PARSE(app, argc, argv);

  // Signals are taken synchronously by the main thread; block them before any
  // worker thread exists so they inherit the mask.
  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

  try {
    csg::gateway::ConfigSources sources;
    if (!listen.empty()) sources.flags["listen_addr"] = listen;
    if (!registry.empty()) sources.flags["registry_path"] = registry;
    if (!objects.empty()) sources.flags["objects_dir"] = objects;
    sources.allow_insecure_group = insecure;
    sources.env = csg::gateway::process_env();
    if (!config_file.empty()) sources.file = config_file;

    auto cfg = csg::gateway::load_config(sources);
    csg::gateway::Gateway gateway(cfg);
    gateway.start();
    std::cout << "gateway listening on " << gateway.address() << std::endl;

    int sig = 0;
    sigwait(&stop_signals, &sig);
    std::cout << "gateway stopping (draining " << gateway.active_sessions() << " sessions)" << std::endl;
    gateway.stop();
    gateway.wait();
    if (gateway.audit().failures() > 0)
      std::cerr << "gateway: " << gateway.audit().failures() << " audit log writes failed" << std::endl;
    return 0;
  } catch (const csg::Error& e) {
    std::cerr << "gateway: " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "gateway: " << e.what() << std::endl;
    return 1;
  }
}
