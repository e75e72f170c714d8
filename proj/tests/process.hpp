// SPDX-License-Identifier: Apache-2.0
//
// Child-process helpers for tests that exercise the built executables.
#pragma once

#include <fcntl.h>
#include <poll.h>
#include <pty.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace test {

struct Spawned {
  pid_t pid = -1;
  int out_fd = -1;  // child's stdout+stderr (pipe), or the pty master
};

namespace detail {

inline std::vector<char*> c_args(std::vector<std::string>& v) {
  std::vector<char*> out;
  for (auto& s : v) out.push_back(s.data());
  out.push_back(nullptr);
  return out;
}

inline void exec_child(std::vector<std::string> argv, const std::map<std::string, std::string>& env,
                       const std::optional<std::string>& cwd) {
  for (const auto& [k, v] : env) ::setenv(k.c_str(), v.c_str(), 1);
  if (cwd && ::chdir(cwd->c_str()) != 0) ::_exit(126);
  auto args = c_args(argv);
  ::execv(args[0], args.data());
  ::_exit(127);
}

}  // namespace detail

// Starts argv[0] with stdin from /dev/null (or a pipe when stdin_fd is set) and
// stdout+stderr on a pipe.
inline Spawned spawn(std::vector<std::string> argv, const std::map<std::string, std::string>& env = {},
                     const std::optional<std::string>& cwd = std::nullopt) {
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) return {};
  pid_t pid = ::fork();
  if (pid == 0) {
    ::dup2(fds[1], 1);
    ::dup2(fds[1], 2);
    int devnull = ::open("/dev/null", O_RDONLY);
    ::dup2(devnull, 0);
    ::setsid();  // no controlling terminal: secrets must come from the environment
    detail::exec_child(std::move(argv), env, cwd);
  }
  ::close(fds[1]);
  return {pid, fds[0]};
}

// Starts argv[0] on a fresh pseudo-terminal; out_fd is the master side.
inline Spawned spawn_pty(std::vector<std::string> argv, const std::map<std::string, std::string>& env = {},
                         const std::optional<std::string>& cwd = std::nullopt) {
  int master = -1;
  pid_t pid = ::forkpty(&master, nullptr, nullptr, nullptr);
  if (pid == 0) detail::exec_child(std::move(argv), env, cwd);
  return {pid, master};
}

// Reads until `needle` shows up in the accumulated output, EOF, or the deadline.
inline bool read_until(int fd, std::string& acc, std::string_view needle,
                       std::chrono::milliseconds limit = std::chrono::milliseconds(10'000)) {
  auto deadline = std::chrono::steady_clock::now() + limit;
  while (acc.find(needle) == std::string::npos) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) return false;
    pollfd p{fd, POLLIN, 0};
    if (::poll(&p, 1, static_cast<int>(left.count())) <= 0) return false;
    char buf[4096];
    ssize_t n = ::read(fd, buf, sizeof buf);
    if (n <= 0) return acc.find(needle) != std::string::npos;
    acc.append(buf, static_cast<std::size_t>(n));
  }
  return true;
}

inline void drain(int fd, std::string& acc, std::chrono::milliseconds limit = std::chrono::milliseconds(10'000)) {
  read_until(fd, acc, std::string(64, '\x01'), limit);  // sentinel never appears: read to EOF
}

// Exit status, or -1 on timeout (the child is then killed).
inline int wait_exit(pid_t pid, std::chrono::milliseconds limit = std::chrono::milliseconds(15'000)) {
  auto deadline = std::chrono::steady_clock::now() + limit;
  for (;;) {
    int status = 0;
    pid_t r = ::waitpid(pid, &status, WNOHANG);
    if (r == pid) return WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
    if (std::chrono::steady_clock::now() > deadline) {
      ::kill(pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      return -1;
    }
    ::usleep(10'000);
  }
}

struct RunResult {
  int status = -1;
  std::string output;
};

inline RunResult run(std::vector<std::string> argv, const std::map<std::string, std::string>& env = {},
                     const std::optional<std::string>& cwd = std::nullopt) {
  Spawned s = spawn(std::move(argv), env, cwd);
  RunResult r;
  drain(s.out_fd, r.output);
  ::close(s.out_fd);
  r.status = wait_exit(s.pid);
  return r;
}

}  // namespace test
