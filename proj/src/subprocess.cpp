// SPDX-License-Identifier: Apache-2.0
#include "april/subprocess.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

#include "april/errors.hpp"

extern char** environ;

namespace april {

namespace {

constexpr std::size_t kErrCap = 8 * 1024;

struct Fd {
  int fd = -1;
  Fd() = default;
  explicit Fd(int f) : fd(f) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { reset(); }
  void reset() {
    if (fd >= 0) ::close(fd);
    fd = -1;
  }
};

void make_pipe(Fd& read_end, Fd& write_end) {
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) throw EnvironmentError(std::string("pipe: ") + std::strerror(errno));
  read_end.fd = fds[0];
  write_end.fd = fds[1];
}

}  // namespace

ProcessOutcome run_process(const std::vector<std::string>& argv, const std::filesystem::path& cwd,
                           const std::map<std::string, std::string>& extra_env, const std::string& input,
                           std::chrono::milliseconds timeout) {
  Fd in_r, in_w, out_r, out_w, err_r, err_w, exec_r, exec_w;
  make_pipe(in_r, in_w);
  make_pipe(out_r, out_w);
  make_pipe(err_r, err_w);
  make_pipe(exec_r, exec_w);

  // Everything the child needs is prepared before fork.
  std::vector<std::string> env_strings;
  for (char** e = environ; *e; ++e) {
    std::string_view kv(*e);
    auto eq = kv.find('=');
    if (eq != std::string_view::npos && extra_env.count(std::string(kv.substr(0, eq)))) continue;
    env_strings.emplace_back(kv);
  }
  for (const auto& [k, v] : extra_env) env_strings.push_back(k + "=" + v);
  std::vector<char*> envp;
  for (auto& s : env_strings) envp.push_back(s.data());
  envp.push_back(nullptr);
  std::vector<std::string> args = argv;
  std::vector<char*> cargv;
  for (auto& a : args) cargv.push_back(a.data());
  cargv.push_back(nullptr);
  std::string cwd_str = cwd.string();

  pid_t pid = ::fork();
  if (pid < 0) throw EnvironmentError(std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(in_r.fd, STDIN_FILENO);
    ::dup2(out_w.fd, STDOUT_FILENO);
    ::dup2(err_w.fd, STDERR_FILENO);
    if (cwd_str.empty() || ::chdir(cwd_str.c_str()) == 0) ::execvpe(cargv[0], cargv.data(), envp.data());
    int err = errno;
    [[maybe_unused]] auto n = ::write(exec_w.fd, &err, sizeof err);
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  in_r.reset();
  out_w.reset();
  err_w.reset();
  exec_w.reset();

  int exec_errno = 0;
  if (::read(exec_r.fd, &exec_errno, sizeof exec_errno) == static_cast<ssize_t>(sizeof exec_errno)) {
    ::waitpid(pid, nullptr, 0);
    throw EnvironmentError("cannot launch '" + argv.front() + "': " + std::strerror(exec_errno));
  }

  ::fcntl(in_w.fd, F_SETFL, O_NONBLOCK);
  ::signal(SIGPIPE, SIG_IGN);

  ProcessOutcome outcome;
  std::size_t written = 0;
  if (input.empty()) in_w.reset();
  auto deadline = std::chrono::steady_clock::now() + timeout;
  char buf[65536];
  while (out_r.fd >= 0 || err_r.fd >= 0) {
    auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (remaining.count() <= 0) {
      outcome.timed_out = true;
      break;
    }
    std::vector<pollfd> fds;
    if (in_w.fd >= 0) fds.push_back({in_w.fd, POLLOUT, 0});
    if (out_r.fd >= 0) fds.push_back({out_r.fd, POLLIN, 0});
    if (err_r.fd >= 0) fds.push_back({err_r.fd, POLLIN, 0});
    int rc = ::poll(fds.data(), fds.size(), static_cast<int>(std::min<long long>(remaining.count(), 1000)));
    if (rc < 0 && errno != EINTR) break;
    for (const auto& p : fds) {
      if (!p.revents) continue;
      if (p.fd == in_w.fd) {
        ssize_t n = ::write(in_w.fd, input.data() + written, input.size() - written);
        if (n > 0) written += static_cast<std::size_t>(n);
        if (n < 0 && errno != EAGAIN) written = input.size();
        if (written >= input.size()) in_w.reset();
      } else {
        Fd& src = p.fd == out_r.fd ? out_r : err_r;
        std::string& dst = p.fd == out_r.fd ? outcome.out : outcome.err;
        ssize_t n = ::read(src.fd, buf, sizeof buf);
        if (n > 0) {
          dst.append(buf, static_cast<std::size_t>(n));
          if (&dst == &outcome.err && dst.size() > 4 * kErrCap) dst = dst.substr(dst.size() - kErrCap);
        } else if (n == 0 || (errno != EAGAIN && errno != EINTR)) {
          src.reset();
        }
      }
    }
  }
  int status = 0;
  if (outcome.timed_out) {
    ::kill(-pid, SIGKILL);
    ::kill(pid, SIGKILL);
    ::waitpid(pid, &status, 0);
    return outcome;
  }
  // Output pipes are closed; the child may still be exiting.
  while (true) {
    pid_t w = ::waitpid(pid, &status, WNOHANG);
    if (w == pid) break;
    if (std::chrono::steady_clock::now() >= deadline) {
      ::kill(-pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      outcome.timed_out = true;
      return outcome;
    }
    ::usleep(1000);
  }
  outcome.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  return outcome;
}

}  // namespace april
