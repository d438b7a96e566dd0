#include "coffee/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/syscall.h>
#include <sys/time.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include "coffee/error.hpp"

namespace coffee {
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr std::size_t kReadChunk = 64 * 1024;
constexpr int kPollSliceMs = 20;
constexpr rlim_t kMaxFileSize = 64ull << 20;

// Environment handed to every guest; nothing from the host leaks through.
std::vector<std::string> guest_environment(const fs::path& workdir) {
  return {
      "PATH=/usr/local/bin:/usr/bin:/bin",
      "HOME=" + workdir.string(),
      "TMPDIR=" + workdir.string(),
      "LANG=C.UTF-8",
      "LC_ALL=C.UTF-8",
      "PYTHONHASHSEED=0",
      "PYTHONDONTWRITEBYTECODE=1",
      "PYTHONIOENCODING=utf-8",
  };
}

std::optional<fs::path> resolve_executable(const std::string& name) {
  if (name.empty()) return std::nullopt;
  if (name.find('/') != std::string::npos) {
    if (::access(name.c_str(), X_OK) == 0) return fs::path(name);
    return std::nullopt;
  }
  const char* path_env = std::getenv("PATH");
  std::string path = path_env ? path_env : "/usr/local/bin:/usr/bin:/bin";
  std::stringstream ss(path);
  std::string dir;
  while (std::getline(ss, dir, ':')) {
    if (dir.empty()) continue;
    fs::path candidate = fs::path(dir) / name;
    if (::access(candidate.c_str(), X_OK) == 0) return candidate;
  }
  return std::nullopt;
}

void replace_all(std::string& s, std::string_view from, const std::string& to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Fd& operator=(Fd&& other) noexcept {
    reset();
    fd_ = std::exchange(other.fd_, -1);
    return *this;
  }
  ~Fd() { reset(); }

  int get() const { return fd_; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

struct Pipe {
  Fd read;
  Fd write;
};

Pipe make_pipe() {
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) {
    throw Error(ErrorCode::sandbox_error,
                std::string("pipe2 failed: ") + std::strerror(errno));
  }
  return {Fd(fds[0]), Fd(fds[1])};
}

// Per-execution scratch area: <root>/coffee-XXXXXX/{work/, stdin}.
class ScratchDir {
 public:
  explicit ScratchDir(const fs::path& root) {
    std::string templ = (root / "coffee-XXXXXX").string();
    if (::mkdtemp(templ.data()) == nullptr) {
      throw Error(ErrorCode::sandbox_error,
                  "mkdtemp failed under " + root.string() + ": " +
                      std::strerror(errno));
    }
    path_ = templ;
    fs::create_directory(work());
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  fs::path work() const { return path_ / "work"; }
  fs::path stdin_file() const { return path_ / "stdin"; }

 private:
  fs::path path_;
};

void write_file(const fs::path& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) {
    throw Error(ErrorCode::sandbox_error, "cannot write " + path.string());
  }
}

void set_limit(int resource, rlim_t soft, rlim_t hard) {
  struct rlimit rl;
  rl.rlim_cur = soft;
  rl.rlim_max = hard;
  ::setrlimit(resource, &rl);
}

// Runs in the forked child: only async-signal-safe calls from here on.
[[noreturn]] void exec_child(int stdin_fd, int stdout_fd, int stderr_fd,
                             int report_fd, const char* workdir,
                             const char* exe, char* const* argv,
                             char* const* envp, const ResourceLimits& limits) {
  ::setpgid(0, 0);
  // Best effort: a private network namespace has no usable interfaces.
  ::unshare(CLONE_NEWNET);

  if (::dup2(stdin_fd, 0) < 0 || ::dup2(stdout_fd, 1) < 0 ||
      ::dup2(stderr_fd, 2) < 0 || ::chdir(workdir) != 0) {
    int err = errno;
    (void)!::write(report_fd, &err, sizeof err);
    ::_exit(127);
  }

  rlim_t cpu = static_cast<rlim_t>(std::ceil(limits.cpu_time));
  set_limit(RLIMIT_CPU, cpu, cpu + 1);
  set_limit(RLIMIT_AS, limits.memory, limits.memory);
  set_limit(RLIMIT_FSIZE, kMaxFileSize, kMaxFileSize);
  set_limit(RLIMIT_CORE, 0, 0);

  // Everything above stderr is either already close-on-exec or gets closed.
  if (::syscall(SYS_close_range, 3u, ~0u, 4u /* CLOSE_RANGE_CLOEXEC */) != 0) {
    for (int fd = 3; fd < 1024; ++fd) {
      if (fd != report_fd) ::close(fd);
    }
  }

  ::execve(exe, argv, envp);
  int err = errno;
  (void)!::write(report_fd, &err, sizeof err);
  ::_exit(127);
}

bool stop_requested(const std::stop_token& a, const std::stop_token& b) {
  return a.stop_requested() || b.stop_requested();
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

ExecutionOutcome spawn_failure(std::string message, Clock::time_point start) {
  ExecutionOutcome out;
  out.status = ExecStatus::spawn_failure;
  out.stderr_text = std::move(message);
  out.duration = seconds_since(start);
  return out;
}

bool looks_like_memory_error(const ExecutionOutcome& out) {
  return out.stderr_text.find("MemoryError") != std::string::npos ||
         out.stderr_text.find("std::bad_alloc") != std::string::npos ||
         out.stderr_text.find("Cannot allocate memory") != std::string::npos;
}

ExecutionOutcome execute(std::string_view code, std::string_view input,
                         const ResourceLimits& limits,
                         const Interpreter& interpreter,
                         const fs::path& temp_root, std::stop_token stop,
                         std::stop_token shutdown) {
  limits.validate();
  if (code.empty()) {
    throw Error(ErrorCode::invalid_request, "guest program is empty");
  }
  if (interpreter.argv.empty()) {
    throw Error(ErrorCode::invalid_request, "interpreter argv is empty");
  }
  if (stop_requested(stop, shutdown)) {
    throw Error(ErrorCode::sandbox_error, "execution cancelled");
  }

  const auto start = Clock::now();
  auto exe = resolve_executable(interpreter.argv.front());
  if (!exe) {
    return spawn_failure(
        "interpreter not found: " + interpreter.argv.front(), start);
  }

  ScratchDir scratch(temp_root);
  const fs::path source = scratch.work() / interpreter.source_name;
  write_file(source, code);
  write_file(scratch.stdin_file(), input);

  std::vector<std::string> args = interpreter.argv;
  for (auto& arg : args) replace_all(arg, "{source}", source.string());
  std::vector<std::string> env = guest_environment(scratch.work());
  std::vector<char*> argv, envp;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  for (auto& e : env) envp.push_back(e.data());
  envp.push_back(nullptr);
  const std::string workdir = scratch.work().string();
  const std::string exe_path = exe->string();

  Fd stdin_fd(::open(scratch.stdin_file().c_str(), O_RDONLY | O_CLOEXEC));
  if (stdin_fd.get() < 0) {
    throw Error(ErrorCode::sandbox_error, "cannot open guest stdin");
  }
  Pipe out_pipe = make_pipe();
  Pipe err_pipe = make_pipe();
  Pipe report = make_pipe();

  pid_t pid = ::fork();
  if (pid < 0) {
    return spawn_failure(std::string("fork failed: ") + std::strerror(errno),
                         start);
  }
  if (pid == 0) {
    exec_child(stdin_fd.get(), out_pipe.write.get(), err_pipe.write.get(),
               report.write.get(), workdir.c_str(), exe_path.c_str(),
               argv.data(), envp.data(), limits);
  }
  ::setpgid(pid, pid);
  stdin_fd.reset();
  out_pipe.write.reset();
  err_pipe.write.reset();
  report.write.reset();

  auto kill_group = [pid] {
    ::kill(-pid, SIGKILL);
    ::kill(pid, SIGKILL);
  };

  // Blocks until execve succeeds (pipe closed by CLOEXEC) or reports errno.
  int exec_errno = 0;
  ssize_t n;
  do {
    n = ::read(report.read.get(), &exec_errno, sizeof exec_errno);
  } while (n < 0 && errno == EINTR);
  if (n == static_cast<ssize_t>(sizeof exec_errno)) {
    int status;
    ::waitpid(pid, &status, 0);
    return spawn_failure("cannot start " + exe_path + ": " +
                             std::strerror(exec_errno),
                         start);
  }

  ExecutionOutcome out;
  const auto deadline =
      start + std::chrono::duration_cast<Clock::duration>(
                  std::chrono::duration<double>(limits.wall_time));
  bool timed_out = false, truncated = false, cancelled = false;
  bool out_open = true, err_open = true;
  std::vector<char> buf(kReadChunk);

  auto drain = [&](int fd, std::string& sink, bool& open, bool is_stdout) {
    ssize_t got = ::read(fd, buf.data(), buf.size());
    if (got < 0) {
      if (errno == EINTR || errno == EAGAIN) return;
      open = false;
      return;
    }
    if (got == 0) {
      open = false;
      return;
    }
    std::size_t room = limits.max_output - std::min(limits.max_output, sink.size());
    std::size_t take = std::min(room, static_cast<std::size_t>(got));
    sink.append(buf.data(), take);
    if (is_stdout && take < static_cast<std::size_t>(got)) truncated = true;
  };

  while ((out_open || err_open) && !truncated) {
    if (stop_requested(stop, shutdown)) {
      cancelled = true;
      break;
    }
    auto now = Clock::now();
    if (now >= deadline) {
      timed_out = true;
      break;
    }
    int slice = static_cast<int>(std::min<long long>(
        kPollSliceMs,
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now)
                .count() + 1));
    pollfd fds[2];
    nfds_t count = 0;
    int out_idx = -1, err_idx = -1;
    if (out_open) {
      out_idx = static_cast<int>(count);
      fds[count++] = {out_pipe.read.get(), POLLIN, 0};
    }
    if (err_open) {
      err_idx = static_cast<int>(count);
      fds[count++] = {err_pipe.read.get(), POLLIN, 0};
    }
    int ready = ::poll(fds, count, slice);
    if (ready < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (out_idx >= 0 && fds[out_idx].revents)
      drain(out_pipe.read.get(), out.stdout_text, out_open, true);
    if (err_idx >= 0 && fds[err_idx].revents)
      drain(err_pipe.read.get(), out.stderr_text, err_open, false);
  }

  // Streams are closed; the guest may still be alive (e.g. it closed stdout
  // and kept spinning), so reaping also honors the deadline.
  int status = 0;
  struct rusage usage {};
  bool reaped = false;
  if (!timed_out && !truncated && !cancelled) {
    while (true) {
      pid_t r = ::wait4(pid, &status, WNOHANG, &usage);
      if (r == pid) {
        reaped = true;
        break;
      }
      if (stop_requested(stop, shutdown)) {
        cancelled = true;
        break;
      }
      if (Clock::now() >= deadline) {
        timed_out = true;
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
  }
  kill_group();
  if (!reaped) {
    while (::wait4(pid, &status, 0, &usage) < 0 && errno == EINTR) {
    }
  }
  out.duration = seconds_since(start);

  if (cancelled) {
    throw Error(ErrorCode::sandbox_error, "execution cancelled");
  }
  if (truncated) {
    out.status = ExecStatus::output_truncated;
    return out;
  }
  if (timed_out) {
    out.status = ExecStatus::timeout;
    return out;
  }
  if (WIFEXITED(status)) {
    out.exit_code = WEXITSTATUS(status);
    if (*out.exit_code == 0) {
      out.status = ExecStatus::ok;
    } else if (looks_like_memory_error(out)) {
      out.status = ExecStatus::memory_exceeded;
    } else {
      out.status = ExecStatus::runtime_error;
    }
    return out;
  }
  int sig = WIFSIGNALED(status) ? WTERMSIG(status) : 0;
  std::uint64_t peak = static_cast<std::uint64_t>(usage.ru_maxrss) * 1024;
  if (sig == SIGXCPU) {
    out.status = ExecStatus::timeout;
  } else if (peak >= limits.memory / 10 * 9 || looks_like_memory_error(out)) {
    out.status = ExecStatus::memory_exceeded;
  } else {
    out.status = ExecStatus::runtime_error;
    if (out.stderr_text.empty()) {
      out.stderr_text = "terminated by signal " + std::to_string(sig);
    }
  }
  return out;
}

}  // namespace

void ResourceLimits::validate() const {
  if (!(wall_time > 0) || !(cpu_time > 0) || memory == 0 || max_output == 0) {
    throw Error(ErrorCode::invalid_request,
                "resource limits must be strictly positive");
  }
}

std::string_view to_string(ExecStatus status) {
  switch (status) {
    case ExecStatus::ok: return "ok";
    case ExecStatus::runtime_error: return "runtime_error";
    case ExecStatus::timeout: return "timeout";
    case ExecStatus::memory_exceeded: return "memory_exceeded";
    case ExecStatus::output_truncated: return "output_truncated";
    case ExecStatus::spawn_failure: return "spawn_failure";
  }
  return "spawn_failure";
}

std::optional<ExecStatus> parse_exec_status(std::string_view name) {
  for (auto s : {ExecStatus::ok, ExecStatus::runtime_error, ExecStatus::timeout,
                 ExecStatus::memory_exceeded, ExecStatus::output_truncated,
                 ExecStatus::spawn_failure}) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

Interpreter Interpreter::parse(std::string_view command) {
  Interpreter interp;
  interp.argv.clear();
  std::istringstream ss{std::string(command)};
  std::string word;
  while (ss >> word) interp.argv.push_back(word);
  if (interp.argv.empty()) {
    throw Error(ErrorCode::invalid_request, "interpreter command is empty");
  }
  bool has_source = std::any_of(
      interp.argv.begin(), interp.argv.end(),
      [](const std::string& a) { return a.find("{source}") != std::string::npos; });
  if (!has_source) interp.argv.push_back("{source}");
  return interp;
}

Interpreter Interpreter::from_env_or(Interpreter fallback) {
  const char* env = std::getenv("COFFEE_INTERPRETER");
  if (env == nullptr || *env == '\0') return fallback;
  Interpreter parsed = parse(env);
  parsed.source_name = fallback.source_name;
  return parsed;
}

std::string Interpreter::command() const {
  std::string s;
  for (const auto& a : argv) {
    if (!s.empty()) s += ' ';
    s += a;
  }
  return s;
}

std::string EvalResult::bitmap() const {
  std::string bits;
  bits.reserve(per_case.size());
  for (const auto& c : per_case) bits += c.passed ? '1' : '0';
  return bits;
}

ExecutionOutcome run_program(std::string_view code, std::string_view input,
                             const ResourceLimits& limits,
                             const Interpreter& interpreter,
                             std::stop_token stop) {
  return execute(code, input, limits, interpreter,
                 fs::temp_directory_path(), stop, {});
}

class Sandbox::SlotGuard {
 public:
  explicit SlotGuard(const Sandbox& sb) : sb_(sb) {
    std::unique_lock lock(sb_.mu_);
    ++sb_.queued_;
    sb_.cv_.wait(lock, [&] {
      return sb_.in_flight_ < sb_.config_.max_concurrent ||
             sb_.shutdown_.stop_requested();
    });
    --sb_.queued_;
    ++sb_.in_flight_;
  }
  ~SlotGuard() {
    {
      std::lock_guard lock(sb_.mu_);
      --sb_.in_flight_;
    }
    sb_.cv_.notify_one();
  }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  const Sandbox& sb_;
};

Sandbox::Sandbox(SandboxConfig config) : config_(std::move(config)) {
  config_.limits.validate();
  if (config_.workers == 0) {
    throw Error(ErrorCode::invalid_request, "workers must be >= 1");
  }
  if (config_.max_concurrent == 0) {
    throw Error(ErrorCode::invalid_request, "max_concurrent must be >= 1");
  }
  if (config_.interpreter.argv.empty()) {
    throw Error(ErrorCode::invalid_request, "interpreter argv is empty");
  }
}

ExecutionOutcome Sandbox::run(std::string_view code, std::string_view input,
                              std::stop_token stop) const {
  SlotGuard slot(*this);
  auto out = execute(code, input, config_.limits, config_.interpreter,
                     config_.temp_root, stop, shutdown_.get_token());
  executed_.fetch_add(1, std::memory_order_relaxed);
  return out;
}

EvalResult Sandbox::run_suite(std::string_view code, const TestSuite& suite,
                              std::stop_token stop) const {
  return run_suite(code, suite, config_.policy, config_.workers, stop);
}

EvalResult Sandbox::run_suite(std::string_view code, const TestSuite& suite,
                              ComparePolicy policy, std::size_t workers,
                              std::stop_token stop) const {
  if (suite.cases.empty()) {
    throw Error(ErrorCode::invalid_request,
                "test suite '" + suite.suite_id + "' is empty");
  }
  if (workers == 0) {
    throw Error(ErrorCode::invalid_request, "workers must be >= 1");
  }
  const std::size_t k = suite.cases.size();
  EvalResult result;
  result.total = k;
  result.per_case.resize(k);

  // Workers share an index counter; the first failure stops the rest.
  std::atomic<std::size_t> next{0};
  std::stop_source abort;
  std::mutex err_mu;
  std::exception_ptr first_error;

  auto work = [&] {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= k || abort.stop_requested()) return;
      try {
        std::stop_callback forward(stop, [&] { abort.request_stop(); });
        CaseResult& slot = result.per_case[i];
        slot.index = i;
        slot.outcome = run(code, suite.cases[i].input, abort.get_token());
        if (slot.outcome.status == ExecStatus::spawn_failure) {
          throw Error(ErrorCode::sandbox_error,
                      "spawn failure: " + slot.outcome.stderr_text);
        }
        slot.passed = slot.outcome.status == ExecStatus::ok &&
                      compare_output(slot.outcome.stdout_text,
                                     suite.cases[i].expected_output, policy);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!first_error) first_error = std::current_exception();
        abort.request_stop();
        return;
      }
    }
  };

  std::size_t n_threads = std::min(workers, k);
  if (n_threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work);
  }
  if (first_error) std::rethrow_exception(first_error);
  if (stop.stop_requested()) {
    throw Error(ErrorCode::sandbox_error, "suite run cancelled");
  }

  for (const auto& c : result.per_case) result.pass_count += c.passed ? 1 : 0;
  result.score =
      static_cast<double>(result.pass_count) / static_cast<double>(k);
  return result;
}

void Sandbox::cancel_all() {
  shutdown_.request_stop();
  cv_.notify_all();
}

Sandbox::Stats Sandbox::stats() const {
  std::lock_guard lock(mu_);
  return {config_.max_concurrent, in_flight_, queued_,
          executed_.load(std::memory_order_relaxed)};
}

EvalResult run_suite(std::string_view code, const TestSuite& suite,
                     const ResourceLimits& limits,
                     const Interpreter& interpreter, ComparePolicy policy,
                     std::size_t workers, std::stop_token stop) {
  SandboxConfig cfg;
  cfg.limits = limits;
  cfg.interpreter = interpreter;
  cfg.policy = policy;
  cfg.workers = std::max<std::size_t>(workers, 1);
  cfg.max_concurrent = cfg.workers;
  Sandbox sandbox(std::move(cfg));
  return sandbox.run_suite(code, suite, policy, workers, stop);
}

}  // namespace coffee
