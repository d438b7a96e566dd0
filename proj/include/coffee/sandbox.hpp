#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <string_view>
#include <vector>

namespace coffee {

struct TestCase {
  std::string input;
  // Verbatim stdout of the reference solution; never normalized on disk.
  std::string expected_output;

  bool operator==(const TestCase&) const = default;
};

struct TestSuite {
  std::string suite_id;
  std::vector<TestCase> cases;
};

struct ResourceLimits {
  double wall_time = 5.0;  // seconds per test
  double cpu_time = 5.0;   // seconds per test
  std::uint64_t memory = 256ull << 20;
  std::size_t max_output = 1u << 20;

  // Throws Error(invalid_request) unless every limit is strictly positive.
  void validate() const;
};

// Upper bound on how far past wall_time a killed execution may run.
inline constexpr double kTimeoutGrace = 1.0;

enum class ExecStatus {
  ok,
  runtime_error,
  timeout,
  memory_exceeded,
  output_truncated,
  spawn_failure,
};

std::string_view to_string(ExecStatus status);
std::optional<ExecStatus> parse_exec_status(std::string_view name);

struct ExecutionOutcome {
  ExecStatus status = ExecStatus::spawn_failure;
  std::string stdout_text;
  std::string stderr_text;
  std::optional<int> exit_code;  // absent when the guest died from a signal
  double duration = 0.0;         // seconds
};

// argv template for the guest interpreter. Every occurrence of "{source}"
// in an argument is replaced by the absolute path of the source file.
struct Interpreter {
  std::vector<std::string> argv = {"python3", "{source}"};
  std::string source_name = "main.py";

  static Interpreter parse(std::string_view command);
  // Honors COFFEE_INTERPRETER when set, otherwise returns `fallback`.
  static Interpreter from_env_or(Interpreter fallback);
  std::string command() const;
};

enum class ComparePolicy { exact, trailing_ws, token };

std::string_view to_string(ComparePolicy policy);
std::optional<ComparePolicy> parse_compare_policy(std::string_view name);

// exact: byte equality. trailing_ws: equal after stripping trailing
// whitespace from every line and dropping trailing blank lines. token: equal
// sequences of whitespace-separated tokens.
bool compare_output(std::string_view actual, std::string_view expected,
                    ComparePolicy policy = ComparePolicy::trailing_ws);

struct CaseResult {
  std::size_t index = 0;
  ExecutionOutcome outcome;
  bool passed = false;
};

struct EvalResult {
  std::vector<CaseResult> per_case;  // ordered by case index
  std::size_t pass_count = 0;
  std::size_t total = 0;
  double score = 0.0;  // pass_count / total

  bool pass_all() const { return total > 0 && pass_count == total; }
  // One character per case, '1' for passed.
  std::string bitmap() const;
};

// Runs `code` once with `input` on stdin in a fresh working directory that is
// removed afterwards. Never throws for guest failures; an interpreter that
// cannot be started yields ExecStatus::spawn_failure. Throws
// Error(sandbox_error) if `stop` is triggered mid-run.
ExecutionOutcome run_program(std::string_view code, std::string_view input,
                             const ResourceLimits& limits,
                             const Interpreter& interpreter,
                             std::stop_token stop = {});

struct SandboxConfig {
  ResourceLimits limits;
  Interpreter interpreter;
  ComparePolicy policy = ComparePolicy::trailing_ws;
  std::size_t workers = 4;         // per-suite fan-out
  std::size_t max_concurrent = 8;  // guest processes alive at once
  std::filesystem::path temp_root = std::filesystem::temp_directory_path();
};

// Shareable executor. Every guest process takes one of `max_concurrent`
// slots; callers beyond that wait in line instead of failing.
class Sandbox {
 public:
  explicit Sandbox(SandboxConfig config);
  Sandbox(const Sandbox&) = delete;
  Sandbox& operator=(const Sandbox&) = delete;

  const SandboxConfig& config() const { return config_; }

  ExecutionOutcome run(std::string_view code, std::string_view input,
                       std::stop_token stop = {}) const;

  // Throws Error(invalid_request) for an empty suite and Error(sandbox_error)
  // if any case fails to spawn or the run is cancelled.
  EvalResult run_suite(std::string_view code, const TestSuite& suite,
                       std::stop_token stop = {}) const;
  EvalResult run_suite(std::string_view code, const TestSuite& suite,
                       ComparePolicy policy, std::size_t workers,
                       std::stop_token stop = {}) const;

  // Kills in-flight guests; subsequent runs fail with sandbox_error.
  void cancel_all();

  struct Stats {
    std::size_t capacity = 0;
    std::size_t in_flight = 0;
    std::size_t queued = 0;
    std::uint64_t executed = 0;
  };
  Stats stats() const;

 private:
  class SlotGuard;

  SandboxConfig config_;
  std::stop_source shutdown_;
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  mutable std::size_t in_flight_ = 0;
  mutable std::size_t queued_ = 0;
  mutable std::atomic<std::uint64_t> executed_{0};
};

// Free-function form: an unshared sandbox with exactly `workers` slots.
EvalResult run_suite(std::string_view code, const TestSuite& suite,
                     const ResourceLimits& limits,
                     const Interpreter& interpreter, ComparePolicy policy,
                     std::size_t workers, std::stop_token stop = {});

}  // namespace coffee
