#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "coffee/config.hpp"
#include "coffee/reward.hpp"
#include "json.hpp"

namespace coffee {

enum class JobKind { score, batch_eval, pass_at_1, audit, synthesize };
enum class JobStatus { queued, running, done, failed };

std::string_view to_string(JobKind k);
std::string_view to_string(JobStatus s);

struct JobSpec {
  std::string job_id;
  JobKind kind = JobKind::batch_eval;
  nlohmann::json payload;
  JobStatus status = JobStatus::queued;
  nlohmann::json result;  // per-item outcomes once done
};

// Single-writer, append-only job log: one line per status transition.
class JobStore {
 public:
  explicit JobStore(std::filesystem::path log = {});

  std::string create(JobKind kind, nlohmann::json payload);
  // Only queued->running->{done, failed}; anything else throws.
  void transition(const std::string& job_id, JobStatus next, nlohmann::json result = nullptr);
  std::optional<JobSpec> get(const std::string& job_id) const;
  std::map<std::string, std::size_t> counts() const;

 private:
  void append(const JobSpec& job);

  mutable std::mutex mu_;
  std::map<std::string, JobSpec> jobs_;
  std::uint64_t next_id_ = 1;
  std::ofstream log_;
};

// Maps an exception to {"error": {"code", "message"}} and its HTTP status.
std::pair<int, nlohmann::json> error_body(ErrorCode code, const std::string& message);

// HTTP front end over a RewardEnv:
//   GET  /health          200 once the canary passed, else 503
//   POST /v1/score        RewardRequest -> RewardResponse
//   POST /v1/batch        {requests:[...]} -> 202 {job_id}
//   GET  /v1/jobs/{id}    job status and ordered per-item results
//   POST /v1/pass-at-1    {results:[[bool...]...]} or {counts:[{correct,samples}]}
//   GET  /v1/stats        sandbox queue depth, job counts, request counts
class Service {
 public:
  Service(std::shared_ptr<RewardEnv> env, std::shared_ptr<Sandbox> sandbox,
          ServiceConfig config);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds and starts serving; returns the bound port. Throws
  // Error(invalid_request) if the port cannot be bound.
  int start();
  // Runs a trivial program through the sandbox; readiness follows the result.
  bool run_canary();
  bool ready() const { return ready_; }
  // Stops accepting, drains queued and running jobs, then joins. With
  // drain=false running guests are killed instead.
  void stop(bool drain = true);

  int port() const { return port_; }

 private:
  class Impl;
  std::unique_ptr<Impl> impl_;
  std::atomic<bool> ready_{false};
  int port_ = 0;
};

}  // namespace coffee
