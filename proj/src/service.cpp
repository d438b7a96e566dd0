#include "coffee/service.hpp"

#include <cstdio>

#include "coffee/io.hpp"
#include "http.hpp"

namespace coffee {
namespace {

using json = nlohmann::json;

std::optional<JobStatus> parse_job_status(std::string_view s) {
  for (auto st : {JobStatus::queued, JobStatus::running, JobStatus::done, JobStatus::failed}) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

std::optional<JobKind> parse_job_kind(std::string_view s) {
  for (auto k : {JobKind::score, JobKind::batch_eval, JobKind::pass_at_1, JobKind::audit,
                 JobKind::synthesize}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

std::string format_job_id(std::uint64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "job-%06llu", static_cast<unsigned long long>(n));
  return buf;
}

json job_json(const JobSpec& job) {
  return {{"job_id", job.job_id},
          {"kind", to_string(job.kind)},
          {"status", to_string(job.status)},
          {"result", job.result}};
}

}  // namespace

std::string_view to_string(JobKind k) {
  switch (k) {
    case JobKind::score: return "score";
    case JobKind::batch_eval: return "batch_eval";
    case JobKind::pass_at_1: return "pass_at_1";
    case JobKind::audit: return "audit";
    case JobKind::synthesize: return "synthesize";
  }
  return "batch_eval";
}

std::string_view to_string(JobStatus s) {
  switch (s) {
    case JobStatus::queued: return "queued";
    case JobStatus::running: return "running";
    case JobStatus::done: return "done";
    case JobStatus::failed: return "failed";
  }
  return "queued";
}

JobStore::JobStore(std::filesystem::path log) {
  if (log.empty()) return;
  // Replay an existing log so ids stay unique across restarts.
  if (std::filesystem::exists(log)) {
    for (const auto& line : read_jsonl(log)) {
      JobSpec job;
      job.job_id = line.value("job_id", "");
      auto kind = parse_job_kind(line.value("kind", ""));
      auto status = parse_job_status(line.value("status", ""));
      if (job.job_id.empty() || !kind || !status) continue;
      job.kind = *kind;
      job.status = *status;
      job.payload = line.value("payload", json());
      job.result = line.value("result", json());
      unsigned long long n = 0;
      if (std::sscanf(job.job_id.c_str(), "job-%llu", &n) == 1) {
        next_id_ = std::max<std::uint64_t>(next_id_, n + 1);
      }
      auto& slot = jobs_[job.job_id];
      if (job.payload.is_null()) job.payload = slot.payload;
      slot = std::move(job);
    }
  }
  log_.open(log, std::ios::app);
  if (!log_) throw Error(ErrorCode::invalid_request, "cannot open job log " + log.string());
}

void JobStore::append(const JobSpec& job) {
  if (!log_.is_open()) return;
  json line = job_json(job);
  if (job.status == JobStatus::queued) line["payload"] = job.payload;
  log_ << line.dump() << '\n';
  log_.flush();
}

std::string JobStore::create(JobKind kind, json payload) {
  std::lock_guard lock(mu_);
  JobSpec job;
  job.job_id = format_job_id(next_id_++);
  job.kind = kind;
  job.payload = std::move(payload);
  append(job);
  std::string id = job.job_id;
  jobs_.emplace(id, std::move(job));
  return id;
}

void JobStore::transition(const std::string& job_id, JobStatus next, json result) {
  std::lock_guard lock(mu_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw Error(ErrorCode::not_found, "unknown job_id " + job_id);
  JobSpec& job = it->second;
  bool allowed = (job.status == JobStatus::queued && next == JobStatus::running) ||
                 (job.status == JobStatus::running &&
                  (next == JobStatus::done || next == JobStatus::failed));
  if (!allowed) {
    throw Error(ErrorCode::invalid_request, "illegal job transition " +
                                                std::string(to_string(job.status)) + " -> " +
                                                std::string(to_string(next)));
  }
  job.status = next;
  job.result = std::move(result);
  append(job);
}

std::optional<JobSpec> JobStore::get(const std::string& job_id) const {
  std::lock_guard lock(mu_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

std::map<std::string, std::size_t> JobStore::counts() const {
  std::lock_guard lock(mu_);
  std::map<std::string, std::size_t> out = {{"queued", 0}, {"running", 0}, {"done", 0}, {"failed", 0}};
  for (const auto& [_, job] : jobs_) ++out[std::string(to_string(job.status))];
  return out;
}

std::pair<int, json> error_body(ErrorCode code, const std::string& message) {
  return {http_status(code), {{"error", {{"code", to_string(code)}, {"message", message}}}}};
}

class Service::Impl {
 public:
  Impl(Service& owner, std::shared_ptr<RewardEnv> env, std::shared_ptr<Sandbox> sandbox,
       ServiceConfig config)
      : owner_(owner),
        env_(std::move(env)),
        sandbox_(std::move(sandbox)),
        config_(std::move(config)),
        jobs_(config_.job_log) {
    std::size_t threads = config_.http_threads;
    server_.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    routes();
  }

  int start() {
    int port = config_.port == 0 ? server_.bind_to_any_port(config_.host)
                                 : (server_.bind_to_port(config_.host, config_.port) ? config_.port : -1);
    if (port < 0) {
      throw Error(ErrorCode::invalid_request,
                  "cannot bind " + config_.host + ":" + std::to_string(config_.port));
    }
    for (std::size_t i = 0; i < config_.job_workers; ++i) {
      workers_.emplace_back([this] { job_loop(); });
    }
    listener_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port;
  }

  void stop(bool drain) {
    if (stopped_.exchange(true)) return;
    server_.stop();
    if (listener_.joinable()) listener_.join();
    if (!drain) sandbox_->cancel_all();
    {
      std::lock_guard lock(queue_mu_);
      stopping_ = true;
    }
    queue_cv_.notify_all();
    for (auto& w : workers_) w.join();
    workers_.clear();
  }

 private:
  static void send(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  void fail(httplib::Response& res, ErrorCode code, const std::string& message) {
    ++errors_;
    auto [status, body] = error_body(code, message);
    send(res, status, body);
  }

  template <typename Fn>
  void guarded(httplib::Response& res, Fn fn) {
    ++requests_;
    try {
      fn();
    } catch (const Error& e) {
      fail(res, e.code(), e.what());
    } catch (const json::exception& e) {
      fail(res, ErrorCode::invalid_request, e.what());
    } catch (const std::exception& e) {
      fail(res, ErrorCode::sandbox_error, e.what());
    }
  }

  static json parse_body(const httplib::Request& req) {
    try {
      return json::parse(req.body);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::invalid_request, std::string("malformed JSON body: ") + e.what());
    }
  }

  void routes() {
    server_.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
      if (owner_.ready()) {
        send(res, 200, {{"status", "ready"}});
      } else {
        auto [_, body] = error_body(ErrorCode::sandbox_error, "sandbox canary has not passed");
        body["status"] = "not_ready";
        send(res, 503, body);
      }
    });

    server_.Post("/v1/score", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto request = reward_request_from_json(parse_body(req));
        send(res, 200, to_json(env_->score(request)));
      });
    });

    server_.Post("/v1/batch", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        json body = parse_body(req);
        json items = body.is_array() ? body : body.value("requests", json());
        if (!items.is_array()) throw Error(ErrorCode::invalid_request, "requests: expected array");
        if (items.empty()) throw Error(ErrorCode::invalid_request, "requests: empty batch");
        if (items.size() > config_.batch_cap) {
          throw Error(ErrorCode::capacity, "batch of " + std::to_string(items.size()) +
                                               " exceeds cap " + std::to_string(config_.batch_cap));
        }
        std::string id = jobs_.create(JobKind::batch_eval, items);
        {
          std::lock_guard lock(queue_mu_);
          queue_.push_back(id);
        }
        queue_cv_.notify_one();
        send(res, 202, {{"job_id", id}, {"status", "queued"}, {"count", items.size()}});
      });
    });

    server_.Get(R"(/v1/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        std::string id = req.matches[1];
        auto job = jobs_.get(id);
        if (!job) throw Error(ErrorCode::not_found, "unknown job_id " + id);
        send(res, 200, job_json(*job));
      });
    });

    server_.Post("/v1/pass-at-1", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        json body = parse_body(req);
        double value;
        if (body.contains("counts")) {
          std::vector<CorrectCount> counts;
          for (const auto& c : body.at("counts")) {
            counts.push_back({c.at("correct").get<std::size_t>(), c.at("samples").get<std::size_t>()});
          }
          value = pass_at_1(counts);
        } else {
          value = pass_at_1(body.at("results").get<std::vector<std::vector<bool>>>());
        }
        send(res, 200, {{"pass_at_1", value}});
      });
    });

    server_.Get("/v1/stats", [this](const httplib::Request&, httplib::Response& res) {
      auto s = sandbox_->stats();
      json jobs = json::object();
      for (const auto& [k, v] : jobs_.counts()) jobs[k] = v;
      send(res, 200,
           {{"ready", owner_.ready()},
            {"sandbox",
             {{"capacity", s.capacity},
              {"in_flight", s.in_flight},
              {"queued", s.queued},
              {"executed", s.executed}}},
            {"jobs", jobs},
            {"jobs_pending", pending()},
            {"requests", {{"total", requests_.load()}, {"errors", errors_.load()}}}});
    });
  }

  std::size_t pending() {
    std::lock_guard lock(queue_mu_);
    return queue_.size();
  }

  void job_loop() {
    while (true) {
      std::string id;
      {
        std::unique_lock lock(queue_mu_);
        queue_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
        if (queue_.empty()) return;
        id = std::move(queue_.front());
        queue_.pop_front();
      }
      run_batch(id);
    }
  }

  void run_batch(const std::string& id) {
    auto job = jobs_.get(id);
    if (!job) return;
    jobs_.transition(id, JobStatus::running);
    try {
      const json& items = job->payload;
      std::vector<json> results(items.size());
      std::atomic<std::size_t> next{0};
      auto work = [&] {
        for (std::size_t i = next++; i < items.size(); i = next++) {
          try {
            auto r = env_->score(reward_request_from_json(items[i]));
            results[i] = {{"ok", true}, {"response", to_json(r)}};
          } catch (const Error& e) {
            results[i] = {{"ok", false}, {"error", error_body(e.code(), e.what()).second["error"]}};
          } catch (const std::exception& e) {
            results[i] = {{"ok", false},
                          {"error", error_body(ErrorCode::sandbox_error, e.what()).second["error"]}};
          }
        }
      };
      std::size_t n = std::max<std::size_t>(1, std::min(sandbox_->config().workers, items.size()));
      {
        std::vector<std::jthread> pool;
        for (std::size_t w = 1; w < n; ++w) pool.emplace_back(work);
        work();
      }
      jobs_.transition(id, JobStatus::done, results);
    } catch (const std::exception& e) {
      jobs_.transition(id, JobStatus::failed, {{"message", e.what()}});
    }
  }

  Service& owner_;
  std::shared_ptr<RewardEnv> env_;
  std::shared_ptr<Sandbox> sandbox_;
  ServiceConfig config_;
  JobStore jobs_;
  httplib::Server server_;
  std::thread listener_;
  std::vector<std::thread> workers_;
  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::deque<std::string> queue_;
  bool stopping_ = false;
  std::atomic<bool> stopped_{false};
  std::atomic<std::uint64_t> requests_{0};
  std::atomic<std::uint64_t> errors_{0};

  friend class Service;
};

Service::Service(std::shared_ptr<RewardEnv> env, std::shared_ptr<Sandbox> sandbox,
                 ServiceConfig config)
    : impl_(std::make_unique<Impl>(*this, std::move(env), std::move(sandbox), std::move(config))) {}

Service::~Service() { stop(true); }

int Service::start() {
  port_ = impl_->start();
  return port_;
}

bool Service::run_canary() {
  try {
    auto out = impl_->sandbox_->run("print('ok')\n", "");
    ready_ = out.status == ExecStatus::ok && out.stdout_text == "ok\n";
  } catch (const Error&) {
    ready_ = false;
  }
  return ready_;
}

void Service::stop(bool drain) {
  if (impl_) impl_->stop(drain);
}

}  // namespace coffee
