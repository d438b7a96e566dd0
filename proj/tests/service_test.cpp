#include <gtest/gtest.h>

#include <chrono>
#include <fstream>
#include <thread>

#include "coffee/service.hpp"
#include "http.hpp"
#include "support.hpp"

using namespace coffee;
using nlohmann::json;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "coffee_service_test";
  std::filesystem::create_directories(dir);
  auto p = dir / (name + "-" + std::to_string(::getpid()));
  std::filesystem::remove(p);
  return p;
}

const char* kAddWrong = "a, b = map(int, input().split())\nprint(a * b)\n";

json score_body(const std::string& feedback, const std::string& editor = "mock-faithful") {
  return {{"problem_id", "add-two"}, {"wrong_code", kAddWrong}, {"feedback", feedback},
          {"editor", editor}};
}

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    sandbox_ = coffee::testing::fixture_sandbox();
    ServiceConfig cfg;
    cfg.port = 0;
    cfg.batch_cap = 4;
    service_ = std::make_unique<Service>(coffee::testing::fixture_env(sandbox_), sandbox_, cfg);
    port_ = service_->start();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    client_->set_read_timeout(30, 0);
  }

  void TearDown() override { service_->stop(true); }

  json post(const std::string& path, const json& body, int expect) {
    auto res = client_->Post(path, body.dump(), "application/json");
    EXPECT_TRUE(res) << path;
    if (!res) return nullptr;
    EXPECT_EQ(res->status, expect) << res->body;
    return json::parse(res->body);
  }

  json get(const std::string& path, int expect) {
    auto res = client_->Get(path);
    EXPECT_TRUE(res) << path;
    if (!res) return nullptr;
    EXPECT_EQ(res->status, expect) << res->body;
    return json::parse(res->body);
  }

  json wait_job(const std::string& id) {
    for (int i = 0; i < 600; ++i) {
      json j = get("/v1/jobs/" + id, 200);
      if (j["status"] == "done" || j["status"] == "failed") return j;
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    ADD_FAILURE() << "job " << id << " did not finish";
    return nullptr;
  }

  std::shared_ptr<Sandbox> sandbox_;
  std::unique_ptr<Service> service_;
  std::unique_ptr<httplib::Client> client_;
  int port_ = 0;
};

TEST_F(ServiceTest, HealthIs503UntilCanaryPasses) {
  json before = get("/health", 503);
  EXPECT_EQ(before["error"]["code"], "sandbox_error");
  ASSERT_TRUE(service_->run_canary());
  EXPECT_EQ(get("/health", 200)["status"], "ready");
}

TEST_F(ServiceTest, ScoreReturnsResponse) {
  json ok = post("/v1/score", score_body("[feedback:correct] use +"), 200);
  EXPECT_EQ(ok["score"], 1.0);
  EXPECT_EQ(ok["pass_all"], true);
  EXPECT_EQ(ok["eval"]["bitmap"], "111111");

  json bad = post("/v1/score", score_body("[feedback:wrong] parse differently"), 200);
  EXPECT_EQ(bad["score"], 0.0);
  EXPECT_EQ(bad["pass_all"], false);
}

TEST_F(ServiceTest, ScoreErrorsMapToStatusCodes) {
  json body = score_body("x");
  body["problem_id"] = "missing";
  EXPECT_EQ(post("/v1/score", body, 404)["error"]["code"], "not_found");
  EXPECT_EQ(post("/v1/score", score_body("x", "nope"), 400)["error"]["code"], "invalid_request");
  EXPECT_EQ(post("/v1/score", score_body("x", "broken"), 502)["error"]["code"],
            "upstream_model_error");

  auto res = client_->Post("/v1/score", "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(json::parse(res->body)["error"]["code"], "invalid_request");
}

TEST_F(ServiceTest, ScoreIsIdempotent) {
  json a = post("/v1/score", score_body("[feedback:correct] z"), 200);
  json b = post("/v1/score", score_body("[feedback:correct] z"), 200);
  a.erase("latency");
  b.erase("latency");
  EXPECT_EQ(a, b);
}

TEST_F(ServiceTest, BatchKeepsOrderAndIsolatesFailures) {
  json reqs = json::array({score_body("[feedback:correct] a"), score_body("x", "broken"),
                           score_body("[feedback:wrong] b")});
  json accepted = post("/v1/batch", {{"requests", reqs}}, 202);
  ASSERT_TRUE(accepted.contains("job_id"));
  json job = wait_job(accepted["job_id"]);
  ASSERT_EQ(job["status"], "done");
  const json& r = job["result"];
  ASSERT_EQ(r.size(), 3u);
  EXPECT_TRUE(r[0]["ok"].get<bool>());
  EXPECT_EQ(r[0]["response"]["score"], 1.0);
  EXPECT_FALSE(r[1]["ok"].get<bool>());
  EXPECT_EQ(r[1]["error"]["code"], "upstream_model_error");
  EXPECT_TRUE(r[2]["ok"].get<bool>());
  EXPECT_EQ(r[2]["response"]["score"], 0.0);
}

TEST_F(ServiceTest, BatchRejectsEmptyAndOversized) {
  EXPECT_EQ(post("/v1/batch", {{"requests", json::array()}}, 400)["error"]["code"],
            "invalid_request");
  json many = json::array();
  for (int i = 0; i < 5; ++i) many.push_back(score_body("x"));
  EXPECT_EQ(post("/v1/batch", {{"requests", many}}, 413)["error"]["code"], "capacity");
}

TEST_F(ServiceTest, UnknownJobIs404) {
  EXPECT_EQ(get("/v1/jobs/job-999999", 404)["error"]["code"], "not_found");
}

TEST_F(ServiceTest, PassAt1Endpoint) {
  json r = post("/v1/pass-at-1", {{"results", {{true, false}, {true, true}}}}, 200);
  EXPECT_DOUBLE_EQ(r["pass_at_1"].get<double>(), 75.0);
  json c = post("/v1/pass-at-1",
                {{"counts", {{{"correct", 1}, {"samples", 4}}, {{"correct", 3}, {"samples", 4}}}}},
                200);
  EXPECT_DOUBLE_EQ(c["pass_at_1"].get<double>(), 50.0);
  EXPECT_EQ(post("/v1/pass-at-1", {{"results", json::array()}}, 400)["error"]["code"],
            "invalid_request");
}

TEST_F(ServiceTest, StatsReportCounters) {
  post("/v1/score", score_body("[feedback:correct] a"), 200);
  json body = score_body("x");
  body["problem_id"] = "missing";
  post("/v1/score", body, 404);
  json s = get("/v1/stats", 200);
  EXPECT_EQ(s["requests"]["total"], 2);
  EXPECT_EQ(s["requests"]["errors"], 1);
  EXPECT_EQ(s["sandbox"]["capacity"], 8);
  EXPECT_GE(s["sandbox"]["executed"].get<std::uint64_t>(), 6u);
  EXPECT_EQ(s["jobs"]["done"], 0);
}

TEST_F(ServiceTest, ConcurrentScoresMatchSequential) {
  std::vector<json> bodies;
  for (int i = 0; i < 24; ++i) {
    bodies.push_back(score_body(i % 3 ? "[feedback:wrong] w" : "[feedback:correct] c"));
  }
  std::vector<double> sequential;
  for (const auto& b : bodies) sequential.push_back(post("/v1/score", b, 200)["score"]);

  std::vector<double> concurrent(bodies.size(), -1.0);
  std::vector<int> status(bodies.size(), 0);
  {
    std::vector<std::jthread> threads;
    for (std::size_t i = 0; i < bodies.size(); ++i) {
      threads.emplace_back([&, i] {
        httplib::Client c("127.0.0.1", port_);
        c.set_read_timeout(60, 0);
        auto res = c.Post("/v1/score", bodies[i].dump(), "application/json");
        if (!res) return;
        status[i] = res->status;
        if (res->status == 200) concurrent[i] = json::parse(res->body)["score"];
      });
    }
  }
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    EXPECT_EQ(status[i], 200) << i;
    EXPECT_EQ(concurrent[i], sequential[i]) << i;
  }
}

TEST(JobStore, TransitionsAreValidated) {
  JobStore store;
  std::string id = store.create(JobKind::batch_eval, json::array());
  EXPECT_EQ(id, "job-000001");
  EXPECT_THROW(store.transition(id, JobStatus::done), Error);
  store.transition(id, JobStatus::running);
  EXPECT_THROW(store.transition(id, JobStatus::queued), Error);
  store.transition(id, JobStatus::done, json::array({1}));
  EXPECT_THROW(store.transition(id, JobStatus::failed), Error);
  EXPECT_EQ(store.get(id)->status, JobStatus::done);
  EXPECT_FALSE(store.get("job-000002"));
  try {
    store.transition("job-000777", JobStatus::running);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::not_found);
  }
  EXPECT_EQ(store.counts().at("done"), 1u);
}

TEST(JobStore, LogReplaysAcrossRestarts) {
  auto log = temp_file("jobs.jsonl");
  std::string first;
  {
    JobStore store(log);
    first = store.create(JobKind::batch_eval, json::array({"p"}));
    store.transition(first, JobStatus::running);
    store.transition(first, JobStatus::done, json::array({json{{"ok", true}}}));
    store.create(JobKind::batch_eval, json::array());
  }
  JobStore again(log);
  auto job = again.get(first);
  ASSERT_TRUE(job);
  EXPECT_EQ(job->status, JobStatus::done);
  EXPECT_EQ(job->payload, json::array({"p"}));
  EXPECT_EQ(job->result[0]["ok"], true);
  EXPECT_EQ(again.create(JobKind::batch_eval, json::array()), "job-000003");

  std::ifstream in(log);
  std::size_t lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  EXPECT_EQ(lines, 5u);
}

TEST(ErrorBody, StatusPerCategory) {
  EXPECT_EQ(error_body(ErrorCode::invalid_request, "m").first, 400);
  EXPECT_EQ(error_body(ErrorCode::not_found, "m").first, 404);
  EXPECT_EQ(error_body(ErrorCode::upstream_model_error, "m").first, 502);
  EXPECT_EQ(error_body(ErrorCode::sandbox_error, "m").first, 500);
  EXPECT_EQ(error_body(ErrorCode::capacity, "m").first, 413);
  EXPECT_EQ(error_body(ErrorCode::capacity, "m").second["error"]["message"], "m");
}

}  // namespace
