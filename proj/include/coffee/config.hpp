#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "coffee/clients.hpp"
#include "coffee/error.hpp"
#include "coffee/pairing.hpp"
#include "coffee/sandbox.hpp"
#include "coffee/testgen.hpp"
#include "json.hpp"

namespace coffee {

// How a model role is served. kind is one of:
//   "http"           chat-completions endpoint (base_url, model, auth_env)
//   "mock-echo"      canned reply
//   "mock-sampling"  seeded draw from `pool`
struct EndpointConfig {
  std::string kind = "mock-echo";
  ModelEndpoint endpoint;
  std::string canned;
  std::vector<std::string> pool;
  RetryPolicy retry;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 binds any free port
  std::size_t batch_cap = 256;
  std::size_t job_workers = 2;
  std::size_t http_threads = 16;
  std::filesystem::path job_log;  // empty disables persistence
};

struct PathsConfig {
  std::filesystem::path corpus;  // directory holding the files below
  std::filesystem::path problems = "problems.jsonl";
  std::filesystem::path traces = "traces.jsonl";
  std::filesystem::path edit_fixtures = "edit_fixtures.jsonl";
  std::filesystem::path feedback = "feedback.jsonl";
  std::filesystem::path audit_log;

  // Relative paths resolve against `corpus`.
  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

struct PairingConfig {
  std::size_t n_samples = 10;
  std::size_t cw_cap = 1;
  double rs_min_score = 0.0;
  bool ts_validated = false;
};

struct EnvConfig {
  SandboxConfig sandbox;
  std::map<ModelRole, EndpointConfig> endpoints;
  std::string default_editor = "mock-faithful";
  std::uint64_t seed = 0;
  PathsConfig paths;
  ServiceConfig service;
  TestgenConfig testgen;
  PairingConfig pairing;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> issues);
  const std::vector<std::string>& issues() const { return issues_; }

 private:
  std::vector<std::string> issues_;
};

// Unknown keys and bad values are collected into one ConfigError listing
// every offending field path.
EnvConfig config_from_json(const nlohmann::json& j);
EnvConfig load_config(const std::filesystem::path& path);

// COFFEE_INTERPRETER, COFFEE_PORT, COFFEE_<ROLE>_BASE_URL,
// COFFEE_<ROLE>_MODEL and COFFEE_<ROLE>_AUTH_ENV (ROLE = FEEDBACK, EDITOR,
// ANNOTATOR, JUDGE).
void apply_env_overrides(EnvConfig& config);

// Throws ConfigError.
void validate(const EnvConfig& config);

nlohmann::json to_json(const EnvConfig& config);

// Endpoint for a role; roles without configuration get a mock echo client.
std::shared_ptr<TextGenerator> make_generator(const EnvConfig& config, ModelRole role);

}  // namespace coffee
