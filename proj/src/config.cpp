#include "coffee/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

namespace coffee {
namespace {

using json = nlohmann::json;

constexpr ModelRole kRoles[] = {ModelRole::feedback, ModelRole::editor, ModelRole::annotator,
                                ModelRole::judge};

// Reads typed fields from one JSON object, recording problems instead of
// throwing so that every bad field is reported at once.
class Section {
 public:
  Section(const json& j, std::string path, std::vector<std::string>& issues)
      : j_(j), path_(std::move(path)), issues_(issues) {
    if (!j_.is_object()) {
      issue("", "expected object");
      return;
    }
  }

  bool ok() const { return j_.is_object(); }

  void number(const char* key, double& out) {
    if (auto v = get(key)) {
      if (v->is_number()) {
        out = v->get<double>();
      } else {
        issue(key, "expected number");
      }
    }
  }

  template <typename Int>
  void integer(const char* key, Int& out) {
    if (auto v = get(key)) {
      if (v->is_number_integer() && (std::is_signed_v<Int> || v->get<long long>() >= 0)) {
        out = v->get<Int>();
      } else {
        issue(key, std::is_signed_v<Int> ? "expected integer" : "expected non-negative integer");
      }
    }
  }

  void boolean(const char* key, bool& out) {
    if (auto v = get(key)) {
      if (v->is_boolean()) {
        out = v->get<bool>();
      } else {
        issue(key, "expected boolean");
      }
    }
  }

  void string(const char* key, std::string& out) {
    if (auto v = get(key)) {
      if (v->is_string()) {
        out = v->get<std::string>();
      } else {
        issue(key, "expected string");
      }
    }
  }

  void path(const char* key, std::filesystem::path& out) {
    std::string s = out.string();
    string(key, s);
    out = s;
  }

  void strings(const char* key, std::vector<std::string>& out) {
    if (auto v = get(key)) {
      if (!v->is_array()) {
        issue(key, "expected array of strings");
        return;
      }
      out.clear();
      for (const auto& item : *v) {
        if (!item.is_string()) {
          issue(key, "expected array of strings");
          return;
        }
        out.push_back(item.get<std::string>());
      }
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    if (!ok() || !j_.contains(key)) return nullptr;
    return &j_[key];
  }

  void reject_unknown() {
    if (!ok()) return;
    for (const auto& [k, _] : j_.items()) {
      if (!seen_.count(k)) issue(k.c_str(), "unknown key");
    }
  }

  void issue(const char* key, const std::string& message) {
    std::string where = path_;
    if (*key) where += (where.empty() ? "" : ".") + std::string(key);
    issues_.push_back((where.empty() ? "<root>" : where) + ": " + message);
  }

  std::string sub(const char* key) const {
    return path_.empty() ? std::string(key) : path_ + "." + key;
  }

 private:
  const json* get(const char* key) {
    seen_.insert(key);
    if (!ok() || !j_.contains(key)) return nullptr;
    return &j_[key];
  }

  const json& j_;
  std::string path_;
  std::vector<std::string>& issues_;
  std::set<std::string> seen_;
};

std::string join(const std::vector<std::string>& issues) {
  std::string out = "invalid config";
  for (const auto& i : issues) out += "\n  " + i;
  return out;
}

void read_sandbox(Section s, SandboxConfig& c) {
  std::string interp = c.interpreter.command();
  s.string("interpreter", interp);
  c.interpreter = Interpreter::parse(interp);
  s.number("wall_time", c.limits.wall_time);
  s.number("cpu_time", c.limits.cpu_time);
  std::uint64_t mb = c.limits.memory >> 20;
  s.integer("memory_mb", mb);
  c.limits.memory = mb << 20;
  s.integer("max_output_bytes", c.limits.max_output);
  std::string policy(to_string(c.policy));
  s.string("policy", policy);
  if (auto p = parse_compare_policy(policy)) {
    c.policy = *p;
  } else {
    s.issue("policy", "expected exact, trailing_ws or token");
  }
  s.integer("workers", c.workers);
  s.integer("max_concurrent", c.max_concurrent);
  s.path("temp_root", c.temp_root);
  s.reject_unknown();
}

void read_endpoint(Section s, ModelRole role, EndpointConfig& e) {
  e.endpoint.role = role;
  s.string("kind", e.kind);
  s.string("base_url", e.endpoint.base_url);
  s.string("model", e.endpoint.model_name);
  s.string("auth_env", e.endpoint.auth_env);
  s.string("canned", e.canned);
  s.strings("pool", e.pool);
  s.integer("max_attempts", e.retry.max_attempts);
  long long timeout = e.retry.request_timeout.count();
  s.integer("timeout_s", timeout);
  e.retry.request_timeout = std::chrono::seconds(timeout);
  long long backoff = e.retry.initial_backoff.count();
  s.integer("initial_backoff_ms", backoff);
  e.retry.initial_backoff = std::chrono::milliseconds(backoff);
  s.integer("max_in_flight", e.retry.max_in_flight);
  s.reject_unknown();
}

void read_params(Section& s, GenerationParams& p) {
  s.number("temperature", p.temperature);
  s.number("top_p", p.top_p);
  s.integer("max_tokens", p.max_tokens);
  s.integer("n_samples", p.n_samples);
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> issues)
    : Error(ErrorCode::invalid_request, join(issues)), issues_(std::move(issues)) {}

std::filesystem::path PathsConfig::resolve(const std::filesystem::path& p) const {
  if (p.empty() || p.is_absolute() || corpus.empty()) return p;
  return corpus / p;
}

EnvConfig config_from_json(const json& j) {
  EnvConfig c;
  std::vector<std::string> issues;
  Section root(j, "", issues);
  root.integer("seed", c.seed);
  root.string("default_editor", c.default_editor);

  if (const json* v = root.child("sandbox")) read_sandbox(Section(*v, "sandbox", issues), c.sandbox);

  if (const json* v = root.child("endpoints")) {
    Section eps(*v, "endpoints", issues);
    for (auto role : kRoles) {
      std::string name(to_string(role));
      if (const json* e = eps.child(name.c_str())) {
        EndpointConfig ec;
        read_endpoint(Section(*e, eps.sub(name.c_str()), issues), role, ec);
        c.endpoints[role] = std::move(ec);
      }
    }
    eps.reject_unknown();
  }

  if (const json* v = root.child("paths")) {
    Section s(*v, "paths", issues);
    s.path("corpus", c.paths.corpus);
    s.path("problems", c.paths.problems);
    s.path("traces", c.paths.traces);
    s.path("edit_fixtures", c.paths.edit_fixtures);
    s.path("feedback", c.paths.feedback);
    s.path("audit_log", c.paths.audit_log);
    s.reject_unknown();
  }

  if (const json* v = root.child("service")) {
    Section s(*v, "service", issues);
    s.string("host", c.service.host);
    s.integer("port", c.service.port);
    s.integer("batch_cap", c.service.batch_cap);
    s.integer("job_workers", c.service.job_workers);
    s.integer("http_threads", c.service.http_threads);
    s.path("job_log", c.service.job_log);
    s.reject_unknown();
  }

  if (const json* v = root.child("testgen")) {
    Section s(*v, "testgen", issues);
    s.integer("target_count", c.testgen.target_count);
    s.integer("request_budget", c.testgen.request_budget);
    s.integer("min_suite_size", c.testgen.min_suite_size);
    s.boolean("tidy_inputs", c.testgen.tidy_inputs);
    read_params(s, c.testgen.params);
    s.reject_unknown();
  }

  if (const json* v = root.child("pairing")) {
    Section s(*v, "pairing", issues);
    s.integer("n_samples", c.pairing.n_samples);
    s.integer("cw_cap", c.pairing.cw_cap);
    s.number("rs_min_score", c.pairing.rs_min_score);
    s.boolean("ts_validated", c.pairing.ts_validated);
    s.reject_unknown();
  }
  root.reject_unknown();

  if (!issues.empty()) throw ConfigError(std::move(issues));
  return c;
}

EnvConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::not_found, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError({path.string() + ": " + e.what()});
  }
  EnvConfig c = config_from_json(j);
  if (!c.paths.corpus.empty() && c.paths.corpus.is_relative()) {
    c.paths.corpus = path.parent_path() / c.paths.corpus;
  }
  return c;
}

void apply_env_overrides(EnvConfig& config) {
  config.sandbox.interpreter = Interpreter::from_env_or(config.sandbox.interpreter);
  if (const char* port = std::getenv("COFFEE_PORT")) {
    try {
      config.service.port = std::stoi(port);
    } catch (const std::exception&) {
      throw ConfigError({"COFFEE_PORT: expected integer"});
    }
  }
  for (auto role : kRoles) {
    std::string upper(to_string(role));
    for (char& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    std::string prefix = "COFFEE_" + upper + "_";
    const char* url = std::getenv((prefix + "BASE_URL").c_str());
    const char* model = std::getenv((prefix + "MODEL").c_str());
    const char* auth = std::getenv((prefix + "AUTH_ENV").c_str());
    if (!url && !model && !auth) continue;
    auto& ep = config.endpoints[role];
    ep.endpoint.role = role;
    if (url) {
      ep.kind = "http";
      ep.endpoint.base_url = url;
    }
    if (model) ep.endpoint.model_name = model;
    if (auth) ep.endpoint.auth_env = auth;
  }
}

void validate(const EnvConfig& c) {
  std::vector<std::string> issues;
  auto positive = [&](bool ok, const char* field) {
    if (!ok) issues.push_back(std::string(field) + ": must be positive");
  };
  positive(c.sandbox.limits.wall_time > 0, "sandbox.wall_time");
  positive(c.sandbox.limits.cpu_time > 0, "sandbox.cpu_time");
  positive(c.sandbox.limits.memory > 0, "sandbox.memory_mb");
  positive(c.sandbox.limits.max_output > 0, "sandbox.max_output_bytes");
  positive(c.sandbox.workers > 0, "sandbox.workers");
  positive(c.sandbox.max_concurrent > 0, "sandbox.max_concurrent");
  if (c.sandbox.interpreter.argv.empty() || c.sandbox.interpreter.argv[0].empty()) {
    issues.push_back("sandbox.interpreter: empty command");
  }
  if (c.service.port < 0 || c.service.port > 65535) {
    issues.push_back("service.port: must be within 0..65535");
  }
  positive(c.service.batch_cap > 0, "service.batch_cap");
  positive(c.service.job_workers > 0, "service.job_workers");
  positive(c.service.http_threads > 0, "service.http_threads");
  positive(c.testgen.target_count > 0, "testgen.target_count");
  positive(c.testgen.request_budget > 0, "testgen.request_budget");
  try {
    c.testgen.params.validate();
  } catch (const Error& e) {
    issues.push_back(std::string("testgen: ") + e.what());
  }
  positive(c.pairing.n_samples > 0, "pairing.n_samples");
  positive(c.pairing.cw_cap > 0, "pairing.cw_cap");
  static const std::set<std::string> editors = {"mock-faithful", "mock-skewed", "model"};
  if (!editors.count(c.default_editor)) {
    issues.push_back("default_editor: expected mock-faithful, mock-skewed or model");
  }
  for (const auto& [role, ep] : c.endpoints) {
    std::string where = "endpoints." + std::string(to_string(role));
    if (ep.kind == "http") {
      if (ep.endpoint.base_url.empty()) issues.push_back(where + ".base_url: required for http");
      if (ep.endpoint.model_name.empty()) issues.push_back(where + ".model: required for http");
      if (ep.retry.max_attempts < 1) issues.push_back(where + ".max_attempts: must be positive");
    } else if (ep.kind == "mock-sampling") {
      if (ep.pool.empty()) issues.push_back(where + ".pool: required for mock-sampling");
    } else if (ep.kind != "mock-echo") {
      issues.push_back(where + ".kind: expected http, mock-echo or mock-sampling");
    }
  }
  if (!issues.empty()) throw ConfigError(std::move(issues));
}

nlohmann::json to_json(const EnvConfig& c) {
  json eps = json::object();
  for (const auto& [role, ep] : c.endpoints) {
    json e = {{"kind", ep.kind}};
    if (ep.kind == "http") {
      e["base_url"] = ep.endpoint.base_url;
      e["model"] = ep.endpoint.model_name;
      e["auth_env"] = ep.endpoint.auth_env;
    }
    eps[std::string(to_string(role))] = e;
  }
  return {{"seed", c.seed},
          {"default_editor", c.default_editor},
          {"sandbox",
           {{"interpreter", c.sandbox.interpreter.command()},
            {"wall_time", c.sandbox.limits.wall_time},
            {"cpu_time", c.sandbox.limits.cpu_time},
            {"memory_mb", c.sandbox.limits.memory >> 20},
            {"max_output_bytes", c.sandbox.limits.max_output},
            {"policy", to_string(c.sandbox.policy)},
            {"workers", c.sandbox.workers},
            {"max_concurrent", c.sandbox.max_concurrent}}},
          {"endpoints", eps},
          {"service",
           {{"host", c.service.host},
            {"port", c.service.port},
            {"batch_cap", c.service.batch_cap},
            {"job_workers", c.service.job_workers},
            {"http_threads", c.service.http_threads}}}};
}

std::shared_ptr<TextGenerator> make_generator(const EnvConfig& config, ModelRole role) {
  auto it = config.endpoints.find(role);
  if (it == config.endpoints.end()) return std::make_shared<EchoClient>("");
  const EndpointConfig& ep = it->second;
  if (ep.kind == "http") return std::make_shared<HttpChatClient>(ep.endpoint, ep.retry);
  if (ep.kind == "mock-sampling") return std::make_shared<SamplingClient>(ep.pool, config.seed);
  return std::make_shared<EchoClient>(ep.canned);
}

}  // namespace coffee
