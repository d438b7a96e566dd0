#include "coffee/clients.hpp"

#include <cstdlib>
#include <fstream>
#include <random>
#include <thread>

#include "coffee/random.hpp"
#include "http.hpp"
#include "json.hpp"

namespace coffee {
namespace {

using json = nlohmann::json;

constexpr std::string_view kCorrectMarker = "[feedback:correct]";
constexpr std::string_view kWrongMarker = "[feedback:wrong]";

}  // namespace

void GenerationParams::validate() const {
  if (!(temperature >= 0.0)) {
    throw Error(ErrorCode::invalid_request, "temperature must be >= 0");
  }
  if (!(top_p >= 0.0 && top_p <= 1.0)) {
    throw Error(ErrorCode::invalid_request, "top_p must be in [0, 1]");
  }
  if (max_tokens <= 0) {
    throw Error(ErrorCode::invalid_request, "max_tokens must be positive");
  }
  if (n_samples <= 0) {
    throw Error(ErrorCode::invalid_request, "n_samples must be positive");
  }
}

std::string_view to_string(ModelRole role) {
  switch (role) {
    case ModelRole::feedback: return "feedback";
    case ModelRole::editor: return "editor";
    case ModelRole::annotator: return "annotator";
    case ModelRole::judge: return "judge";
  }
  return "feedback";
}

std::optional<ModelRole> parse_model_role(std::string_view name) {
  for (auto r : {ModelRole::feedback, ModelRole::editor, ModelRole::annotator,
                 ModelRole::judge}) {
    if (to_string(r) == name) return r;
  }
  return std::nullopt;
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// ---------------------------------------------------------------------------
// HttpChatClient

HttpChatClient::HttpChatClient(ModelEndpoint endpoint, RetryPolicy retry)
    : endpoint_(std::move(endpoint)), retry_(retry) {
  const std::string& url = endpoint_.base_url;
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::invalid_request, "base_url needs a scheme: " + url);
  }
  auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  if (retry_.max_attempts < 1) retry_.max_attempts = 1;
  if (retry_.max_in_flight < 1) retry_.max_in_flight = 1;
}

HttpChatClient::~HttpChatClient() = default;

std::vector<std::string> HttpChatClient::request_once(const std::string& prompt,
                                                      const GenerationParams& params,
                                                      int n, int& attempts) {
  json body = {
      {"model", endpoint_.model_name},
      {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
      {"temperature", params.temperature},
      {"top_p", params.top_p},
      {"max_tokens", params.max_tokens},
      {"n", n},
  };
  if (params.seed) body["seed"] = *params.seed;
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (const char* key = std::getenv(endpoint_.auth_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  auto backoff = retry_.initial_backoff;
  std::string last_error;
  for (int attempt = 1; attempt <= retry_.max_attempts; ++attempt) {
    ++attempts;
    httplib::Client cli(scheme_host_port_);
    cli.set_connection_timeout(std::chrono::seconds(10));
    cli.set_read_timeout(retry_.request_timeout);
    cli.set_write_timeout(retry_.request_timeout);
    auto res = cli.Post(path_prefix_ + "/chat/completions", headers, payload,
                        "application/json");
    bool transient = false;
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      transient = true;
    } else if (res->status == 401 || res->status == 403) {
      throw ClientError(ClientErrorKind::authorization,
                        endpoint_.model_name + ": authorization failed (HTTP " +
                            std::to_string(res->status) + ")",
                        attempts);
    } else if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      transient = true;
    } else if (res->status != 200) {
      throw ClientError(ClientErrorKind::transport,
                        endpoint_.model_name + ": HTTP " + std::to_string(res->status),
                        attempts);
    } else {
      std::vector<std::string> out;
      try {
        json reply = json::parse(res->body);
        for (const auto& choice : reply.at("choices")) {
          out.push_back(choice.at("message").at("content").get<std::string>());
        }
      } catch (const json::exception& e) {
        throw ClientError(ClientErrorKind::malformed_response,
                          endpoint_.model_name + ": malformed response: " + e.what(),
                          attempts);
      }
      return out;
    }
    if (transient && attempt < retry_.max_attempts) {
      std::this_thread::sleep_for(backoff);
      backoff = std::min(retry_.max_backoff,
                         std::chrono::milliseconds(static_cast<long long>(
                             backoff.count() * retry_.backoff_multiplier)));
    }
  }
  throw ClientError(ClientErrorKind::transport,
                    endpoint_.model_name + ": giving up after " +
                        std::to_string(retry_.max_attempts) + " attempts: " + last_error,
                    attempts);
}

std::vector<std::string> HttpChatClient::complete(const std::string& prompt,
                                                  const GenerationParams& params) {
  params.validate();
  {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < retry_.max_in_flight; });
    ++in_flight_;
  }
  struct Release {
    HttpChatClient* self;
    ~Release() {
      {
        std::lock_guard lock(self->mu_);
        --self->in_flight_;
      }
      self->cv_.notify_one();
    }
  } release{this};

  // Some servers cap or ignore n; top up until the batch is complete.
  std::vector<std::string> all;
  int attempts = 0;
  for (int round = 0; round < 4 && static_cast<int>(all.size()) < params.n_samples;
       ++round) {
    int want = params.n_samples - static_cast<int>(all.size());
    auto got = request_once(prompt, params, want, attempts);
    if (got.empty()) break;
    for (auto& g : got) {
      if (static_cast<int>(all.size()) < params.n_samples) all.push_back(std::move(g));
    }
  }
  if (static_cast<int>(all.size()) != params.n_samples) {
    throw ClientError(ClientErrorKind::malformed_response,
                      endpoint_.model_name + ": expected " +
                          std::to_string(params.n_samples) + " choices, got " +
                          std::to_string(all.size()),
                      attempts);
  }
  return all;
}

// ---------------------------------------------------------------------------
// Mock generators

std::vector<std::string> EchoClient::complete(const std::string&,
                                              const GenerationParams& params) {
  params.validate();
  return std::vector<std::string>(static_cast<std::size_t>(params.n_samples), canned_);
}

SamplingClient::SamplingClient(std::vector<std::string> pool, std::uint64_t default_seed)
    : pool_(std::move(pool)), default_seed_(default_seed) {
  if (pool_.empty()) throw Error(ErrorCode::invalid_request, "sampling pool is empty");
}

std::vector<std::string> SamplingClient::complete(const std::string& prompt,
                                                  const GenerationParams& params) {
  params.validate();
  std::mt19937_64 rng(params.seed.value_or(default_seed_) ^ fnv1a64(prompt));
  std::vector<std::string> out;
  for (int i = 0; i < params.n_samples; ++i) {
    out.push_back(pool_[uniform_below(rng, pool_.size())]);
  }
  return out;
}

std::vector<std::string> FunctionClient::complete(const std::string& prompt,
                                                  const GenerationParams& params) {
  params.validate();
  auto out = fn_(prompt, params);
  if (static_cast<int>(out.size()) != params.n_samples) {
    throw ClientError(ClientErrorKind::malformed_response,
                      name_ + ": wrong number of completions", 1);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Editors

std::string_view to_string(Polarity p) {
  return p == Polarity::correct ? "correct" : "wrong";
}

std::optional<Polarity> parse_polarity(std::string_view name) {
  if (name == "correct") return Polarity::correct;
  if (name == "wrong") return Polarity::wrong;
  return std::nullopt;
}

std::string_view polarity_marker(Polarity p) {
  return p == Polarity::correct ? kCorrectMarker : kWrongMarker;
}

std::optional<Polarity> find_polarity_marker(std::string_view feedback) {
  if (feedback.find(kCorrectMarker) != std::string_view::npos) return Polarity::correct;
  if (feedback.find(kWrongMarker) != std::string_view::npos) return Polarity::wrong;
  return std::nullopt;
}

std::string fence_code(std::string_view code) {
  std::string out = "```python\n";
  out += code;
  if (!code.empty() && code.back() != '\n') out += '\n';
  out += "```\n";
  return out;
}

ModelEditor::ModelEditor(std::shared_ptr<TextGenerator> model, GenerationParams params)
    : model_(std::move(model)), params_(params) {
  params_.n_samples = 1;
  params_.validate();
}

std::string ModelEditor::edit(const EditRequest& request) {
  return model_->complete(std::string(request.prompt), params_).front();
}

void EditFixtures::add(EditFixture fixture) {
  auto key = std::make_pair(fixture.problem_id, fixture.wrong_code);
  by_key_.insert_or_assign(std::move(key), std::move(fixture));
}

const EditFixture& EditFixtures::lookup(std::string_view problem_id,
                                        std::string_view wrong_code) const {
  auto it = by_key_.find(std::make_pair(std::string(problem_id), std::string(wrong_code)));
  if (it != by_key_.end()) return it->second;
  it = by_key_.find(std::make_pair(std::string(problem_id), std::string()));
  if (it != by_key_.end()) return it->second;
  throw Error(ErrorCode::not_found,
              "unknown fixture id for problem '" + std::string(problem_id) + "'");
}

EditFixtures EditFixtures::load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::not_found, "cannot open " + path.string());
  EditFixtures out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json j = json::parse(line);
      out.add({j.at("problem_id").get<std::string>(),
               j.value("wrong_code", std::string()),
               j.at("correct_code").get<std::string>(),
               j.at("wrong_edit").get<std::string>()});
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what(),
                       line_no);
    }
  }
  return out;
}

std::string mock_faithful_editor(const EditFixtures& fixtures, const Problem& problem,
                                 std::string_view wrong_code, std::string_view feedback) {
  const EditFixture& f = fixtures.lookup(problem.problem_id, wrong_code);
  bool correct = find_polarity_marker(feedback) == Polarity::correct;
  return correct ? f.correct_code : f.wrong_edit;
}

std::string mock_skewed_editor(const EditFixtures& fixtures, const Problem& problem,
                               std::string_view wrong_code, std::string_view) {
  return fixtures.lookup(problem.problem_id, wrong_code).correct_code;
}

std::string FaithfulMockEditor::edit(const EditRequest& r) {
  return fence_code(mock_faithful_editor(*fixtures_, r.problem, r.wrong_code, r.feedback));
}

std::string SkewedMockEditor::edit(const EditRequest& r) {
  return fence_code(mock_skewed_editor(*fixtures_, r.problem, r.wrong_code, r.feedback));
}

// ---------------------------------------------------------------------------
// Feedback models

ModelFeedback::ModelFeedback(std::shared_ptr<TextGenerator> model, GenerationParams params)
    : model_(std::move(model)), params_(params) {
  params_.validate();
}

std::vector<std::string> ModelFeedback::generate(const Problem& problem,
                                                 std::string_view code, std::size_t n,
                                                 std::optional<std::uint64_t> seed) {
  GenerationParams p = params_;
  p.n_samples = static_cast<int>(n);
  if (seed) p.seed = seed;
  const auto& tmpl = PromptTemplate::builtin(TemplateId::editor);
  std::string prompt = tmpl.render_prefix(editor_bindings(problem, code, ""), "feedback");
  return model_->complete(prompt, p);
}

std::vector<std::string> FunctionFeedback::generate(const Problem& problem,
                                                    std::string_view code, std::size_t n,
                                                    std::optional<std::uint64_t> seed) {
  auto out = fn_(problem, code, n, seed);
  if (out.size() != n) {
    throw ClientError(ClientErrorKind::malformed_response,
                      name_ + ": wrong number of feedback samples", 1);
  }
  return out;
}

SeededFeedbackMock::SeededFeedbackMock(std::vector<std::string> pool,
                                       std::uint64_t default_seed)
    : pool_(std::move(pool)), default_seed_(default_seed) {
  if (pool_.empty()) throw Error(ErrorCode::invalid_request, "feedback pool is empty");
}

std::vector<std::string> SeededFeedbackMock::generate(const Problem& problem,
                                                      std::string_view code,
                                                      std::size_t n,
                                                      std::optional<std::uint64_t> seed) {
  std::mt19937_64 rng(seed.value_or(default_seed_) ^ fnv1a64(problem.problem_id) ^
                      (fnv1a64(code) << 1));
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(pool_[uniform_below(rng, pool_.size())]);
  return out;
}

}  // namespace coffee
