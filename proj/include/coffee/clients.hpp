#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coffee/corpus.hpp"
#include "coffee/error.hpp"

namespace coffee {

struct GenerationParams {
  double temperature = 0.7;
  double top_p = 0.95;
  int max_tokens = 500;
  int n_samples = 1;
  std::optional<std::uint64_t> seed;

  // Throws Error(invalid_request) on out-of-range values.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Prompt templates

enum class TemplateId { correct_feedback, wrong_feedback, testcase_gen, editor, g_eval };

std::string_view to_string(TemplateId id);
std::optional<TemplateId> parse_template_id(std::string_view name);

using Bindings = std::map<std::string, std::string, std::less<>>;

// Text with {name} placeholders. Substitution is single-pass: braces inside
// bound values (e.g. dict literals in code) are never re-expanded.
class PromptTemplate {
 public:
  // `aliases` maps a placeholder as written in `body` to the binding name
  // that supplies it, e.g. "python code" -> "correct_code".
  PromptTemplate(TemplateId id, std::string body,
                 std::map<std::string, std::string> aliases = {});

  // The shipped templates, byte-identical to assets/prompts/<id>.txt.
  static const PromptTemplate& builtin(TemplateId id);

  TemplateId id() const { return id_; }
  const std::string& body() const { return body_; }

  // Binding names required by the body, in order of first appearance.
  std::vector<std::string> required() const;

  // Throws Error(invalid_request, "<name> unbound") on a missing binding.
  std::string render(const Bindings& bindings) const;

  // Renders up to (not including) the first occurrence of `stop` and
  // drops the rest; only the placeholders before it must be bound.
  std::string render_prefix(const Bindings& bindings, std::string_view stop) const;

 private:
  struct Piece {
    bool is_placeholder = false;
    std::string text;  // literal text or binding name
  };

  std::string render_pieces(const Bindings& bindings, std::size_t end) const;

  TemplateId id_;
  std::string body_;
  std::vector<Piece> pieces_;
};

// Bindings for the editor / G-Eval templates.
Bindings editor_bindings(const Problem& problem, std::string_view wrong_code,
                         std::string_view feedback);

// ---------------------------------------------------------------------------
// Text generation clients

enum class ModelRole { feedback, editor, annotator, judge };

std::string_view to_string(ModelRole role);
std::optional<ModelRole> parse_model_role(std::string_view name);

struct ModelEndpoint {
  std::string base_url;  // e.g. http://127.0.0.1:8000/v1
  std::string model_name;
  std::string auth_env = "COFFEE_API_KEY";  // env var holding the key
  ModelRole role = ModelRole::feedback;
};

enum class ClientErrorKind { transport, authorization, malformed_response };

class ClientError : public Error {
 public:
  ClientError(ClientErrorKind kind, const std::string& message, int attempts)
      : Error(ErrorCode::upstream_model_error, message),
        kind_(kind),
        attempts_(attempts) {}

  ClientErrorKind kind() const { return kind_; }
  int attempts() const { return attempts_; }

 private:
  ClientErrorKind kind_;
  int attempts_;
};

// Returns exactly params.n_samples completions or throws; never a partial
// list. Implementations must be safe to call from several threads.
class TextGenerator {
 public:
  virtual ~TextGenerator() = default;
  virtual std::vector<std::string> complete(const std::string& prompt,
                                            const GenerationParams& params) = 0;
  virtual std::string name() const = 0;
};

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds initial_backoff{200};
  double backoff_multiplier = 2.0;
  std::chrono::milliseconds max_backoff{5000};
  std::chrono::seconds request_timeout{120};
  std::size_t max_in_flight = 8;  // per endpoint
};

// Chat-completion style HTTP client:
//   POST {base_url}/chat/completions
//   {model, messages:[{role:"user", content}], temperature, top_p,
//    max_tokens, n[, seed]}  ->  {choices:[{message:{content}}]}
class HttpChatClient : public TextGenerator {
 public:
  explicit HttpChatClient(ModelEndpoint endpoint, RetryPolicy retry = {});
  ~HttpChatClient() override;

  std::vector<std::string> complete(const std::string& prompt,
                                    const GenerationParams& params) override;
  std::string name() const override { return endpoint_.model_name; }
  const ModelEndpoint& endpoint() const { return endpoint_; }

 private:
  std::vector<std::string> request_once(const std::string& prompt,
                                        const GenerationParams& params,
                                        int n, int& attempts);

  ModelEndpoint endpoint_;
  RetryPolicy retry_;
  std::string scheme_host_port_;
  std::string path_prefix_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t in_flight_ = 0;
};

// Same canned completion for every prompt.
class EchoClient : public TextGenerator {
 public:
  explicit EchoClient(std::string canned) : canned_(std::move(canned)) {}
  std::vector<std::string> complete(const std::string& prompt,
                                    const GenerationParams& params) override;
  std::string name() const override { return "mock-echo"; }

 private:
  std::string canned_;
};

// Draws n completions from a fixed pool; the draw is a pure function of
// (prompt, params.seed or the default seed).
class SamplingClient : public TextGenerator {
 public:
  SamplingClient(std::vector<std::string> pool, std::uint64_t default_seed = 0);
  std::vector<std::string> complete(const std::string& prompt,
                                    const GenerationParams& params) override;
  std::string name() const override { return "mock-sampling"; }

 private:
  std::vector<std::string> pool_;
  std::uint64_t default_seed_;
};

// Test double backed by a callable.
class FunctionClient : public TextGenerator {
 public:
  using Fn = std::function<std::vector<std::string>(const std::string&,
                                                    const GenerationParams&)>;
  FunctionClient(std::string name, Fn fn) : name_(std::move(name)), fn_(std::move(fn)) {}
  std::vector<std::string> complete(const std::string& prompt,
                                    const GenerationParams& params) override;
  std::string name() const override { return name_; }

 private:
  std::string name_;
  Fn fn_;
};

std::uint64_t fnv1a64(std::string_view data);

// ---------------------------------------------------------------------------
// Editors (phi) and feedback models (theta)

enum class Polarity { correct, wrong };

std::string_view to_string(Polarity p);
std::optional<Polarity> parse_polarity(std::string_view name);

// Tag that mock editors read to decide which edit to produce.
std::string_view polarity_marker(Polarity p);
std::optional<Polarity> find_polarity_marker(std::string_view feedback);

struct EditRequest {
  const Problem& problem;
  std::string_view wrong_code;
  std::string_view feedback;
  std::string_view prompt;  // rendered editor template
};

// Returns the raw completion; callers extract the code from it.
class Editor {
 public:
  virtual ~Editor() = default;
  virtual std::string edit(const EditRequest& request) = 0;
  virtual std::string name() const = 0;
};

class ModelEditor : public Editor {
 public:
  ModelEditor(std::shared_ptr<TextGenerator> model, GenerationParams params);
  std::string edit(const EditRequest& request) override;
  std::string name() const override { return "model:" + model_->name(); }

 private:
  std::shared_ptr<TextGenerator> model_;
  GenerationParams params_;
};

// Ground truth per triplet: y* and a known-wrong edit y~'. An empty
// wrong_code acts as a problem-wide fallback.
struct EditFixture {
  std::string problem_id;
  std::string wrong_code;
  std::string correct_code;
  std::string wrong_edit;
};

class EditFixtures {
 public:
  void add(EditFixture fixture);
  // Throws Error(not_found, "unknown fixture id ...").
  const EditFixture& lookup(std::string_view problem_id,
                            std::string_view wrong_code) const;
  std::size_t size() const { return by_key_.size(); }

  // One JSON object per line: {problem_id, wrong_code, correct_code, wrong_edit}.
  static EditFixtures load_jsonl(const std::filesystem::path& path);

 private:
  std::map<std::pair<std::string, std::string>, EditFixture, std::less<>> by_key_;
};

// Produces y* for correct-marked feedback and y~' otherwise.
class FaithfulMockEditor : public Editor {
 public:
  explicit FaithfulMockEditor(std::shared_ptr<const EditFixtures> fixtures)
      : fixtures_(std::move(fixtures)) {}
  std::string edit(const EditRequest& request) override;
  std::string name() const override { return "mock-faithful"; }

 private:
  std::shared_ptr<const EditFixtures> fixtures_;
};

// Produces y* whatever the feedback says.
class SkewedMockEditor : public Editor {
 public:
  explicit SkewedMockEditor(std::shared_ptr<const EditFixtures> fixtures)
      : fixtures_(std::move(fixtures)) {}
  std::string edit(const EditRequest& request) override;
  std::string name() const override { return "mock-skewed"; }

 private:
  std::shared_ptr<const EditFixtures> fixtures_;
};

std::string mock_faithful_editor(const EditFixtures& fixtures, const Problem& problem,
                                 std::string_view wrong_code, std::string_view feedback);
std::string mock_skewed_editor(const EditFixtures& fixtures, const Problem& problem,
                               std::string_view wrong_code, std::string_view feedback);

// Wraps code the way a chat model would answer.
std::string fence_code(std::string_view code);

class FeedbackModel {
 public:
  virtual ~FeedbackModel() = default;
  virtual std::vector<std::string> generate(const Problem& problem,
                                            std::string_view code, std::size_t n,
                                            std::optional<std::uint64_t> seed) = 0;
  virtual std::string name() const = 0;
};

// Prompts with the editor template cut just before {feedback}.
class ModelFeedback : public FeedbackModel {
 public:
  ModelFeedback(std::shared_ptr<TextGenerator> model, GenerationParams params);
  std::vector<std::string> generate(const Problem& problem, std::string_view code,
                                    std::size_t n,
                                    std::optional<std::uint64_t> seed) override;
  std::string name() const override { return "model:" + model_->name(); }

 private:
  std::shared_ptr<TextGenerator> model_;
  GenerationParams params_;
};

// Test double backed by a callable.
class FunctionFeedback : public FeedbackModel {
 public:
  using Fn = std::function<std::vector<std::string>(
      const Problem&, std::string_view, std::size_t, std::optional<std::uint64_t>)>;
  FunctionFeedback(std::string name, Fn fn) : name_(std::move(name)), fn_(std::move(fn)) {}
  std::vector<std::string> generate(const Problem& problem, std::string_view code,
                                    std::size_t n,
                                    std::optional<std::uint64_t> seed) override;
  std::string name() const override { return name_; }

 private:
  std::string name_;
  Fn fn_;
};

// Seeded draw from a pool of candidate feedback texts.
class SeededFeedbackMock : public FeedbackModel {
 public:
  SeededFeedbackMock(std::vector<std::string> pool, std::uint64_t default_seed = 0);
  std::vector<std::string> generate(const Problem& problem, std::string_view code,
                                    std::size_t n,
                                    std::optional<std::uint64_t> seed) override;
  std::string name() const override { return "mock-seeded-feedback"; }

 private:
  std::vector<std::string> pool_;
  std::uint64_t default_seed_;
};

}  // namespace coffee
