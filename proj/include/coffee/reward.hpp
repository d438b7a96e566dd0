#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coffee/clients.hpp"
#include "coffee/corpus.hpp"
#include "coffee/sandbox.hpp"

namespace coffee {

// Code pulled out of an editor completion.
struct ExtractedCode {
  std::string code;
  std::optional<Polarity> keyword;  // a leading [Correct] / [Wrong] that was stripped
  std::vector<std::string> flags;   // e.g. "no_fenced_block", "empty_code"
};

// Strips a leading [Correct] or [Wrong] keyword, then takes the body of the
// last complete fenced block; without one the whole text is the code.
ExtractedCode extract_code(std::string_view completion);

struct RewardRequest {
  std::string problem_id;
  std::string wrong_code;
  std::string feedback;  // may be empty; scored as-is
  std::string editor;    // registered editor name; empty selects the default
  std::string suite_ref; // optional; must name the problem's suite when set
};

struct RewardResponse {
  double score = 0.0;
  bool pass_all = false;
  std::string edited_code;
  EvalResult eval;
  double latency = 0.0;  // seconds
  std::vector<std::string> flags;
};

// Scores one feedback text: render the editor prompt, edit, extract, run
// the problem's suite. Throws Error(invalid_request) for an empty suite and
// lets editor errors propagate.
RewardResponse coffee_eval(const Problem& problem, std::string_view wrong_code,
                           std::string_view feedback, Editor& editor, const Sandbox& sandbox);

// Problem store, editor registry and audit log around coffee_eval.
// Safe for concurrent score() calls once set up.
class RewardEnv {
 public:
  explicit RewardEnv(std::shared_ptr<const Sandbox> sandbox);

  void add_problem(Problem problem);
  // Throws Error(not_found).
  const Problem& problem(std::string_view problem_id) const;
  std::vector<std::string> problem_ids() const;

  // The first editor added becomes the default.
  void add_editor(const std::string& name, std::shared_ptr<Editor> editor);
  void set_default_editor(const std::string& name);
  // Throws Error(invalid_request) for an unknown name.
  Editor& editor(std::string_view name) const;

  // Appends one JSON line per score() call.
  void open_audit_log(const std::filesystem::path& path);

  RewardResponse score(const RewardRequest& request) const;

  const Sandbox& sandbox() const { return *sandbox_; }

 private:
  std::shared_ptr<const Sandbox> sandbox_;
  std::map<std::string, Problem, std::less<>> problems_;
  std::map<std::string, std::shared_ptr<Editor>, std::less<>> editors_;
  std::string default_editor_;
  mutable std::mutex log_mu_;
  mutable std::ofstream audit_log_;
};

std::string request_digest(const RewardRequest& request);

// ---------------------------------------------------------------------------
// Aggregates and metrics. Undefined values are std::nullopt, never 0.

// results[i] holds the pass-all outcome of each sample for problem i.
double pass_at_1(const std::vector<std::vector<bool>>& results);

struct CorrectCount {
  std::size_t correct = 0;
  std::size_t samples = 0;
};
double pass_at_1(const std::vector<CorrectCount>& counts);

struct LabeledScore {
  double predicted = 0.0;
  int label = 0;  // 0 or 1
};

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

struct MetricsReport {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  std::optional<double> false_positive_rate;
  std::optional<double> pearson;
  std::optional<double> mse;
  Confusion counts;
};

// Positive prediction means predicted == 1.0 (the edit passed every case).
MetricsReport classification_metrics(const std::vector<LabeledScore>& scored);

// Throws Error(invalid_request) below two samples.
MetricsReport correlation_metrics(const std::vector<LabeledScore>& scored);

// Both halves in one report.
MetricsReport evaluate_metrics(const std::vector<LabeledScore>& scored);

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y);

// ---------------------------------------------------------------------------
// Judge protocol

class LikertParseError : public Error {
 public:
  explicit LikertParseError(std::string raw)
      : Error(ErrorCode::upstream_model_error, "no Likert score 1..5 in: " + raw),
        raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

// First run of digits in the text, which must lie in 1..5.
int parse_likert(std::string_view completion);

int geval_likert(TextGenerator& judge, const Problem& problem, std::string_view wrong_code,
                 std::string_view feedback, const GenerationParams& params = {});

// ---------------------------------------------------------------------------
// Iterative editing

struct EditRound {
  std::string feedback;
  std::string edited_code;
  EvalResult eval;
};

struct Trajectory {
  std::vector<EditRound> rounds;
  bool solved() const { return !rounds.empty() && rounds.back().eval.pass_all(); }
};

// Carries the rounds completed before a client failure.
class IterationError : public Error {
 public:
  IterationError(const Error& cause, Trajectory partial)
      : Error(cause.code(), cause.what()), partial_(std::move(partial)) {}
  const Trajectory& partial() const { return partial_; }

 private:
  Trajectory partial_;
};

// Feedback, edit, evaluate; the edit becomes the next round's input. Stops
// at the first pass-all round or after max_iters rounds. Round r requests
// feedback with seed + r when a seed is given.
Trajectory iterate_edit(const Problem& problem, std::string_view initial_code,
                        FeedbackModel& feedback, Editor& editor, const Sandbox& sandbox,
                        int max_iters, std::optional<std::uint64_t> seed = std::nullopt);

}  // namespace coffee
