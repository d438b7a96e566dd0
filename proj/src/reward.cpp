#include "coffee/reward.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "coffee/text.hpp"
#include "json.hpp"

namespace coffee {
namespace {

using json = nlohmann::json;

constexpr std::string_view kCorrectKeyword = "[Correct]";
constexpr std::string_view kWrongKeyword = "[Wrong]";

bool is_fence(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  return line.substr(i).starts_with("```");
}

EvalResult empty_program_result(std::size_t k) {
  EvalResult eval;
  eval.total = k;
  for (std::size_t i = 0; i < k; ++i) {
    CaseResult c;
    c.index = i;
    c.outcome.status = ExecStatus::runtime_error;
    c.outcome.stderr_text = "empty program";
    eval.per_case.push_back(std::move(c));
  }
  return eval;
}

void require_binary_labels(const std::vector<LabeledScore>& scored) {
  for (const auto& s : scored) {
    if (s.label != 0 && s.label != 1) {
      throw Error(ErrorCode::invalid_request, "labels must be 0 or 1");
    }
  }
}

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ExtractedCode extract_code(std::string_view completion) {
  ExtractedCode out;
  std::string_view text = completion;
  std::size_t lead = 0;
  while (lead < text.size() && is_space(text[lead])) ++lead;
  std::string_view rest = text.substr(lead);
  for (auto [kw, pol] : {std::pair{kCorrectKeyword, Polarity::correct},
                         std::pair{kWrongKeyword, Polarity::wrong}}) {
    if (rest.starts_with(kw)) {
      out.keyword = pol;
      rest.remove_prefix(kw.size());
      while (!rest.empty() && (rest.front() == ' ' || rest.front() == '\t')) rest.remove_prefix(1);
      if (rest.starts_with("\r\n")) {
        rest.remove_prefix(2);
      } else if (rest.starts_with('\n')) {
        rest.remove_prefix(1);
      }
      text = rest;
      break;
    }
  }

  std::optional<std::string> last_block;
  std::optional<std::string> open;
  for (const auto& line : split_lines(text)) {
    if (is_fence(line)) {
      if (open) {
        last_block = std::move(*open);
        open.reset();
      } else {
        open.emplace();
      }
    } else if (open) {
      *open += line;
      *open += '\n';
    }
  }
  if (last_block) {
    out.code = std::move(*last_block);
  } else {
    out.flags.push_back("no_fenced_block");
    out.code = std::string(text);
  }
  if (trim(out.code).empty()) out.flags.push_back("empty_code");
  return out;
}

RewardResponse coffee_eval(const Problem& problem, std::string_view wrong_code,
                           std::string_view feedback, Editor& editor, const Sandbox& sandbox) {
  if (problem.suite.cases.empty()) {
    throw Error(ErrorCode::invalid_request, "empty suite for problem " + problem.problem_id);
  }
  auto started = std::chrono::steady_clock::now();
  std::string prompt = PromptTemplate::builtin(TemplateId::editor)
                           .render(editor_bindings(problem, wrong_code, feedback));
  std::string completion = editor.edit({problem, wrong_code, feedback, prompt});
  ExtractedCode extracted = extract_code(completion);

  RewardResponse r;
  r.flags = std::move(extracted.flags);
  r.edited_code = std::move(extracted.code);
  if (trim(r.edited_code).empty()) {
    r.eval = empty_program_result(problem.suite.cases.size());
  } else {
    r.eval = sandbox.run_suite(r.edited_code, problem.suite);
  }
  r.score = r.eval.score;
  r.pass_all = r.eval.pass_all();
  r.latency =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return r;
}

RewardEnv::RewardEnv(std::shared_ptr<const Sandbox> sandbox) : sandbox_(std::move(sandbox)) {}

void RewardEnv::add_problem(Problem problem) {
  std::string id = problem.problem_id;
  problems_.insert_or_assign(std::move(id), std::move(problem));
}

const Problem& RewardEnv::problem(std::string_view problem_id) const {
  auto it = problems_.find(problem_id);
  if (it == problems_.end()) {
    throw Error(ErrorCode::not_found, "unknown problem_id " + std::string(problem_id));
  }
  return it->second;
}

std::vector<std::string> RewardEnv::problem_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, _] : problems_) ids.push_back(id);
  return ids;
}

void RewardEnv::add_editor(const std::string& name, std::shared_ptr<Editor> editor) {
  if (default_editor_.empty()) default_editor_ = name;
  editors_.insert_or_assign(name, std::move(editor));
}

void RewardEnv::set_default_editor(const std::string& name) {
  editor(name);
  default_editor_ = name;
}

Editor& RewardEnv::editor(std::string_view name) const {
  auto it = editors_.find(name.empty() ? std::string_view(default_editor_) : name);
  if (it == editors_.end()) {
    throw Error(ErrorCode::invalid_request, "unknown editor " + std::string(name));
  }
  return *it->second;
}

void RewardEnv::open_audit_log(const std::filesystem::path& path) {
  std::lock_guard lock(log_mu_);
  audit_log_.close();
  audit_log_.open(path, std::ios::app);
  if (!audit_log_) {
    throw Error(ErrorCode::invalid_request, "cannot open audit log " + path.string());
  }
}

std::string request_digest(const RewardRequest& request) {
  json j = json::array(
      {request.problem_id, request.wrong_code, request.feedback, request.editor, request.suite_ref});
  return sha256_hex(j.dump());
}

RewardResponse RewardEnv::score(const RewardRequest& request) const {
  const Problem& p = problem(request.problem_id);
  if (!request.suite_ref.empty() && request.suite_ref != p.suite.suite_id) {
    throw Error(ErrorCode::not_found, "unknown suite_ref " + request.suite_ref);
  }
  Editor& ed = editor(request.editor);
  RewardResponse r = coffee_eval(p, request.wrong_code, request.feedback, ed, *sandbox_);

  std::lock_guard lock(log_mu_);
  if (audit_log_.is_open()) {
    json line = {{"request_digest", request_digest(request)},
                 {"problem_id", request.problem_id},
                 {"editor", request.editor.empty() ? default_editor_ : request.editor},
                 {"edited_code_digest", sha256_hex(r.edited_code)},
                 {"score", r.score},
                 {"bitmap", r.eval.bitmap()},
                 {"latency", r.latency}};
    audit_log_ << line.dump() << '\n';
    audit_log_.flush();
  }
  return r;
}

double pass_at_1(const std::vector<CorrectCount>& counts) {
  if (counts.empty()) throw Error(ErrorCode::invalid_request, "no problems to aggregate");
  double sum = 0.0;
  for (const auto& c : counts) {
    if (c.samples == 0) throw Error(ErrorCode::invalid_request, "problem with zero samples");
    if (c.correct > c.samples) {
      throw Error(ErrorCode::invalid_request, "correct count exceeds samples");
    }
    sum += static_cast<double>(c.correct) / static_cast<double>(c.samples);
  }
  return sum / static_cast<double>(counts.size()) * 100.0;
}

double pass_at_1(const std::vector<std::vector<bool>>& results) {
  std::vector<CorrectCount> counts;
  counts.reserve(results.size());
  for (const auto& samples : results) {
    counts.push_back({static_cast<std::size_t>(std::count(samples.begin(), samples.end(), true)),
                      samples.size()});
  }
  return pass_at_1(counts);
}

MetricsReport classification_metrics(const std::vector<LabeledScore>& scored) {
  if (scored.empty()) throw Error(ErrorCode::invalid_request, "no scored samples");
  require_binary_labels(scored);
  MetricsReport m;
  auto& c = m.counts;
  for (const auto& s : scored) {
    bool predicted = s.predicted == 1.0;
    bool actual = s.label == 1;
    if (predicted && actual) ++c.tp;
    if (predicted && !actual) ++c.fp;
    if (!predicted && !actual) ++c.tn;
    if (!predicted && actual) ++c.fn;
  }
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.false_positive_rate = ratio(c.fp, c.fp + c.tn);
  if (m.precision && m.recall && *m.precision + *m.recall > 0.0) {
    m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
  }
  return m;
}

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error(ErrorCode::invalid_request, "pearson needs two equal series of length >= 2");
  }
  double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

MetricsReport correlation_metrics(const std::vector<LabeledScore>& scored) {
  if (scored.size() < 2) {
    throw Error(ErrorCode::invalid_request, "correlation needs at least two samples");
  }
  require_binary_labels(scored);
  std::vector<double> x, y;
  double se = 0.0;
  for (const auto& s : scored) {
    x.push_back(s.predicted);
    y.push_back(static_cast<double>(s.label));
    se += (s.predicted - s.label) * (s.predicted - s.label);
  }
  MetricsReport m;
  m.pearson = pearson(x, y);
  m.mse = se / static_cast<double>(scored.size());
  return m;
}

MetricsReport evaluate_metrics(const std::vector<LabeledScore>& scored) {
  MetricsReport m = classification_metrics(scored);
  MetricsReport corr = correlation_metrics(scored);
  m.pearson = corr.pearson;
  m.mse = corr.mse;
  return m;
}

int parse_likert(std::string_view completion) {
  auto is_digit = [](char c) { return c >= '0' && c <= '9'; };
  auto first = std::find_if(completion.begin(), completion.end(), is_digit);
  if (first == completion.end()) throw LikertParseError(std::string(completion));
  auto last = std::find_if_not(first, completion.end(), is_digit);
  std::string_view digits(&*first, static_cast<std::size_t>(last - first));
  while (digits.size() > 1 && digits.front() == '0') digits.remove_prefix(1);
  if (digits.size() != 1 || digits[0] < '1' || digits[0] > '5') {
    throw LikertParseError(std::string(completion));
  }
  return digits[0] - '0';
}

int geval_likert(TextGenerator& judge, const Problem& problem, std::string_view wrong_code,
                 std::string_view feedback, const GenerationParams& params) {
  std::string prompt = PromptTemplate::builtin(TemplateId::g_eval)
                           .render(editor_bindings(problem, wrong_code, feedback));
  GenerationParams p = params;
  p.n_samples = 1;
  auto completions = judge.complete(prompt, p);
  return parse_likert(completions.at(0));
}

Trajectory iterate_edit(const Problem& problem, std::string_view initial_code,
                        FeedbackModel& feedback, Editor& editor, const Sandbox& sandbox,
                        int max_iters, std::optional<std::uint64_t> seed) {
  if (max_iters < 1) throw Error(ErrorCode::invalid_request, "max_iters must be >= 1");
  Trajectory t;
  std::string current(initial_code);
  for (int r = 0; r < max_iters; ++r) {
    try {
      std::optional<std::uint64_t> round_seed;
      if (seed) round_seed = *seed + static_cast<std::uint64_t>(r);
      auto texts = feedback.generate(problem, current, 1, round_seed);
      if (texts.empty()) {
        throw Error(ErrorCode::upstream_model_error, "feedback model returned nothing");
      }
      auto resp = coffee_eval(problem, current, texts.front(), editor, sandbox);
      t.rounds.push_back({texts.front(), resp.edited_code, std::move(resp.eval)});
    } catch (const Error& e) {
      throw IterationError(e, std::move(t));
    }
    if (t.rounds.back().eval.pass_all()) break;
    current = t.rounds.back().edited_code;
  }
  return t;
}

}  // namespace coffee
