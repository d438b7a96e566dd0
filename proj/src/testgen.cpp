#include "coffee/testgen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <set>
#include <thread>

namespace coffee {
namespace {

constexpr std::string_view kStart = "<start>";
constexpr std::string_view kEnd = "<end>";

}  // namespace

std::vector<std::string> parse_delimited_inputs(std::string_view raw) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t start = raw.find(kStart, pos);
    if (start == std::string_view::npos) break;
    std::size_t body = start + kStart.size();
    std::size_t end = raw.find(kEnd, body);
    std::size_t nested = raw.find(kStart, body);
    if (end == std::string_view::npos) {
      throw ParseError("unterminated <start> at offset " + std::to_string(start), start);
    }
    if (nested < end) {
      throw ParseError("nested <start> at offset " + std::to_string(nested), nested);
    }
    out.emplace_back(raw.substr(body, end - body));
    pos = end + kEnd.size();
  }
  return out;
}

LabelResult label_outputs(std::string_view correct_code,
                          const std::vector<std::string>& inputs,
                          const Sandbox& sandbox) {
  std::vector<ExecutionOutcome> outcomes(inputs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < inputs.size(); i = next++) {
      outcomes[i] = sandbox.run(correct_code, inputs[i]);
    }
  };
  std::size_t workers = std::max<std::size_t>(1, std::min(sandbox.config().workers, inputs.size()));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
  }

  LabelResult result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto& outcome = outcomes[i];
    if (outcome.status == ExecStatus::spawn_failure) {
      throw Error(ErrorCode::sandbox_error,
                  "reference solution failed to start: " + outcome.stderr_text);
    }
    if (outcome.status == ExecStatus::ok) {
      result.suite.cases.push_back({inputs[i], std::move(outcome.stdout_text)});
    } else {
      result.rejected.push_back({inputs[i], std::move(outcome)});
    }
  }
  return result;
}

std::string tidy_input(std::string_view raw) {
  std::string s(raw);
  if (s.starts_with("\r\n")) {
    s.erase(0, 2);
  } else if (s.starts_with('\n')) {
    s.erase(0, 1);
  }
  if (s.empty() || s.back() != '\n') s += '\n';
  return s;
}

SynthesizedSuite synthesize_suite(const Problem& problem, std::string_view correct_code,
                                  TextGenerator& annotator, const TestgenConfig& config,
                                  const Sandbox& sandbox) {
  config.params.validate();
  if (config.target_count == 0 || config.request_budget < 1) {
    throw Error(ErrorCode::invalid_request, "target_count and request_budget must be positive");
  }
  const auto& tmpl = PromptTemplate::builtin(TemplateId::testcase_gen);
  std::string prompt = tmpl.render(
      {{"input_format", problem.input_format}, {"correct_code", std::string(correct_code)}});

  SynthesizedSuite out;
  out.suite.suite_id = problem.problem_id;
  out.provenance.generator_model = annotator.name();
  out.provenance.params = config.params;

  std::set<std::string, std::less<>> seen;
  for (int r = 0; r < config.request_budget && out.suite.cases.size() < config.target_count;
       ++r) {
    GenerationParams params = config.params;
    if (params.seed) params.seed = *params.seed + static_cast<std::uint64_t>(r);
    auto completions = annotator.complete(prompt, params);
    ++out.provenance.requests;

    std::vector<std::string> fresh;
    for (const auto& completion : completions) {
      std::vector<std::string> parsed;
      try {
        parsed = parse_delimited_inputs(completion);
      } catch (const ParseError&) {
        continue;  // a garbled completion costs budget, nothing more
      }
      for (auto& input : parsed) {
        ++out.provenance.parsed;
        if (config.tidy_inputs) input = tidy_input(input);
        if (!seen.insert(input).second) {
          ++out.provenance.duplicates;
          continue;
        }
        fresh.push_back(std::move(input));
      }
    }

    auto labeled = label_outputs(correct_code, fresh, sandbox);
    for (auto& c : labeled.suite.cases) {
      if (out.suite.cases.size() >= config.target_count) break;
      out.suite.cases.push_back(std::move(c));
    }
    for (auto& rej : labeled.rejected) out.provenance.rejected.push_back(std::move(rej));
  }

  if (out.suite.cases.size() < config.min_suite_size) {
    throw Error(ErrorCode::upstream_model_error,
                "request budget exhausted for " + problem.problem_id + ": " +
                    std::to_string(out.suite.cases.size()) + " valid cases, need " +
                    std::to_string(config.min_suite_size));
  }
  return out;
}

EvalResult check_reproduction(const TestSuite& suite, std::string_view correct_code,
                              const Sandbox& sandbox) {
  return sandbox.run_suite(correct_code, suite, ComparePolicy::exact,
                           sandbox.config().workers);
}

double quantile(const std::vector<double>& sorted, double q) {
  double pos = q * static_cast<double>(sorted.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

PassRatioStats describe(std::vector<double> ratios) {
  if (ratios.empty()) throw Error(ErrorCode::invalid_request, "no ratios to describe");
  std::sort(ratios.begin(), ratios.end());
  PassRatioStats s;
  s.sample_count = ratios.size();
  double n = static_cast<double>(ratios.size());
  s.mean = std::accumulate(ratios.begin(), ratios.end(), 0.0) / n;
  if (ratios.size() >= 2) {
    double ss = 0.0;
    for (double r : ratios) ss += (r - s.mean) * (r - s.mean);
    s.std = std::sqrt(ss / (n - 1.0));
  }
  s.min = ratios.front();
  s.q25 = quantile(ratios, 0.25);
  s.median = quantile(ratios, 0.5);
  s.q75 = quantile(ratios, 0.75);
  s.max = ratios.back();
  return s;
}

AuditReport audit_suite(const TestSuite& suite, const std::vector<std::string>& wrong_codes,
                        const Sandbox& sandbox) {
  if (suite.cases.empty()) throw Error(ErrorCode::invalid_request, "suite is empty");
  if (wrong_codes.empty()) throw Error(ErrorCode::invalid_request, "no wrong codes to audit");
  AuditReport report;
  bool any_pass_all = false;
  for (const auto& code : wrong_codes) {
    auto eval = sandbox.run_suite(code, suite);
    report.ratios.push_back(eval.score);
    any_pass_all = any_pass_all || eval.pass_all();
  }
  report.stats = describe(report.ratios);
  report.valid = !any_pass_all;
  return report;
}

}  // namespace coffee
