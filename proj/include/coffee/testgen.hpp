#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coffee/clients.hpp"
#include "coffee/corpus.hpp"
#include "coffee/sandbox.hpp"

namespace coffee {

// Returns the text between each <start> ... <end> pair, verbatim and in
// order. Throws ParseError for an unterminated or nested <start>.
std::vector<std::string> parse_delimited_inputs(std::string_view raw);

struct RejectedInput {
  std::string input;
  ExecutionOutcome outcome;
};

struct LabelResult {
  TestSuite suite;
  std::vector<RejectedInput> rejected;
};

// Runs the reference solution on every input. Inputs whose run is not `ok`
// are dropped and reported; a spawn failure throws Error(sandbox_error).
LabelResult label_outputs(std::string_view correct_code,
                          const std::vector<std::string>& inputs,
                          const Sandbox& sandbox);

struct TestgenConfig {
  std::size_t target_count = 35;
  int request_budget = 5;
  std::size_t min_suite_size = 1;
  // Drop one newline right after <start> and make sure the input ends with
  // a newline, as a judge would feed it.
  bool tidy_inputs = true;
  GenerationParams params;
};

struct SuiteProvenance {
  std::string generator_model;
  GenerationParams params;
  std::vector<RejectedInput> rejected;
  int requests = 0;
  std::size_t parsed = 0;
  std::size_t duplicates = 0;
};

struct SynthesizedSuite {
  TestSuite suite;
  SuiteProvenance provenance;
};

std::string tidy_input(std::string_view raw);

// Requests inputs with the test-case prompt until target_count cases are
// labeled or the request budget runs out. Request r uses seed + r when the
// params carry a seed. Throws Error(upstream_model_error) if fewer than
// min_suite_size cases were collected.
SynthesizedSuite synthesize_suite(const Problem& problem, std::string_view correct_code,
                                  TextGenerator& annotator, const TestgenConfig& config,
                                  const Sandbox& sandbox);

// Re-runs the reference solution under byte-exact comparison.
EvalResult check_reproduction(const TestSuite& suite, std::string_view correct_code,
                              const Sandbox& sandbox);

struct PassRatioStats {
  double mean = 0.0;
  std::optional<double> std;  // sample deviation; absent below two samples
  double min = 0.0;
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
  double max = 0.0;
  std::size_t sample_count = 0;
};

// Linear interpolation between closest ranks; `sorted` must be nonempty.
double quantile(const std::vector<double>& sorted, double q);

PassRatioStats describe(std::vector<double> ratios);

struct AuditReport {
  PassRatioStats stats;
  std::vector<double> ratios;  // one per wrong code, input order
  bool valid = false;          // no wrong code passes every case
};

// Throws Error(invalid_request) for an empty suite or empty wrong_codes.
AuditReport audit_suite(const TestSuite& suite, const std::vector<std::string>& wrong_codes,
                        const Sandbox& sandbox);

}  // namespace coffee
