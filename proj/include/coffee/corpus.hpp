#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coffee/sandbox.hpp"
#include "coffee/text.hpp"

namespace coffee {

// A coding task q. `suite` may be empty until test cases are synthesized.
struct Problem {
  std::string problem_id;
  std::string description;
  std::string input_format;
  std::string output_format;
  int difficulty = 1;  // 1..5
  TestSuite suite;
  std::string reference_solution;  // verified correct code, when known
};

enum class Verdict { wrong, correct };

std::string_view to_string(Verdict v);

struct Submission {
  std::string code;
  Verdict verdict = Verdict::wrong;
  std::uint64_t order_index = 0;
  std::string author_id;
};

// One user's submission history for one problem: wrong..., correct.
struct EditTrace {
  std::string problem_id;
  std::string author_id;
  std::vector<Submission> submissions;

  const Submission& terminal() const { return submissions.back(); }
};

struct EditTriplet {
  std::string problem_id;
  std::string wrong_code;
  std::string correct_code;
  std::size_t wrong_index = 0;  // 1-based position k of the wrong submission
};

struct WrongPair {
  std::string problem_id;
  std::string earlier_wrong;
  std::string later_wrong;
  std::size_t earlier_index = 0;  // 1-based
};

enum class CorpusIssueKind {
  malformed_json,
  schema,
  no_terminal_correct,
  out_of_order,
  wrong_equals_correct,
};

std::string_view to_string(CorpusIssueKind kind);

struct CorpusIssue {
  std::size_t line = 0;  // 1-based; for grouped submission records, the
                         // line of the trace's first record
  CorpusIssueKind kind = CorpusIssueKind::schema;
  std::string message;
};

struct CorpusParse {
  std::vector<EditTrace> traces;
  std::vector<CorpusIssue> issues;
};

// Reads line-delimited JSON. Each non-blank line is either a whole trace
// {problem_id, author_id, submissions:[{code, verdict}]} or a single
// submission {problem_id, author_id, code, verdict[, order_index]}; single
// submissions are grouped per (problem_id, author_id) in first-seen order.
// Bad records are reported in `issues` and never silently dropped.
CorpusParse parse_corpus(std::istream& in);

// Throws ParseError (offset = line) when `trace` violates an invariant.
void validate_trace(const EditTrace& trace);

// {(q, wrong_k, correct_n)} for k = 1..n-1, in k order.
std::vector<EditTriplet> build_triplets(const EditTrace& trace);

// {(wrong_{k-1}, wrong_k)} for k = 2..n-1; never touches the correct one.
std::vector<WrongPair> consecutive_wrong_pairs(const EditTrace& trace);

struct DedupResult {
  std::vector<EditTrace> kept;
  std::size_t dropped = 0;
};

// Per problem, drops traces by other authors whose correct solution is
// identical (under `policy`) to an earlier-seen one. Input order is kept.
DedupResult dedup_identical_correct(const std::vector<EditTrace>& traces,
                                    const LineNormalization& policy = {});

struct BalanceResult {
  std::vector<Problem> selected;          // grouped by level, ascending
  std::map<int, std::size_t> shortfall;   // level -> missing count
};

BalanceResult balance_by_difficulty(const std::vector<Problem>& problems,
                                    std::size_t per_level, std::uint64_t seed);

struct Document {
  std::string name;
  std::string text;
};

struct OverlapRow {
  std::string name;
  std::size_t total_lines = 0;
  std::size_t overlap_lines = 0;
  double fraction = 0.0;
};

struct OverlapReport {
  std::string normalization_policy;
  std::vector<OverlapRow> rows;        // documents with >= 1 normalized line
  std::vector<std::string> excluded;   // documents with none
  std::size_t total_lines = 0;
  std::size_t overlap_lines = 0;
  // overlap_lines / total_lines; absent when every document was excluded.
  std::optional<double> aggregate_fraction;
  // 20 buckets of width 0.05; a fraction of exactly 1.0 lands in the last.
  std::vector<std::size_t> fraction_histogram;
  // absolute overlap count -> number of documents
  std::map<std::size_t, std::size_t> absolute_histogram;
};

inline constexpr double kOverlapBucketWidth = 0.05;

OverlapReport line_overlap(const std::vector<Document>& candidates,
                           const std::vector<Document>& references,
                           const LineNormalization& policy = {});

}  // namespace coffee
