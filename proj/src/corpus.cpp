#include "coffee/corpus.hpp"

#include <algorithm>
#include <istream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "coffee/error.hpp"
#include "coffee/random.hpp"
#include "json.hpp"

namespace coffee {
namespace {

using json = nlohmann::json;

std::string require_string(const json& obj, const char* field) {
  auto it = obj.find(field);
  if (it == obj.end()) {
    throw std::invalid_argument(std::string("missing field '") + field + "'");
  }
  if (!it->is_string()) {
    throw std::invalid_argument(std::string("field '") + field +
                                "' must be a string");
  }
  return it->get<std::string>();
}

Verdict require_verdict(const json& obj) {
  std::string v = require_string(obj, "verdict");
  if (v == "wrong") return Verdict::wrong;
  if (v == "correct") return Verdict::correct;
  throw std::invalid_argument("field 'verdict' must be \"wrong\" or \"correct\", got \"" +
                              v + "\"");
}

Submission parse_submission(const json& obj, std::uint64_t default_order,
                            const std::string& author) {
  if (!obj.is_object()) throw std::invalid_argument("submission must be an object");
  Submission s;
  s.code = require_string(obj, "code");
  s.verdict = require_verdict(obj);
  s.author_id = author;
  s.order_index = default_order;
  if (auto it = obj.find("order_index"); it != obj.end()) {
    if (!it->is_number_unsigned()) {
      throw std::invalid_argument("field 'order_index' must be a nonnegative integer");
    }
    s.order_index = it->get<std::uint64_t>();
  }
  return s;
}

struct PendingTrace {
  EditTrace trace;
  std::size_t first_line = 0;
};

// Flags the first invariant a trace breaks, if any.
std::optional<CorpusIssue> check_trace(const EditTrace& trace, std::size_t line) {
  auto issue = [&](CorpusIssueKind kind, std::string msg) {
    return CorpusIssue{line, kind,
                       "trace (" + trace.problem_id + ", " + trace.author_id +
                           "): " + std::move(msg)};
  };
  if (trace.problem_id.empty()) {
    return CorpusIssue{line, CorpusIssueKind::schema, "empty problem_id"};
  }
  if (trace.submissions.empty()) {
    return issue(CorpusIssueKind::schema, "no submissions");
  }
  for (std::size_t i = 0; i < trace.submissions.size(); ++i) {
    const auto& s = trace.submissions[i];
    if (s.code.empty()) {
      return issue(CorpusIssueKind::schema,
                   "submission " + std::to_string(i + 1) + " has empty code");
    }
    if (i > 0 && s.order_index <= trace.submissions[i - 1].order_index) {
      return issue(CorpusIssueKind::out_of_order,
                   "order_index not strictly increasing at submission " +
                       std::to_string(i + 1));
    }
  }
  if (trace.terminal().verdict != Verdict::correct) {
    return issue(CorpusIssueKind::no_terminal_correct,
                 "no terminal correct solution");
  }
  for (std::size_t i = 0; i + 1 < trace.submissions.size(); ++i) {
    const auto& s = trace.submissions[i];
    if (s.verdict != Verdict::wrong) {
      return issue(CorpusIssueKind::no_terminal_correct,
                   "correct submission " + std::to_string(i + 1) +
                       " is not the last one");
    }
    if (s.code == trace.terminal().code) {
      return issue(CorpusIssueKind::wrong_equals_correct,
                   "wrong submission " + std::to_string(i + 1) +
                       " is identical to the correct one");
    }
  }
  return std::nullopt;
}

}  // namespace

std::string_view to_string(Verdict v) {
  return v == Verdict::correct ? "correct" : "wrong";
}

std::string_view to_string(CorpusIssueKind kind) {
  switch (kind) {
    case CorpusIssueKind::malformed_json: return "malformed_json";
    case CorpusIssueKind::schema: return "schema";
    case CorpusIssueKind::no_terminal_correct: return "no_terminal_correct";
    case CorpusIssueKind::out_of_order: return "out_of_order";
    case CorpusIssueKind::wrong_equals_correct: return "wrong_equals_correct";
  }
  return "schema";
}

CorpusParse parse_corpus(std::istream& in) {
  CorpusParse result;
  // Whole-trace records and grouped submission records, in first-seen order.
  std::vector<PendingTrace> pending;
  std::map<std::pair<std::string, std::string>, std::size_t> groups;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      result.issues.push_back(
          {line_no, CorpusIssueKind::malformed_json,
           "line " + std::to_string(line_no) + ": " + e.what()});
      continue;
    }
    try {
      if (!record.is_object()) throw std::invalid_argument("record must be an object");
      std::string problem_id = require_string(record, "problem_id");
      std::string author_id = require_string(record, "author_id");
      if (auto it = record.find("submissions"); it != record.end()) {
        if (!it->is_array()) throw std::invalid_argument("field 'submissions' must be an array");
        PendingTrace p{{problem_id, author_id, {}}, line_no};
        std::uint64_t order = 0;
        for (const auto& s : *it) {
          p.trace.submissions.push_back(parse_submission(s, order++, author_id));
        }
        pending.push_back(std::move(p));
      } else {
        auto key = std::make_pair(problem_id, author_id);
        auto [git, inserted] = groups.try_emplace(key, pending.size());
        if (inserted) pending.push_back({{problem_id, author_id, {}}, line_no});
        auto& trace = pending[git->second].trace;
        trace.submissions.push_back(
            parse_submission(record, trace.submissions.size(), author_id));
      }
    } catch (const std::exception& e) {
      result.issues.push_back({line_no, CorpusIssueKind::schema,
                               "line " + std::to_string(line_no) + ": " + e.what()});
    }
  }

  for (auto& p : pending) {
    if (auto issue = check_trace(p.trace, p.first_line)) {
      issue->message = "line " + std::to_string(p.first_line) + ": " + issue->message;
      result.issues.push_back(std::move(*issue));
      continue;
    }
    result.traces.push_back(std::move(p.trace));
  }
  std::stable_sort(result.issues.begin(), result.issues.end(),
                   [](const auto& a, const auto& b) { return a.line < b.line; });
  return result;
}

void validate_trace(const EditTrace& trace) {
  if (auto issue = check_trace(trace, 0)) {
    throw ParseError(issue->message, 0);
  }
}

std::vector<EditTriplet> build_triplets(const EditTrace& trace) {
  std::vector<EditTriplet> out;
  if (trace.submissions.empty()) return out;
  const std::string& correct = trace.terminal().code;
  out.reserve(trace.submissions.size() - 1);
  for (std::size_t k = 0; k + 1 < trace.submissions.size(); ++k) {
    out.push_back({trace.problem_id, trace.submissions[k].code, correct, k + 1});
  }
  return out;
}

std::vector<WrongPair> consecutive_wrong_pairs(const EditTrace& trace) {
  std::vector<WrongPair> out;
  const auto& subs = trace.submissions;
  // Wrong submissions are subs[0 .. n-2]; pair each with its successor.
  for (std::size_t k = 1; k + 1 < subs.size(); ++k) {
    out.push_back({trace.problem_id, subs[k - 1].code, subs[k].code, k});
  }
  return out;
}

DedupResult dedup_identical_correct(const std::vector<EditTrace>& traces,
                                    const LineNormalization& policy) {
  DedupResult result;
  // (problem, canonical correct code) -> author of the first kept trace
  std::map<std::pair<std::string, std::string>, std::string> first_author;
  for (const auto& trace : traces) {
    if (trace.submissions.empty()) {
      result.kept.push_back(trace);
      continue;
    }
    auto key = std::make_pair(trace.problem_id,
                              canonical_code(trace.terminal().code, policy));
    auto [it, inserted] = first_author.try_emplace(key, trace.author_id);
    if (inserted || it->second == trace.author_id) {
      result.kept.push_back(trace);
    } else {
      ++result.dropped;
    }
  }
  return result;
}

BalanceResult balance_by_difficulty(const std::vector<Problem>& problems,
                                    std::size_t per_level, std::uint64_t seed) {
  if (per_level == 0) {
    throw Error(ErrorCode::invalid_request, "per_level must be >= 1");
  }
  std::map<int, std::vector<std::size_t>> by_level;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    by_level[problems[i].difficulty].push_back(i);
  }
  BalanceResult result;
  std::mt19937_64 rng(seed);
  for (auto& [level, indices] : by_level) {
    if (indices.size() <= per_level) {
      if (indices.size() < per_level) result.shortfall[level] = per_level - indices.size();
    } else {
      seeded_shuffle(indices, rng);
      indices.resize(per_level);
      std::sort(indices.begin(), indices.end());
    }
    for (std::size_t i : indices) result.selected.push_back(problems[i]);
  }
  return result;
}

OverlapReport line_overlap(const std::vector<Document>& candidates,
                           const std::vector<Document>& references,
                           const LineNormalization& policy) {
  std::unordered_set<std::string> reference_lines;
  for (const auto& doc : references) {
    for (auto& line : normalize_lines(doc.text, policy)) {
      reference_lines.insert(std::move(line));
    }
  }

  OverlapReport report;
  report.normalization_policy = policy.id();
  report.fraction_histogram.assign(
      static_cast<std::size_t>(1.0 / kOverlapBucketWidth + 0.5), 0);
  const std::size_t buckets = report.fraction_histogram.size();

  for (const auto& doc : candidates) {
    auto lines = normalize_lines(doc.text, policy);
    if (lines.empty()) {
      report.excluded.push_back(doc.name);
      continue;
    }
    OverlapRow row;
    row.name = doc.name;
    row.total_lines = lines.size();
    for (const auto& line : lines) {
      if (reference_lines.contains(line)) ++row.overlap_lines;
    }
    row.fraction = static_cast<double>(row.overlap_lines) /
                   static_cast<double>(row.total_lines);
    // Integer bucket arithmetic avoids 0.05-step rounding drift.
    std::size_t bucket = row.overlap_lines * buckets / row.total_lines;
    report.fraction_histogram[std::min(bucket, buckets - 1)] += 1;
    report.absolute_histogram[row.overlap_lines] += 1;
    report.total_lines += row.total_lines;
    report.overlap_lines += row.overlap_lines;
    report.rows.push_back(std::move(row));
  }
  if (report.total_lines > 0) {
    report.aggregate_fraction = static_cast<double>(report.overlap_lines) /
                                static_cast<double>(report.total_lines);
  }
  return report;
}

}  // namespace coffee
