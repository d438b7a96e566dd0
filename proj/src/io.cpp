#include "coffee/io.hpp"

#include <fstream>
#include <sstream>

namespace coffee {
namespace {

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

const json& field(const json& j, const char* name) {
  if (!j.is_object()) throw Error(ErrorCode::invalid_request, "expected an object");
  auto it = j.find(name);
  if (it == j.end()) throw Error(ErrorCode::invalid_request, std::string(name) + ": missing");
  return *it;
}

}  // namespace

std::string get_string(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_string()) throw Error(ErrorCode::invalid_request, std::string(name) + ": expected string");
  return v.get<std::string>();
}

std::string get_string_or(const json& j, const char* name, std::string fallback) {
  if (!j.is_object() || !j.contains(name) || j[name].is_null()) return fallback;
  return get_string(j, name);
}

json to_json(const TestCase& c) {
  return {{"input", c.input}, {"expected_output", c.expected_output}};
}

json to_json(const TestSuite& s) {
  json cases = json::array();
  for (const auto& c : s.cases) cases.push_back(to_json(c));
  return {{"suite_id", s.suite_id}, {"test_cases", cases}};
}

json to_json(const Problem& p) {
  json cases = json::array();
  for (const auto& c : p.suite.cases) cases.push_back(to_json(c));
  json j = {{"problem_id", p.problem_id},       {"description", p.description},
            {"input_format", p.input_format},   {"output_format", p.output_format},
            {"difficulty", p.difficulty},       {"suite_id", p.suite.suite_id},
            {"test_cases", cases}};
  if (!p.reference_solution.empty()) j["reference_solution"] = p.reference_solution;
  return j;
}

json to_json(const GenerationParams& p) {
  return {{"temperature", p.temperature},
          {"top_p", p.top_p},
          {"max_tokens", p.max_tokens},
          {"n_samples", p.n_samples},
          {"seed", optional_json(p.seed)}};
}

json to_json(const EvalResult& e) {
  json cases = json::array();
  for (const auto& c : e.per_case) {
    cases.push_back({{"index", c.index},
                     {"status", to_string(c.outcome.status)},
                     {"passed", c.passed}});
  }
  return {{"pass_count", e.pass_count},
          {"total", e.total},
          {"score", e.score},
          {"bitmap", e.bitmap()},
          {"per_case", cases}};
}

json to_json(const RewardResponse& r, bool include_latency) {
  json j = {{"score", r.score},
            {"pass_all", r.pass_all},
            {"edited_code", r.edited_code},
            {"eval", to_json(r.eval)},
            {"flags", r.flags}};
  if (include_latency) j["latency"] = r.latency;
  return j;
}

json to_json(const RewardRequest& r) {
  return {{"problem_id", r.problem_id},
          {"wrong_code", r.wrong_code},
          {"feedback", r.feedback},
          {"editor", r.editor},
          {"suite_ref", r.suite_ref}};
}

json to_json(const MetricsReport& m) {
  return {{"precision", optional_json(m.precision)},
          {"recall", optional_json(m.recall)},
          {"f1", optional_json(m.f1)},
          {"false_positive_rate", optional_json(m.false_positive_rate)},
          {"pearson", optional_json(m.pearson)},
          {"mse", optional_json(m.mse)},
          {"counts",
           {{"tp", m.counts.tp}, {"fp", m.counts.fp}, {"tn", m.counts.tn}, {"fn", m.counts.fn}}}};
}

json to_json(const PassRatioStats& s) {
  return {{"mean", s.mean},     {"std", optional_json(s.std)}, {"min", s.min},
          {"q25", s.q25},       {"median", s.median},          {"q75", s.q75},
          {"max", s.max},       {"sample_count", s.sample_count}};
}

json to_json(const AuditReport& a) {
  return {{"stats", to_json(a.stats)}, {"ratios", a.ratios}, {"valid", a.valid}};
}

json to_json(const SynthesizedSuite& s) {
  json rejected = json::array();
  for (const auto& r : s.provenance.rejected) {
    rejected.push_back({{"input", r.input}, {"status", to_string(r.outcome.status)}});
  }
  json j = to_json(s.suite);
  j["provenance"] = {{"generator_model", s.provenance.generator_model},
                     {"params", to_json(s.provenance.params)},
                     {"rejected", rejected},
                     {"requests", s.provenance.requests},
                     {"parsed", s.provenance.parsed},
                     {"duplicates", s.provenance.duplicates}};
  return j;
}

json to_json(const FeedbackRecord& f) {
  return {{"problem_id", f.problem_id},
          {"wrong_code", f.wrong_code},
          {"text", f.text},
          {"polarity", to_string(f.polarity)},
          {"source", to_string(f.source)},
          {"score", optional_json(f.score)}};
}

namespace {
json context_json(const PairContext& c) {
  return {{"problem_id", c.problem_id}, {"description", c.description}, {"wrong_code", c.wrong_code}};
}
}  // namespace

json to_json(const PreferencePair& p) {
  return {{"context", context_json(p.context)},
          {"chosen", p.chosen},
          {"rejected", p.rejected},
          {"strategy", to_string(p.strategy)},
          {"margin", optional_json(p.margin)}};
}

json to_json(const SkippedPair& s) {
  return {{"context", context_json(s.context)}, {"reason", s.reason}};
}

json to_json(const SftRecord& r) {
  return {{"context", context_json(r.context)},
          {"feedback", r.feedback},
          {"score", r.score},
          {"strategy", "RS"}};
}

json to_json(const EditorTrainRecord& r) {
  return {{"prompt", r.prompt},
          {"target", r.target},
          {"phase", r.phase},
          {"keyword", r.keyword ? json(std::string(keyword_text(*r.keyword))) : json(nullptr)}};
}

json to_json(const OverlapReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"name", row.name},
                    {"total_lines", row.total_lines},
                    {"overlap_lines", row.overlap_lines},
                    {"fraction", row.fraction}});
  }
  json absolute = json::object();
  for (const auto& [k, v] : r.absolute_histogram) absolute[std::to_string(k)] = v;
  return {{"normalization_policy", r.normalization_policy},
          {"rows", rows},
          {"excluded", r.excluded},
          {"total_lines", r.total_lines},
          {"overlap_lines", r.overlap_lines},
          {"aggregate_fraction", optional_json(r.aggregate_fraction)},
          {"bucket_width", kOverlapBucketWidth},
          {"fraction_histogram", r.fraction_histogram},
          {"absolute_histogram", absolute}};
}

json to_json(const Trajectory& t) {
  json rounds = json::array();
  for (const auto& r : t.rounds) {
    rounds.push_back(
        {{"feedback", r.feedback}, {"edited_code", r.edited_code}, {"eval", to_json(r.eval)}});
  }
  return {{"rounds", rounds}, {"solved", t.solved()}};
}

TestCase test_case_from_json(const json& j) {
  return {get_string(j, "input"), get_string(j, "expected_output")};
}

TestSuite suite_from_json(const json& j) {
  TestSuite s;
  s.suite_id = get_string_or(j, "suite_id", get_string_or(j, "problem_id", ""));
  const json& cases = field(j, "test_cases");
  if (!cases.is_array()) throw Error(ErrorCode::invalid_request, "test_cases: expected array");
  for (const auto& c : cases) s.cases.push_back(test_case_from_json(c));
  return s;
}

Problem problem_from_json(const json& j) {
  Problem p;
  p.problem_id = get_string(j, "problem_id");
  p.description = get_string_or(j, "description", "");
  p.input_format = get_string_or(j, "input_format", "");
  p.output_format = get_string_or(j, "output_format", "");
  if (j.contains("difficulty")) {
    if (!j["difficulty"].is_number_integer()) {
      throw Error(ErrorCode::invalid_request, "difficulty: expected integer");
    }
    p.difficulty = j["difficulty"].get<int>();
  }
  if (j.contains("test_cases")) p.suite = suite_from_json(j);
  if (p.suite.suite_id.empty()) p.suite.suite_id = p.problem_id;
  p.reference_solution = get_string_or(j, "reference_solution", "");
  return p;
}

GenerationParams params_from_json(const json& j) {
  GenerationParams p;
  if (!j.is_object()) throw Error(ErrorCode::invalid_request, "params: expected object");
  try {
    p.temperature = j.value("temperature", p.temperature);
    p.top_p = j.value("top_p", p.top_p);
    p.max_tokens = j.value("max_tokens", p.max_tokens);
    p.n_samples = j.value("n_samples", p.n_samples);
    if (j.contains("seed") && !j["seed"].is_null()) p.seed = j["seed"].get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_request, std::string("params: ") + e.what());
  }
  return p;
}

RewardRequest reward_request_from_json(const json& j) {
  RewardRequest r;
  r.problem_id = get_string(j, "problem_id");
  r.wrong_code = get_string(j, "wrong_code");
  r.feedback = get_string_or(j, "feedback", "");
  r.editor = get_string_or(j, "editor", "");
  r.suite_ref = get_string_or(j, "suite_ref", "");
  return r;
}

FeedbackRecord feedback_record_from_json(const json& j) {
  FeedbackRecord f;
  f.problem_id = get_string(j, "problem_id");
  f.wrong_code = get_string(j, "wrong_code");
  f.text = get_string(j, "text");
  auto pol = parse_polarity(get_string(j, "polarity"));
  if (!pol) throw Error(ErrorCode::invalid_request, "polarity: expected correct or wrong");
  f.polarity = *pol;
  auto src = parse_feedback_source(get_string_or(j, "source", "annotated"));
  if (!src) throw Error(ErrorCode::invalid_request, "source: expected annotated or sampled");
  f.source = *src;
  if (j.contains("score") && !j["score"].is_null()) f.score = j["score"].get<double>();
  return f;
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::not_found, "cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what(), line_no);
    }
  }
  return out;
}

std::string to_jsonl(const std::vector<json>& records) {
  std::string out;
  for (const auto& r : records) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::invalid_request, "cannot write " + path.string());
  out << to_jsonl(records);
}

namespace {
template <typename Fn>
auto with_location(const std::filesystem::path& path, std::size_t index, Fn fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + " record " + std::to_string(index + 1) + ": " + e.what());
  }
}
}  // namespace

ProblemIndex load_problems(const std::filesystem::path& path) {
  ProblemIndex out;
  auto records = read_jsonl(path);
  for (std::size_t i = 0; i < records.size(); ++i) {
    Problem p = with_location(path, i, [&] { return problem_from_json(records[i]); });
    std::string id = p.problem_id;
    if (!out.emplace(id, std::move(p)).second) {
      throw Error(ErrorCode::invalid_request, path.string() + ": duplicate problem_id " + id);
    }
  }
  return out;
}

std::vector<FeedbackRecord> load_feedback(const std::filesystem::path& path) {
  std::vector<FeedbackRecord> out;
  auto records = read_jsonl(path);
  for (std::size_t i = 0; i < records.size(); ++i) {
    out.push_back(with_location(path, i, [&] { return feedback_record_from_json(records[i]); }));
  }
  return out;
}

}  // namespace coffee
