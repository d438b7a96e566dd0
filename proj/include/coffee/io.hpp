#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "coffee/clients.hpp"
#include "coffee/corpus.hpp"
#include "coffee/pairing.hpp"
#include "coffee/reward.hpp"
#include "coffee/sandbox.hpp"
#include "coffee/testgen.hpp"
#include "json.hpp"

namespace coffee {

using json = nlohmann::json;

// Record <-> JSON. Optional values are written as null. Readers throw
// Error(invalid_request) naming the offending field.

json to_json(const TestCase& c);
json to_json(const TestSuite& s);
json to_json(const Problem& p);
json to_json(const GenerationParams& p);
json to_json(const EvalResult& e);
json to_json(const RewardResponse& r, bool include_latency = true);
json to_json(const RewardRequest& r);
json to_json(const MetricsReport& m);
json to_json(const PassRatioStats& s);
json to_json(const AuditReport& a);
json to_json(const SynthesizedSuite& s);
json to_json(const FeedbackRecord& f);
json to_json(const PreferencePair& p);
json to_json(const SkippedPair& s);
json to_json(const SftRecord& r);
json to_json(const EditorTrainRecord& r);
json to_json(const OverlapReport& r);
json to_json(const Trajectory& t);

TestCase test_case_from_json(const json& j);
TestSuite suite_from_json(const json& j);
Problem problem_from_json(const json& j);
GenerationParams params_from_json(const json& j);
RewardRequest reward_request_from_json(const json& j);
FeedbackRecord feedback_record_from_json(const json& j);

// Field accessors with typed errors.
std::string get_string(const json& j, const char* field);
std::string get_string_or(const json& j, const char* field, std::string fallback);

// Line-delimited JSON. Blank lines are skipped; errors carry "path:line".
std::vector<json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);
std::string to_jsonl(const std::vector<json>& records);

ProblemIndex load_problems(const std::filesystem::path& path);
std::vector<FeedbackRecord> load_feedback(const std::filesystem::path& path);

}  // namespace coffee
