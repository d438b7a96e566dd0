#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "coffee/cli.hpp"
#include "coffee/io.hpp"
#include "support.hpp"

using namespace coffee;
using nlohmann::json;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string config() { return (coffee::testing::fixtures_dir() / "config.json").string(); }

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "coffee_cli_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"brew"}).code, 2);
  EXPECT_EQ(run({"score"}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, ErrorCategoriesHaveDistinctExitCodes) {
  EXPECT_EQ(exit_code_for(ErrorCode::invalid_request), 3);
  EXPECT_EQ(exit_code_for(ErrorCode::not_found), 4);
  EXPECT_EQ(exit_code_for(ErrorCode::upstream_model_error), 5);
  EXPECT_EQ(exit_code_for(ErrorCode::sandbox_error), 6);
  EXPECT_EQ(exit_code_for(ErrorCode::capacity), 7);
}

TEST(Cli, IngestCountsTriplets) {
  auto triplets = scratch("triplets.jsonl");
  CliRun r = run({"--config", config(), "ingest", "--triplets-out", triplets.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  json j = json::parse(r.out);
  EXPECT_EQ(j["traces"], 12);
  EXPECT_EQ(j["dedup_dropped"], 0);
  EXPECT_EQ(j["triplets"], 18);
  EXPECT_EQ(read_jsonl(triplets).size(), 18u);
}

TEST(Cli, AuditOfShippedCorpusIsValid) {
  CliRun r = run({"--config", config(), "audit"});
  ASSERT_EQ(r.code, 0) << r.err;
  json j = json::parse(r.out);
  EXPECT_TRUE(j["valid"].get<bool>());
  EXPECT_LT(j["overall"]["max"].get<double>(), 1.0);
  EXPECT_EQ(j["rows"].size(), 6u);
}

TEST(Cli, EvaluateLabeledSet) {
  CliRun r = run({"--config", config(), "evaluate", "--editor", "mock-faithful"});
  ASSERT_EQ(r.code, 0) << r.err;
  json j = json::parse(r.out);
  EXPECT_EQ(j["items"], 40);
  EXPECT_EQ(j["metrics"]["f1"], 1.0);
  EXPECT_EQ(j["metrics"]["pearson"], 1.0);

  CliRun s = run({"--config", config(), "evaluate", "--editor", "mock-skewed"});
  ASSERT_EQ(s.code, 0) << s.err;
  json k = json::parse(s.out);
  EXPECT_EQ(k["metrics"]["false_positive_rate"], 1.0);
  EXPECT_TRUE(k["metrics"]["pearson"].is_null());
  EXPECT_EQ(k["pass_at_1"], 100.0);
}

TEST(Cli, ScoreAndErrors) {
  auto wrong = scratch("wrong.py");
  std::ofstream(wrong) << "a, b = map(int, input().split())\nprint(a * b)\n";
  CliRun r = run({"--config", config(), "score", "--problem", "add-two", "--wrong", wrong.string(),
               "--feedback", "[feedback:correct] use addition"});
  ASSERT_EQ(r.code, 0) << r.err;
  json j = json::parse(r.out);
  EXPECT_EQ(j["score"], 1.0);
  EXPECT_FALSE(j.contains("latency"));

  CliRun missing = run({"--config", config(), "score", "--problem", "nope", "--wrong",
                     wrong.string(), "--feedback", "x"});
  EXPECT_EQ(missing.code, 4);
  EXPECT_EQ(json::parse(missing.err)["error"]["code"], "not_found");

  CliRun bad_editor = run({"--config", config(), "score", "--problem", "add-two", "--wrong",
                        wrong.string(), "--editor", "psychic"});
  EXPECT_EQ(bad_editor.code, 3);
}

TEST(Cli, BadConfigListsIssues) {
  auto cfg = scratch("bad.json");
  std::ofstream(cfg) << R"({"sandbox": {"workers": "many"}, "oops": 1})";
  CliRun r = run({"--config", cfg.string(), "audit"});
  EXPECT_EQ(r.code, 3);
  json e = json::parse(r.err);
  EXPECT_EQ(e["error"]["issues"].size(), 2u);
}

TEST(Cli, OverlapOfDirectoryWithItself) {
  auto dir = scratch("overlap");
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "a.py") << "x = 1\n# note\ny = 2\n";
  std::ofstream(dir / "b.py") << "\n\n";
  CliRun r = run({"overlap", "--candidate", dir.string(), "--reference", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  json j = json::parse(r.out);
  EXPECT_EQ(j["aggregate_fraction"], 1.0);
  EXPECT_EQ(j["excluded"].size(), 1u);
  EXPECT_EQ(run({"overlap", "--candidate", "/nonexistent", "--reference", dir.string()}).code, 4);
}

TEST(Cli, PairsAreReproducible) {
  auto contexts = scratch("contexts.jsonl");
  write_jsonl(contexts, {{{"problem_id", "add-two"},
                          {"wrong_code", "a, b = map(int, input().split())\nprint(a * b)\n"}},
                         {{"problem_id", "factorial"},
                          {"wrong_code", "n = int(input())\nprint(n * (n - 1) if n > 1 else 1)\n"}}});
  for (std::string strategy : {"CW", "CoffeeEval", "RS"}) {
    std::vector<std::string> args = {"--config", config(), "pairs", "--strategy", strategy};
    if (strategy != "CW") args.insert(args.end(), {"--input", contexts.string()});
    CliRun a = run(args);
    CliRun b = run(args);
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_FALSE(a.out.empty()) << strategy;
    EXPECT_EQ(a.out, b.out) << strategy;
  }
  EXPECT_EQ(run({"--config", config(), "pairs", "--strategy", "XX"}).code, 3);
}

TEST(Cli, EditorCorpusPhases) {
  CliRun one = run({"--config", config(), "pairs", "--strategy", "editor-corpus", "--phase", "1"});
  ASSERT_EQ(one.code, 0) << one.err;
  std::istringstream lines(one.out);
  std::size_t n = 0;
  for (std::string line; std::getline(lines, line); ++n) {
    json rec = json::parse(line);
    EXPECT_EQ(rec["target"].get<std::string>().rfind(rec["keyword"].get<std::string>(), 0), 0u);
  }
  EXPECT_EQ(n, 40u);
  EXPECT_EQ(run({"--config", config(), "pairs", "--strategy", "editor-corpus", "--phase", "3"}).code,
            3);
}

TEST(Cli, TestgenWithMockAnnotator) {
  auto out = scratch("suites.jsonl");
  CliRun r = run({"--config", config(), "--output", out.string(), "testgen", "--problem",
               "reverse-word"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto rows = read_jsonl(out);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0]["problem_id"], "reverse-word");
  EXPECT_EQ(rows[0]["test_cases"].size(), 4u);
}

}  // namespace
