#include "coffee/corpus.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "coffee/error.hpp"

namespace coffee {
namespace {

EditTrace make_trace(std::string problem, std::string author,
                     std::vector<std::string> wrongs, std::string correct) {
  EditTrace t{std::move(problem), std::move(author), {}};
  std::uint64_t order = 0;
  for (auto& w : wrongs) {
    t.submissions.push_back({std::move(w), Verdict::wrong, order++, t.author_id});
  }
  t.submissions.push_back({std::move(correct), Verdict::correct, order, t.author_id});
  return t;
}

CorpusParse parse(const std::string& text) {
  std::istringstream in(text);
  return parse_corpus(in);
}

TEST(ParseCorpus, SubmissionRecordsGroupIntoOneTrace) {
  auto r = parse(
      R"j({"problem_id":"p1","author_id":"u1","code":"print(1)","verdict":"wrong"})j"
      "\n"
      R"j({"problem_id":"p1","author_id":"u1","code":"print(2)","verdict":"wrong"})j"
      "\n"
      R"j({"problem_id":"p1","author_id":"u1","code":"print(3)","verdict":"correct"})j"
      "\n");
  ASSERT_TRUE(r.issues.empty()) << r.issues[0].message;
  ASSERT_EQ(r.traces.size(), 1u);
  EXPECT_EQ(r.traces[0].problem_id, "p1");
  ASSERT_EQ(r.traces[0].submissions.size(), 3u);
  EXPECT_EQ(r.traces[0].terminal().code, "print(3)");
}

TEST(ParseCorpus, WholeTraceRecord) {
  auto r = parse(
      R"j({"problem_id":"p1","author_id":"u1","submissions":[{"code":"a","verdict":"wrong"},{"code":"b","verdict":"correct"}]})j");
  ASSERT_TRUE(r.issues.empty());
  ASSERT_EQ(r.traces.size(), 1u);
  EXPECT_EQ(r.traces[0].submissions[1].order_index, 1u);
  EXPECT_EQ(r.traces[0].submissions[0].author_id, "u1");
}

TEST(ParseCorpus, MissingVerdictNamesTheLine) {
  auto r = parse(
      R"j({"problem_id":"p1","author_id":"u1","submissions":[{"code":"b","verdict":"correct"}]})j"
      "\n"
      R"j({"problem_id":"p2","author_id":"u1","submissions":[{"code":"a"}]})j"
      "\n");
  ASSERT_EQ(r.traces.size(), 1u);
  ASSERT_EQ(r.issues.size(), 1u);
  EXPECT_EQ(r.issues[0].line, 2u);
  EXPECT_EQ(r.issues[0].kind, CorpusIssueKind::schema);
  EXPECT_NE(r.issues[0].message.find("verdict"), std::string::npos);
  EXPECT_NE(r.issues[0].message.find("line 2"), std::string::npos);
}

TEST(ParseCorpus, TraceEndingWrongIsRejected) {
  auto r = parse(
      R"j({"problem_id":"p1","author_id":"u1","submissions":[{"code":"a","verdict":"wrong"},{"code":"b","verdict":"wrong"}]})j");
  EXPECT_TRUE(r.traces.empty());
  ASSERT_EQ(r.issues.size(), 1u);
  EXPECT_EQ(r.issues[0].kind, CorpusIssueKind::no_terminal_correct);
  EXPECT_NE(r.issues[0].message.find("no terminal correct solution"),
            std::string::npos);
}

TEST(ParseCorpus, CorrectInTheMiddleIsRejected) {
  auto r = parse(
      R"j({"problem_id":"p1","author_id":"u1","submissions":[{"code":"a","verdict":"correct"},{"code":"b","verdict":"correct"}]})j");
  EXPECT_TRUE(r.traces.empty());
  ASSERT_EQ(r.issues.size(), 1u);
  EXPECT_EQ(r.issues[0].kind, CorpusIssueKind::no_terminal_correct);
}

TEST(ParseCorpus, EmptyStreamIsEmptyList) {
  auto r = parse("");
  EXPECT_TRUE(r.traces.empty());
  EXPECT_TRUE(r.issues.empty());
  r = parse("\n   \n");
  EXPECT_TRUE(r.traces.empty());
  EXPECT_TRUE(r.issues.empty());
}

TEST(ParseCorpus, MalformedJsonAndOrderingErrors) {
  auto r = parse(
      "{not json\n"
      R"j({"problem_id":"p1","author_id":"u1","code":"a","verdict":"wrong","order_index":5})j"
      "\n"
      R"j({"problem_id":"p1","author_id":"u1","code":"b","verdict":"correct","order_index":2})j"
      "\n"
      R"j({"problem_id":"p2","author_id":"u1","submissions":[{"code":"","verdict":"correct"}]})j"
      "\n");
  EXPECT_TRUE(r.traces.empty());
  ASSERT_EQ(r.issues.size(), 3u);
  EXPECT_EQ(r.issues[0].kind, CorpusIssueKind::malformed_json);
  EXPECT_EQ(r.issues[0].line, 1u);
  EXPECT_EQ(r.issues[1].kind, CorpusIssueKind::out_of_order);
  EXPECT_EQ(r.issues[1].line, 2u);
  EXPECT_EQ(r.issues[2].kind, CorpusIssueKind::schema);
  EXPECT_EQ(r.issues[2].line, 4u);
}

TEST(ValidateTrace, RejectsWrongEqualToCorrect) {
  auto t = make_trace("p", "u", {"same"}, "same");
  EXPECT_THROW(validate_trace(t), ParseError);
  EXPECT_NO_THROW(validate_trace(make_trace("p", "u", {"a"}, "b")));
}

TEST(BuildTriplets, PairsEveryWrongWithTheCorrect) {
  auto t = make_trace("p1", "u", {"w1", "w2"}, "c");
  auto triplets = build_triplets(t);
  ASSERT_EQ(triplets.size(), 2u);
  EXPECT_EQ(triplets[0].wrong_code, "w1");
  EXPECT_EQ(triplets[1].wrong_code, "w2");
  EXPECT_EQ(triplets[0].correct_code, "c");
  EXPECT_EQ(triplets[1].correct_code, "c");
  EXPECT_EQ(triplets[0].problem_id, "p1");
}

TEST(BuildTriplets, CorrectOnlyTraceYieldsNothing) {
  EXPECT_TRUE(build_triplets(make_trace("p", "u", {}, "c")).empty());
}

TEST(BuildTriplets, FiveWrongGiveIndicesOneToFive) {
  auto triplets =
      build_triplets(make_trace("p", "u", {"a", "b", "c", "d", "e"}, "ok"));
  ASSERT_EQ(triplets.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(triplets[i].wrong_index, i + 1);
}

TEST(ConsecutiveWrongPairs, SlidingWindowOverWrongs) {
  auto pairs = consecutive_wrong_pairs(make_trace("p", "u", {"w1", "w2", "w3"}, "c"));
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].earlier_wrong, "w1");
  EXPECT_EQ(pairs[0].later_wrong, "w2");
  EXPECT_EQ(pairs[1].earlier_wrong, "w2");
  EXPECT_EQ(pairs[1].later_wrong, "w3");
  EXPECT_TRUE(consecutive_wrong_pairs(make_trace("p", "u", {"w1"}, "c")).empty());
  EXPECT_EQ(consecutive_wrong_pairs(make_trace("p", "u", {"w1", "w2"}, "c")).size(), 1u);
}

TEST(TraceProperties, TripletAndPairCountsHoldForRandomTraces) {
  std::mt19937_64 rng(7);
  for (int iter = 0; iter < 200; ++iter) {
    std::size_t wrongs = rng() % 8;
    std::vector<std::string> codes;
    for (std::size_t i = 0; i < wrongs; ++i) codes.push_back("w" + std::to_string(i));
    auto t = make_trace("p", "u", codes, "correct");
    auto triplets = build_triplets(t);
    auto pairs = consecutive_wrong_pairs(t);
    EXPECT_EQ(triplets.size(), t.submissions.size() - 1);
    EXPECT_EQ(pairs.size(), wrongs >= 2 ? wrongs - 1 : 0);
    for (const auto& tr : triplets) EXPECT_EQ(tr.correct_code, t.terminal().code);
    for (const auto& p : pairs) {
      EXPECT_NE(p.earlier_wrong, "correct");
      EXPECT_NE(p.later_wrong, "correct");
    }
  }
}

TEST(Dedup, IdenticalCorrectAcrossAuthorsKeepsEarliest) {
  std::vector<EditTrace> traces = {make_trace("p1", "alice", {"a"}, "print(1)"),
                                   make_trace("p1", "bob", {"b"}, "print(1)")};
  auto r = dedup_identical_correct(traces);
  ASSERT_EQ(r.kept.size(), 1u);
  EXPECT_EQ(r.kept[0].author_id, "alice");
  EXPECT_EQ(r.dropped, 1u);
}

TEST(Dedup, IsPerProblem) {
  std::vector<EditTrace> traces = {make_trace("p1", "alice", {"a"}, "print(1)"),
                                   make_trace("p2", "bob", {"b"}, "print(1)")};
  EXPECT_EQ(dedup_identical_correct(traces).kept.size(), 2u);
}

TEST(Dedup, TrailingWhitespaceDependsOnPolicy) {
  std::vector<EditTrace> traces = {
      make_trace("p1", "alice", {"a"}, "x = 1\nprint(x)\n"),
      make_trace("p1", "bob", {"b"}, "x = 1   \nprint(x)\t\n\n")};
  EXPECT_EQ(dedup_identical_correct(traces).kept.size(), 1u);
  LineNormalization exact{LineNormalization::Mode::exact, ""};
  EXPECT_EQ(dedup_identical_correct(traces, exact).kept.size(), 2u);
}

TEST(Dedup, IsIdempotent) {
  std::mt19937_64 rng(11);
  for (int iter = 0; iter < 50; ++iter) {
    std::vector<EditTrace> traces;
    for (int i = 0; i < 12; ++i) {
      traces.push_back(make_trace("p" + std::to_string(rng() % 3),
                                  "u" + std::to_string(rng() % 4), {"w"},
                                  "print(" + std::to_string(rng() % 3) + ")"));
    }
    auto once = dedup_identical_correct(traces);
    auto twice = dedup_identical_correct(once.kept);
    EXPECT_EQ(twice.dropped, 0u);
    ASSERT_EQ(twice.kept.size(), once.kept.size());
    for (std::size_t i = 0; i < once.kept.size(); ++i) {
      EXPECT_EQ(twice.kept[i].author_id, once.kept[i].author_id);
      EXPECT_EQ(twice.kept[i].problem_id, once.kept[i].problem_id);
    }
  }
}

std::vector<Problem> problems_per_level(std::vector<int> counts) {
  std::vector<Problem> out;
  for (std::size_t level = 1; level <= counts.size(); ++level) {
    for (int i = 0; i < counts[level - 1]; ++i) {
      Problem p;
      p.problem_id = "L" + std::to_string(level) + "_" + std::to_string(i);
      p.difficulty = static_cast<int>(level);
      out.push_back(p);
    }
  }
  return out;
}

TEST(BalanceByDifficulty, TakesPerLevelFromEachLevel) {
  auto r = balance_by_difficulty(problems_per_level({10, 10, 10, 10, 10}), 2, 42);
  ASSERT_EQ(r.selected.size(), 10u);
  EXPECT_TRUE(r.shortfall.empty());
  std::map<int, int> count;
  for (const auto& p : r.selected) count[p.difficulty]++;
  for (int level = 1; level <= 5; ++level) EXPECT_EQ(count[level], 2);
}

TEST(BalanceByDifficulty, ReportsShortfall) {
  auto r = balance_by_difficulty(problems_per_level({5, 5, 5, 5, 1}), 3, 1);
  EXPECT_EQ(r.selected.size(), 13u);
  ASSERT_EQ(r.shortfall.count(5), 1u);
  EXPECT_EQ(r.shortfall.at(5), 2u);
}

TEST(BalanceByDifficulty, SameSeedSameSelection) {
  auto problems = problems_per_level({9, 9, 9, 9, 9});
  auto a = balance_by_difficulty(problems, 4, 1234);
  auto b = balance_by_difficulty(problems, 4, 1234);
  ASSERT_EQ(a.selected.size(), b.selected.size());
  for (std::size_t i = 0; i < a.selected.size(); ++i) {
    EXPECT_EQ(a.selected[i].problem_id, b.selected[i].problem_id);
  }
  auto c = balance_by_difficulty(problems, 4, 4321);
  bool differs = false;
  for (std::size_t i = 0; i < a.selected.size(); ++i) {
    differs |= a.selected[i].problem_id != c.selected[i].problem_id;
  }
  EXPECT_TRUE(differs);
}

TEST(BalanceByDifficulty, ZeroPerLevelIsError) {
  EXPECT_THROW(balance_by_difficulty({}, 0, 1), Error);
}

TEST(LineOverlap, IdentityIsFullOverlap) {
  std::vector<Document> docs = {{"a", "x = 1\ny = 2\n"}, {"b", "print(3)\n"}};
  auto r = line_overlap(docs, docs);
  ASSERT_TRUE(r.aggregate_fraction.has_value());
  EXPECT_EQ(*r.aggregate_fraction, 1.0);
  for (const auto& row : r.rows) EXPECT_EQ(row.fraction, 1.0);
  EXPECT_EQ(r.fraction_histogram.back(), 2u);
}

TEST(LineOverlap, DisjointIsZero) {
  auto r = line_overlap({{"a", "x = 1\n"}}, {{"b", "y = 2\n"}});
  EXPECT_EQ(r.rows[0].fraction, 0.0);
  EXPECT_EQ(r.fraction_histogram.front(), 1u);
  auto empty_ref = line_overlap({{"a", "x = 1\n"}}, {});
  EXPECT_EQ(*empty_ref.aggregate_fraction, 0.0);
}

TEST(LineOverlap, HandCountedHalf) {
  auto r = line_overlap({{"a", "a = 1\nb = 2\nc = 3\nd = 4\n"}},
                        {{"r", "b = 2\nzzz\n  d = 4  \n"}});
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].overlap_lines, 2u);
  EXPECT_EQ(r.rows[0].total_lines, 4u);
  EXPECT_EQ(r.rows[0].fraction, 0.5);
  EXPECT_EQ(r.fraction_histogram[10], 1u);
  EXPECT_EQ(r.absolute_histogram.at(2), 1u);
}

TEST(LineOverlap, BlankAndCommentOnlyDocumentsAreExcluded) {
  auto r = line_overlap({{"blank", "\n   \n# only a comment\n"}, {"real", "x\n"}},
                        {{"r", "x\n"}});
  ASSERT_EQ(r.excluded.size(), 1u);
  EXPECT_EQ(r.excluded[0], "blank");
  EXPECT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.normalization_policy, "whitespace(#)");

  LineNormalization exact{LineNormalization::Mode::exact, ""};
  auto e = line_overlap({{"a", "x\n  y\n"}}, {{"r", "x\ny\n"}}, exact);
  EXPECT_EQ(e.rows[0].overlap_lines, 1u);
}

TEST(LineOverlap, AllExcludedHasNoAggregate) {
  auto r = line_overlap({{"blank", "\n"}}, {{"r", "x\n"}});
  EXPECT_FALSE(r.aggregate_fraction.has_value());
}

}  // namespace
}  // namespace coffee
