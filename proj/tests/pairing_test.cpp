#include "coffee/pairing.hpp"

#include <gtest/gtest.h>

namespace coffee {
namespace {

const std::string kWrong = "a, b = map(int, input().split())\nprint(a - b)\n";
const std::string kRight = "a, b = map(int, input().split())\nprint(a + b)\n";
const std::string kBadEdit = "a, b = map(int, input().split())\nprint(a * b)\n";

Problem sum_problem() {
  Problem p;
  p.problem_id = "sum";
  p.description = "Print a + b.";
  p.input_format = "Two integers.";
  p.output_format = "One integer.";
  p.suite = {"sum-suite", {{"1 2\n", "3\n"}, {"0 0\n", "0\n"}, {"3 4\n", "7\n"}, {"5 5\n", "10\n"}}};
  return p;
}

ProblemIndex index() {
  ProblemIndex idx;
  idx.emplace("sum", sum_problem());
  return idx;
}

SandboxConfig fast_config() {
  SandboxConfig c;
  c.limits.wall_time = 2.0;
  return c;
}

PairContext ctx(const std::string& wrong = kWrong) { return make_context(sum_problem(), wrong); }

TEST(AnnotationJobs, OnePerTripletAndWrongPair) {
  std::vector<EditTriplet> triplets = {{"sum", kWrong, kRight, 1}, {"sum", kBadEdit, kRight, 2}};
  std::vector<WrongPair> pairs = {{"sum", kWrong, kBadEdit, 1}};
  auto jobs = build_feedback_annotation_jobs(triplets, pairs, index());
  ASSERT_EQ(jobs.size(), 3u);
  EXPECT_EQ(jobs[0].polarity, Polarity::correct);
  EXPECT_EQ(jobs[1].polarity, Polarity::correct);
  EXPECT_EQ(jobs[2].polarity, Polarity::wrong);
  EXPECT_EQ(jobs[2].target_code, kBadEdit);
  EXPECT_EQ(jobs[0].params.temperature, 0.7);
  EXPECT_EQ(jobs[0].params.top_p, 0.95);
  EXPECT_EQ(jobs[0].params.max_tokens, 500);
  EXPECT_NE(jobs[0].prompt.find("print(a + b)"), std::string::npos);
  EXPECT_NE(jobs[2].prompt.find("Code after editing:\n" + kBadEdit), std::string::npos);
  EXPECT_TRUE(jobs[2].prompt.ends_with("Feedback for Refining the Code:\n"));
}

TEST(AnnotationJobs, TraceWithoutConsecutiveWrongs) {
  EditTrace trace{"sum", "u1", {{kWrong, Verdict::wrong, 0, "u1"}, {kRight, Verdict::correct, 1, "u1"}}};
  auto jobs = build_feedback_annotation_jobs(build_triplets(trace), consecutive_wrong_pairs(trace),
                                             index());
  ASSERT_EQ(jobs.size(), 1u);
  EXPECT_EQ(jobs[0].polarity, Polarity::correct);
}

TEST(AnnotationJobs, UnknownProblemIsNotFound) {
  try {
    build_feedback_annotation_jobs({{"nope", kWrong, kRight, 1}}, {}, index());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::not_found);
  }
}

TEST(AnnotationJobs, NoErrorRepliesAreDiscarded) {
  std::vector<EditTriplet> triplets = {{"sum", kWrong, kRight, 1}, {"sum", kBadEdit, kRight, 2}};
  auto jobs = build_feedback_annotation_jobs(triplets, {}, index());
  int call = 0;
  FunctionClient annotator("a", [&](const std::string&, const GenerationParams&) {
    return std::vector<std::string>{call++ == 0 ? "Use + instead of -." : "No errors found."};
  });
  auto run = run_annotation_jobs(jobs, annotator);
  ASSERT_EQ(run.records.size(), 1u);
  EXPECT_EQ(run.discarded, 1u);
  EXPECT_EQ(run.records[0].text, "Use + instead of -.");
  EXPECT_EQ(run.records[0].source, FeedbackSource::annotated);
}

TEST(DpoTs, TeacherChosen) {
  auto r = build_dpo_ts({{ctx(), "teacher", "student", {}, {}}});
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.pairs[0].chosen, "teacher");
  EXPECT_EQ(r.pairs[0].rejected, "student");
  EXPECT_EQ(r.pairs[0].strategy, Strategy::ts);
}

TEST(DpoTs, IdenticalSkipped) {
  auto r = build_dpo_ts({{ctx(), "same", "same", {}, {}}});
  EXPECT_TRUE(r.pairs.empty());
  ASSERT_EQ(r.skipped.size(), 1u);
  EXPECT_EQ(r.skipped[0].reason, "identical");
}

TEST(DpoTs, BatchPreservesOrder) {
  std::vector<TsItem> items;
  for (int i = 0; i < 3; ++i) {
    items.push_back({ctx("w" + std::to_string(i)), "t" + std::to_string(i), "s", {}, {}});
  }
  auto r = build_dpo_ts(items);
  ASSERT_EQ(r.pairs.size(), 3u);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(r.pairs[i].chosen, "t" + std::to_string(i));
}

TEST(DpoTs, ValidatedModeRequiresBetterTeacher) {
  auto r = build_dpo_ts({{ctx(), "t", "s", 0.25, 0.5}, {ctx(), "t", "s", 1.0, 0.5}}, true);
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.pairs[0].margin, 0.5);
  EXPECT_EQ(r.skipped[0].reason, "teacher not better");
  EXPECT_EQ(build_dpo_ts({{ctx(), "t", "s", 0.25, 0.5}}).pairs.size(), 1u);
}

FeedbackRecord rec(const std::string& text, Polarity p) {
  return {"sum", kWrong, text, p, FeedbackSource::annotated, {}};
}

TEST(DpoCw, CorrectChosenOverWrong) {
  auto r = build_dpo_cw(ctx(), {rec("wrong fb", Polarity::wrong), rec("good fb", Polarity::correct)});
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.pairs[0].chosen, "good fb");
  EXPECT_EQ(r.pairs[0].rejected, "wrong fb");
  EXPECT_EQ(r.pairs[0].strategy, Strategy::cw);
}

TEST(DpoCw, MissingPolaritySkipped) {
  auto r = build_dpo_cw(ctx(), {rec("good", Polarity::correct)});
  EXPECT_TRUE(r.pairs.empty());
  EXPECT_EQ(r.skipped.at(0).reason, "missing wrong feedback");
}

TEST(DpoCw, CapBoundsCrossProduct) {
  std::vector<FeedbackRecord> records = {rec("c", Polarity::correct), rec("w1", Polarity::wrong),
                                         rec("w2", Polarity::wrong), rec("w3", Polarity::wrong)};
  auto one = build_dpo_cw(ctx(), records);
  ASSERT_EQ(one.pairs.size(), 1u);
  EXPECT_EQ(one.pairs[0].rejected, "w1");
  auto all = build_dpo_cw(ctx(), records, 10);
  ASSERT_EQ(all.pairs.size(), 3u);
  EXPECT_EQ(all.pairs[2].rejected, "w3");
}

TEST(DpoCw, NeverPairsSamePolarity) {
  std::vector<FeedbackRecord> records;
  for (int i = 0; i < 6; ++i) {
    records.push_back(rec("fb" + std::to_string(i), i % 3 == 0 ? Polarity::correct : Polarity::wrong));
  }
  auto r = build_dpo_cw(ctx(), records, 100);
  EXPECT_EQ(r.pairs.size(), 8u);
  for (const auto& p : r.pairs) {
    auto find = [&](const std::string& t) {
      return std::find_if(records.begin(), records.end(),
                          [&](const auto& x) { return x.text == t; })->polarity;
    };
    EXPECT_EQ(find(p.chosen), Polarity::correct);
    EXPECT_EQ(find(p.rejected), Polarity::wrong);
  }
}

TEST(DpoCw, GroupsByTriplet) {
  std::vector<FeedbackRecord> records = {rec("c1", Polarity::correct), rec("w1", Polarity::wrong)};
  records.push_back({"sum", kBadEdit, "c2", Polarity::correct, FeedbackSource::annotated, {}});
  auto r = build_dpo_cw_all(records, index());
  EXPECT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.skipped.size(), 1u);
  EXPECT_EQ(r.skipped[0].context.wrong_code, kBadEdit);
}

Ranking ranking_of(std::vector<double> scores) {
  std::vector<RankedFeedback> items;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    items.push_back({"fb" + std::to_string(i), scores[i], i});
  }
  return rank_feedback(ctx(), items);
}

TEST(RankFeedback, DescendingWithStableTies) {
  auto r = ranking_of({0.2, 1.0, 0.5});
  EXPECT_EQ(r.items[0].score, 1.0);
  EXPECT_EQ(r.items[1].score, 0.5);
  EXPECT_EQ(r.items[2].score, 0.2);
  EXPECT_FALSE(r.all_tied);
  auto z = ranking_of({0, 0, 0});
  EXPECT_TRUE(z.all_tied);
  auto t = ranking_of({0.5, 0.8, 0.8, 0.1});
  EXPECT_EQ(t.items[0].sample_index, 1u);
  EXPECT_EQ(t.items[1].sample_index, 2u);
}

TEST(DpoCoffeeEval, TopVersusBottom) {
  auto r = build_dpo_coffeeeval(ranking_of({0.9, 0.5, 0.1}));
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.pairs[0].chosen, "fb0");
  EXPECT_EQ(r.pairs[0].rejected, "fb2");
  EXPECT_NEAR(*r.pairs[0].margin, 0.8, 1e-15);
  EXPECT_EQ(r.pairs[0].strategy, Strategy::coffee_eval);

  EXPECT_TRUE(build_dpo_coffeeeval(ranking_of({0.5, 0.5, 0.5})).pairs.empty());
  auto m = build_dpo_coffeeeval(ranking_of({1.0, 0.0}));
  EXPECT_EQ(*m.pairs.at(0).margin, 1.0);
}

TEST(RejectionSampling, TopOneWithGate) {
  auto r = build_rejection_sampling(ranking_of({0.3, 0.8, 0.1}));
  ASSERT_TRUE(r);
  EXPECT_EQ(r->feedback, "fb1");
  EXPECT_EQ(r->score, 0.8);
  EXPECT_FALSE(build_rejection_sampling(ranking_of({0.0, 0.0})));
  auto tie = build_rejection_sampling(ranking_of({0.4, 0.9, 0.9}));
  EXPECT_EQ(tie->feedback, "fb1");
  EXPECT_THROW(build_rejection_sampling(Ranking{}), Error);
}

// Feedback pool mixing correct and wrong polarity markers.
std::vector<std::string> polarity_pool() {
  std::vector<std::string> pool;
  for (int i = 0; i < 8; ++i) {
    Polarity p = i % 2 ? Polarity::wrong : Polarity::correct;
    pool.push_back(std::string(polarity_marker(p)) + " hint " + std::to_string(i));
  }
  return pool;
}

TEST(SampleAndRank, ReproducibleAndCorrectlyOrdered) {
  Sandbox sandbox(fast_config());
  auto f = std::make_shared<EditFixtures>();
  f->add({"sum", kWrong, kRight, kBadEdit});
  FaithfulMockEditor editor(f);
  SeededFeedbackMock feedback(polarity_pool());
  auto a = sample_and_rank(sum_problem(), kWrong, feedback, editor, sandbox, 10, 42);
  auto b = sample_and_rank(sum_problem(), kWrong, feedback, editor, sandbox, 10, 42);
  ASSERT_EQ(a.items.size(), 10u);
  for (std::size_t i = 0; i < a.items.size(); ++i) {
    EXPECT_EQ(a.items[i].text, b.items[i].text);
    EXPECT_EQ(a.items[i].score, b.items[i].score);
    EXPECT_EQ(a.items[i].sample_index, b.items[i].sample_index);
    double expected =
        find_polarity_marker(a.items[i].text) == Polarity::correct ? 1.0 : 0.25;
    EXPECT_EQ(a.items[i].score, expected);
    if (i > 0) EXPECT_GE(a.items[i - 1].score, a.items[i].score);
  }
}

TEST(SampleAndRank, EditorFailureCarriesPartialResults) {
  Sandbox sandbox(fast_config());
  struct Flaky : Editor {
    std::atomic<int> calls{0};
    std::string edit(const EditRequest&) override {
      if (++calls > 2) throw ClientError(ClientErrorKind::transport, "down", 4);
      return kRight;
    }
    std::string name() const override { return "flaky"; }
  } editor;
  SeededFeedbackMock feedback(polarity_pool());
  try {
    sample_and_rank(sum_problem(), kWrong, feedback, editor, sandbox, 6, 1);
    FAIL();
  } catch (const RankingError& e) {
    EXPECT_EQ(e.code(), ErrorCode::upstream_model_error);
    EXPECT_EQ(e.partial().size(), 2u);
  }
}

EditorEntry entry(Polarity p) {
  return {sum_problem(), kWrong, "fb", p == Polarity::correct ? kRight : kBadEdit, p};
}

TEST(EditorCorpus, PhaseOneKeywords) {
  auto recs = emit_editor_corpus({entry(Polarity::correct)}, {}, 1);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_TRUE(recs[0].target.starts_with("[Correct]"));
  EXPECT_EQ(recs[0].target, "[Correct]\n" + kRight);
  EXPECT_EQ(recs[0].keyword, Polarity::correct);
  EXPECT_NE(recs[0].prompt.find("Feedback:fb"), std::string::npos);
}

TEST(EditorCorpus, PhaseTwoIsBare) {
  auto recs = emit_editor_corpus({}, {entry(Polarity::wrong)}, 2);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].target, kBadEdit);
  EXPECT_FALSE(recs[0].keyword.has_value());
}

TEST(EditorCorpus, MixedBatchMatchesProvenance) {
  auto c = entry(Polarity::correct), w = entry(Polarity::wrong);
  for (int phase : {1, 2}) {
    auto recs = emit_editor_corpus({c, c}, {w, w}, phase);
    ASSERT_EQ(recs.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
      Polarity expected = i < 2 ? Polarity::correct : Polarity::wrong;
      if (phase == 1) {
        EXPECT_EQ(recs[i].keyword, expected);
        EXPECT_TRUE(recs[i].target.starts_with(std::string(keyword_text(expected)) + "\n"));
      } else {
        EXPECT_FALSE(recs[i].target.starts_with("[Correct]"));
        EXPECT_FALSE(recs[i].target.starts_with("[Wrong]"));
      }
    }
  }
}

TEST(EditorCorpus, MismatchAsserts) {
  EXPECT_THROW(emit_editor_corpus({entry(Polarity::wrong)}, {}, 1), Error);
  EXPECT_THROW(emit_editor_corpus({}, {entry(Polarity::correct)}, 2), Error);
  EXPECT_THROW(emit_editor_corpus({}, {}, 3), Error);
  auto sneaky = entry(Polarity::correct);
  sneaky.target_code = "[Wrong]\nprint(0)";
  EXPECT_THROW(emit_editor_corpus({sneaky}, {}, 2), Error);
}

}  // namespace
}  // namespace coffee
