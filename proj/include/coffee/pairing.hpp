#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coffee/clients.hpp"
#include "coffee/corpus.hpp"
#include "coffee/reward.hpp"

namespace coffee {

using ProblemIndex = std::map<std::string, Problem, std::less<>>;

// Throws Error(not_found).
const Problem& find_problem(const ProblemIndex& problems, std::string_view problem_id);

enum class FeedbackSource { annotated, sampled };

std::string_view to_string(FeedbackSource s);
std::optional<FeedbackSource> parse_feedback_source(std::string_view name);

struct FeedbackRecord {
  std::string problem_id;
  std::string wrong_code;
  std::string text;
  Polarity polarity = Polarity::correct;
  FeedbackSource source = FeedbackSource::annotated;
  std::optional<double> score;
};

// ---------------------------------------------------------------------------
// Annotation jobs

// Few-shot slots of the annotation prompts. Empty by default.
struct AnnotationDemo {
  std::string example_instances;
  std::string output_format;
  std::string analysis;
  std::string feedback;
};

struct AnnotationJob {
  Polarity polarity = Polarity::correct;
  std::string problem_id;
  std::string wrong_code;
  std::string target_code;  // y* for correct jobs, the later wrong code otherwise
  std::string prompt;
  GenerationParams params;
};

// One correct-feedback job per triplet, then one wrong-feedback job per
// consecutive wrong pair.
std::vector<AnnotationJob> build_feedback_annotation_jobs(
    const std::vector<EditTriplet>& triplets, const std::vector<WrongPair>& wrong_pairs,
    const ProblemIndex& problems, const AnnotationDemo& demo = {},
    const GenerationParams& params = {});

// True for an annotator reply saying it found nothing to fix.
bool is_no_error_reply(std::string_view reply);

struct AnnotationRun {
  std::vector<FeedbackRecord> records;  // job order
  std::size_t discarded = 0;
};

AnnotationRun run_annotation_jobs(const std::vector<AnnotationJob>& jobs,
                                  TextGenerator& annotator);

// ---------------------------------------------------------------------------
// Preference pairs

enum class Strategy { ts, cw, coffee_eval };

std::string_view to_string(Strategy s);
std::optional<Strategy> parse_strategy(std::string_view name);

struct PairContext {
  std::string problem_id;
  std::string description;
  std::string wrong_code;
};

PairContext make_context(const Problem& problem, std::string_view wrong_code);

struct PreferencePair {
  PairContext context;
  std::string chosen;
  std::string rejected;
  Strategy strategy = Strategy::ts;
  std::optional<double> margin;
};

struct SkippedPair {
  PairContext context;
  std::string reason;
};

struct PairingResult {
  std::vector<PreferencePair> pairs;
  std::vector<SkippedPair> skipped;
};

struct TsItem {
  PairContext context;
  std::string teacher;
  std::string student;
  std::optional<double> teacher_score;
  std::optional<double> student_score;
};

// validated: also require teacher_score > student_score.
PairingResult build_dpo_ts(const std::vector<TsItem>& items, bool validated = false);

// All records must share one (problem_id, wrong_code). Enumerates
// (correct, wrong) combinations in record order up to `cap` pairs.
PairingResult build_dpo_cw(const PairContext& context, const std::vector<FeedbackRecord>& records,
                           std::size_t cap = 1);

// Groups records by (problem_id, wrong_code) in first-seen order.
PairingResult build_dpo_cw_all(const std::vector<FeedbackRecord>& records,
                               const ProblemIndex& problems, std::size_t cap = 1);

struct RankedFeedback {
  std::string text;
  double score = 0.0;
  std::size_t sample_index = 0;
};

struct Ranking {
  PairContext context;
  std::vector<RankedFeedback> items;  // descending score, ties by sample index
  bool all_tied = false;
};

// Carries the samples scored before a failure.
class RankingError : public Error {
 public:
  RankingError(const Error& cause, std::vector<RankedFeedback> partial)
      : Error(cause.code(), cause.what()), partial_(std::move(partial)) {}
  const std::vector<RankedFeedback>& partial() const { return partial_; }

 private:
  std::vector<RankedFeedback> partial_;
};

Ranking rank_feedback(const PairContext& context, std::vector<RankedFeedback> scored);

// Draws n feedback samples and scores each with coffee_eval.
Ranking sample_and_rank(const Problem& problem, std::string_view wrong_code,
                        FeedbackModel& feedback, Editor& editor, const Sandbox& sandbox,
                        std::size_t n = 10, std::optional<std::uint64_t> seed = std::nullopt);

// Top-1 against bottom-1; nothing unless the margin is positive.
PairingResult build_dpo_coffeeeval(const Ranking& ranking);

struct SftRecord {
  PairContext context;
  std::string feedback;
  double score = 0.0;
};

// Top-1 feedback when its score is strictly above min_score.
// Throws Error(invalid_request) for an empty ranking.
std::optional<SftRecord> build_rejection_sampling(const Ranking& ranking, double min_score = 0.0);

// ---------------------------------------------------------------------------
// Editor corpus

struct EditorEntry {
  Problem problem;
  std::string wrong_code;
  std::string feedback;
  std::string target_code;  // y* for D_correct, the wrong edit for D_wrong
  Polarity polarity = Polarity::correct;
};

struct EditorTrainRecord {
  std::string prompt;
  std::string target;
  int phase = 1;
  std::optional<Polarity> keyword;
};

std::string_view keyword_text(Polarity p);  // "[Correct]" / "[Wrong]"

// Phase 1 prefixes targets with "<keyword>\n"; phase 2 leaves them bare.
// Throws Error(invalid_request) on an entry filed under the wrong polarity,
// a phase other than 1 or 2, or a target that breaks the keyword contract.
std::vector<EditorTrainRecord> emit_editor_corpus(const std::vector<EditorEntry>& d_correct,
                                                  const std::vector<EditorEntry>& d_wrong,
                                                  int phase);

}  // namespace coffee
