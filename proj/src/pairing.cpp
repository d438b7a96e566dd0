#include "coffee/pairing.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <thread>

#include "coffee/text.hpp"

namespace coffee {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string fenced(std::string_view code) {
  std::string out = "```python\n";
  out += code;
  if (!out.ends_with('\n')) out += '\n';
  out += "```";
  return out;
}

std::string target_instances(const Problem& problem, std::string_view wrong_code,
                             std::string_view correct_code) {
  return "Problem Description:\n" + problem.description + "\n\nWrong code:\n" +
         fenced(wrong_code) + "\n\nCorrect code:\n" + fenced(correct_code);
}

}  // namespace

const Problem& find_problem(const ProblemIndex& problems, std::string_view problem_id) {
  auto it = problems.find(problem_id);
  if (it == problems.end()) {
    throw Error(ErrorCode::not_found, "unknown problem_id " + std::string(problem_id));
  }
  return it->second;
}

std::string_view to_string(FeedbackSource s) {
  return s == FeedbackSource::annotated ? "annotated" : "sampled";
}

std::optional<FeedbackSource> parse_feedback_source(std::string_view name) {
  if (name == "annotated") return FeedbackSource::annotated;
  if (name == "sampled") return FeedbackSource::sampled;
  return std::nullopt;
}

std::vector<AnnotationJob> build_feedback_annotation_jobs(
    const std::vector<EditTriplet>& triplets, const std::vector<WrongPair>& wrong_pairs,
    const ProblemIndex& problems, const AnnotationDemo& demo, const GenerationParams& params) {
  const auto& correct_tmpl = PromptTemplate::builtin(TemplateId::correct_feedback);
  const auto& wrong_tmpl = PromptTemplate::builtin(TemplateId::wrong_feedback);
  std::vector<AnnotationJob> jobs;
  for (const auto& t : triplets) {
    const Problem& p = find_problem(problems, t.problem_id);
    AnnotationJob job{Polarity::correct, t.problem_id, t.wrong_code, t.correct_code, "", params};
    job.prompt = correct_tmpl.render(
        {{"example_instances_of_task1", demo.example_instances},
         {"output_format_of_task1", demo.output_format},
         {"analysis_of_task1", demo.analysis},
         {"example_instances_of_target_task", target_instances(p, t.wrong_code, t.correct_code)},
         {"output_format_of_target_task", p.output_format}});
    jobs.push_back(std::move(job));
  }
  for (const auto& w : wrong_pairs) {
    const Problem& p = find_problem(problems, w.problem_id);
    AnnotationJob job{Polarity::wrong, w.problem_id, w.earlier_wrong, w.later_wrong, "", params};
    job.prompt = wrong_tmpl.render({{"description", p.description},
                                    {"wrong_code", w.earlier_wrong},
                                    {"next_wrong_code", w.later_wrong},
                                    {"feedback", demo.feedback}});
    jobs.push_back(std::move(job));
  }
  return jobs;
}

bool is_no_error_reply(std::string_view reply) {
  std::string l = lower(reply);
  return trim(l).empty() || l.find("no errors found") != std::string::npos;
}

AnnotationRun run_annotation_jobs(const std::vector<AnnotationJob>& jobs,
                                  TextGenerator& annotator) {
  AnnotationRun run;
  for (const auto& job : jobs) {
    GenerationParams p = job.params;
    p.n_samples = 1;
    auto replies = annotator.complete(job.prompt, p);
    const std::string& reply = replies.at(0);
    if (is_no_error_reply(reply)) {
      ++run.discarded;
      continue;
    }
    run.records.push_back(
        {job.problem_id, job.wrong_code, reply, job.polarity, FeedbackSource::annotated, {}});
  }
  return run;
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::ts: return "TS";
    case Strategy::cw: return "CW";
    case Strategy::coffee_eval: return "CoffeeEval";
  }
  return "TS";
}

std::optional<Strategy> parse_strategy(std::string_view name) {
  for (auto s : {Strategy::ts, Strategy::cw, Strategy::coffee_eval}) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

PairContext make_context(const Problem& problem, std::string_view wrong_code) {
  return {problem.problem_id, problem.description, std::string(wrong_code)};
}

PairingResult build_dpo_ts(const std::vector<TsItem>& items, bool validated) {
  PairingResult out;
  for (const auto& item : items) {
    if (item.teacher.empty() || item.student.empty()) {
      out.skipped.push_back({item.context, "empty"});
      continue;
    }
    if (item.teacher == item.student) {
      out.skipped.push_back({item.context, "identical"});
      continue;
    }
    std::optional<double> margin;
    if (item.teacher_score && item.student_score) {
      margin = *item.teacher_score - *item.student_score;
    }
    if (validated) {
      if (!margin) {
        out.skipped.push_back({item.context, "unscored"});
        continue;
      }
      if (*margin <= 0.0) {
        out.skipped.push_back({item.context, "teacher not better"});
        continue;
      }
    }
    out.pairs.push_back({item.context, item.teacher, item.student, Strategy::ts, margin});
  }
  return out;
}

PairingResult build_dpo_cw(const PairContext& context, const std::vector<FeedbackRecord>& records,
                           std::size_t cap) {
  PairingResult out;
  std::vector<const FeedbackRecord*> correct, wrong;
  for (const auto& r : records) {
    (r.polarity == Polarity::correct ? correct : wrong).push_back(&r);
  }
  if (correct.empty()) {
    out.skipped.push_back({context, "missing correct feedback"});
    return out;
  }
  if (wrong.empty()) {
    out.skipped.push_back({context, "missing wrong feedback"});
    return out;
  }
  for (const auto* c : correct) {
    for (const auto* w : wrong) {
      if (out.pairs.size() >= cap) return out;
      if (c->text == w->text) continue;
      std::optional<double> margin;
      if (c->score && w->score) margin = *c->score - *w->score;
      out.pairs.push_back({context, c->text, w->text, Strategy::cw, margin});
    }
  }
  if (out.pairs.empty()) out.skipped.push_back({context, "identical"});
  return out;
}

PairingResult build_dpo_cw_all(const std::vector<FeedbackRecord>& records,
                               const ProblemIndex& problems, std::size_t cap) {
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<FeedbackRecord>> groups;
  for (const auto& r : records) {
    auto key = std::pair{r.problem_id, r.wrong_code};
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(r);
  }
  PairingResult out;
  for (const auto& key : order) {
    auto ctx = make_context(find_problem(problems, key.first), key.second);
    auto part = build_dpo_cw(ctx, groups[key], cap);
    for (auto& p : part.pairs) out.pairs.push_back(std::move(p));
    for (auto& s : part.skipped) out.skipped.push_back(std::move(s));
  }
  return out;
}

Ranking rank_feedback(const PairContext& context, std::vector<RankedFeedback> scored) {
  Ranking r;
  r.context = context;
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.sample_index < b.sample_index;
  });
  r.all_tied = !scored.empty() && scored.front().score == scored.back().score;
  r.items = std::move(scored);
  return r;
}

Ranking sample_and_rank(const Problem& problem, std::string_view wrong_code,
                        FeedbackModel& feedback, Editor& editor, const Sandbox& sandbox,
                        std::size_t n, std::optional<std::uint64_t> seed) {
  if (n == 0) throw Error(ErrorCode::invalid_request, "n must be >= 1");
  auto texts = feedback.generate(problem, wrong_code, n, seed);
  if (texts.size() != n) {
    throw Error(ErrorCode::upstream_model_error,
                "feedback model returned " + std::to_string(texts.size()) + " of " +
                    std::to_string(n) + " samples");
  }

  std::vector<std::optional<double>> scores(n);
  std::optional<Error> failure;
  std::mutex failure_mu;
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        scores[i] = coffee_eval(problem, wrong_code, texts[i], editor, sandbox).score;
      } catch (const Error& e) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure.emplace(e.code(), e.what());
        next = n;
      }
    }
  };
  std::size_t workers = std::max<std::size_t>(1, std::min(sandbox.config().workers, n));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
  }

  std::vector<RankedFeedback> scored;
  for (std::size_t i = 0; i < n; ++i) {
    if (scores[i]) scored.push_back({texts[i], *scores[i], i});
  }
  if (failure) throw RankingError(*failure, std::move(scored));
  return rank_feedback(make_context(problem, wrong_code), std::move(scored));
}

PairingResult build_dpo_coffeeeval(const Ranking& ranking) {
  PairingResult out;
  if (ranking.items.size() < 2) {
    out.skipped.push_back({ranking.context, "fewer than two samples"});
    return out;
  }
  const auto& top = ranking.items.front();
  const auto& bottom = ranking.items.back();
  double margin = top.score - bottom.score;
  if (!(margin > 0.0)) {
    out.skipped.push_back({ranking.context, "all tied"});
    return out;
  }
  out.pairs.push_back({ranking.context, top.text, bottom.text, Strategy::coffee_eval, margin});
  return out;
}

std::optional<SftRecord> build_rejection_sampling(const Ranking& ranking, double min_score) {
  if (ranking.items.empty()) throw Error(ErrorCode::invalid_request, "empty ranking");
  const auto& top = ranking.items.front();
  if (!(top.score > min_score)) return std::nullopt;
  return SftRecord{ranking.context, top.text, top.score};
}

std::string_view keyword_text(Polarity p) {
  return p == Polarity::correct ? "[Correct]" : "[Wrong]";
}

std::vector<EditorTrainRecord> emit_editor_corpus(const std::vector<EditorEntry>& d_correct,
                                                  const std::vector<EditorEntry>& d_wrong,
                                                  int phase) {
  if (phase != 1 && phase != 2) {
    throw Error(ErrorCode::invalid_request, "phase must be 1 or 2");
  }
  const auto& tmpl = PromptTemplate::builtin(TemplateId::editor);
  std::vector<EditorTrainRecord> out;
  auto emit = [&](const std::vector<EditorEntry>& entries, Polarity expected) {
    for (const auto& e : entries) {
      if (e.polarity != expected) {
        throw Error(ErrorCode::invalid_request,
                    "polarity/keyword mismatch: " + std::string(to_string(e.polarity)) +
                        " entry in the " + std::string(to_string(expected)) + " set");
      }
      EditorTrainRecord rec;
      rec.prompt = tmpl.render(editor_bindings(e.problem, e.wrong_code, e.feedback));
      rec.phase = phase;
      if (phase == 1) {
        rec.keyword = e.polarity;
        rec.target = std::string(keyword_text(e.polarity)) + "\n" + e.target_code;
      } else {
        rec.target = e.target_code;
        if (rec.target.starts_with(keyword_text(Polarity::correct)) ||
            rec.target.starts_with(keyword_text(Polarity::wrong))) {
          throw Error(ErrorCode::invalid_request, "phase 2 target starts with a keyword");
        }
      }
      out.push_back(std::move(rec));
    }
  };
  emit(d_correct, Polarity::correct);
  emit(d_wrong, Polarity::wrong);
  return out;
}

}  // namespace coffee
