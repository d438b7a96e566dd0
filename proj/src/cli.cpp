#include "coffee/cli.hpp"

#include <algorithm>
#include <csignal>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "coffee/config.hpp"
#include "coffee/io.hpp"
#include "coffee/service.hpp"

namespace coffee {
namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string corpus;
  std::string output;
};

// Everything a subcommand may need, built lazily from the config.
class Runtime {
 public:
  explicit Runtime(const Common& common) {
    if (!common.config_path.empty()) config_ = load_config(common.config_path);
    apply_env_overrides(config_);
    if (common.seed) config_.seed = *common.seed;
    if (!common.corpus.empty()) config_.paths.corpus = common.corpus;
    validate(config_);
  }

  const EnvConfig& config() const { return config_; }
  std::filesystem::path path(const std::filesystem::path& p) const { return config_.paths.resolve(p); }

  std::shared_ptr<Sandbox> sandbox() {
    if (!sandbox_) sandbox_ = std::make_shared<Sandbox>(config_.sandbox);
    return sandbox_;
  }

  const ProblemIndex& problems() {
    if (!problems_) problems_ = load_problems(path(config_.paths.problems));
    return *problems_;
  }

  std::shared_ptr<const EditFixtures> fixtures() {
    if (!fixtures_) {
      auto p = path(config_.paths.edit_fixtures);
      fixtures_ = std::make_shared<EditFixtures>(std::filesystem::exists(p) ? EditFixtures::load_jsonl(p)
                                                                            : EditFixtures());
    }
    return fixtures_;
  }

  std::shared_ptr<Editor> editor(const std::string& name) {
    std::string n = name.empty() ? config_.default_editor : name;
    if (n == "mock-faithful") return std::make_shared<FaithfulMockEditor>(fixtures());
    if (n == "mock-skewed") return std::make_shared<SkewedMockEditor>(fixtures());
    if (n == "model") {
      return std::make_shared<ModelEditor>(make_generator(config_, ModelRole::editor),
                                           GenerationParams{});
    }
    throw Error(ErrorCode::invalid_request, "unknown editor " + n);
  }

  std::shared_ptr<FeedbackModel> feedback_model() {
    GenerationParams params;
    params.seed = config_.seed;
    return std::make_shared<ModelFeedback>(make_generator(config_, ModelRole::feedback), params);
  }

  std::shared_ptr<RewardEnv> reward_env() {
    auto env = std::make_shared<RewardEnv>(sandbox());
    for (const auto& [_, p] : problems()) env->add_problem(p);
    for (const char* name : {"mock-faithful", "mock-skewed", "model"}) env->add_editor(name, editor(name));
    env->set_default_editor(config_.default_editor);
    if (!config_.paths.audit_log.empty()) env->open_audit_log(path(config_.paths.audit_log));
    return env;
  }

  std::vector<EditTrace> traces() {
    std::ifstream in(path(config_.paths.traces));
    if (!in) throw Error(ErrorCode::not_found, "cannot open " + path(config_.paths.traces).string());
    return parse_corpus(in).traces;
  }

 private:
  EnvConfig config_;
  std::shared_ptr<Sandbox> sandbox_;
  std::optional<ProblemIndex> problems_;
  std::shared_ptr<const EditFixtures> fixtures_;
};

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::not_found, "cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary | std::ios::trunc);
      if (!file_) throw Error(ErrorCode::invalid_request, "cannot write " + path);
      stream_ = &file_;
    }
  }
  void json_doc(const json& j) { *stream_ << j.dump(2) << '\n'; }
  void jsonl(const std::vector<json>& lines) { *stream_ << to_jsonl(lines); }

 private:
  std::ofstream file_;
  std::ostream* stream_;
};

json stats_row(const std::string& name, const PassRatioStats& s, bool valid) {
  json row = to_json(s);
  row["name"] = name;
  row["valid"] = valid;
  return row;
}

std::vector<Document> read_documents(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(ErrorCode::not_found, "not a directory: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Document> docs;
  for (const auto& f : files) {
    docs.push_back({std::filesystem::relative(f, dir).string(), read_file(f)});
  }
  return docs;
}

// ---------------------------------------------------------------------------

void cmd_ingest(Runtime& rt, const std::string& traces_path, const std::string& triplets_out,
                Output& out) {
  std::filesystem::path p = traces_path.empty() ? rt.path(rt.config().paths.traces) : std::filesystem::path(traces_path);
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::not_found, "cannot open " + p.string());
  auto parsed = parse_corpus(in);
  auto dedup = dedup_identical_correct(parsed.traces);
  std::vector<json> triplets;
  std::size_t wrong_pairs = 0;
  for (const auto& t : dedup.kept) {
    for (const auto& tr : build_triplets(t)) {
      triplets.push_back({{"problem_id", tr.problem_id},
                          {"wrong_code", tr.wrong_code},
                          {"correct_code", tr.correct_code},
                          {"wrong_index", tr.wrong_index}});
    }
    wrong_pairs += consecutive_wrong_pairs(t).size();
  }
  if (!triplets_out.empty()) write_jsonl(triplets_out, triplets);
  json issues = json::array();
  for (const auto& i : parsed.issues) {
    issues.push_back({{"line", i.line}, {"kind", to_string(i.kind)}, {"message", i.message}});
  }
  out.json_doc({{"traces", parsed.traces.size()},
                {"kept", dedup.kept.size()},
                {"dedup_dropped", dedup.dropped},
                {"triplets", triplets.size()},
                {"wrong_pairs", wrong_pairs},
                {"issues", issues}});
}

void cmd_testgen(Runtime& rt, const std::vector<std::string>& only, Output& out) {
  auto annotator = make_generator(rt.config(), ModelRole::annotator);
  TestgenConfig cfg = rt.config().testgen;
  cfg.params.seed = rt.config().seed;
  std::vector<json> lines;
  for (const auto& [id, problem] : rt.problems()) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    if (problem.reference_solution.empty()) {
      throw Error(ErrorCode::invalid_request, "problem " + id + " has no reference_solution");
    }
    auto s = synthesize_suite(problem, problem.reference_solution, *annotator, cfg, *rt.sandbox());
    json j = to_json(s);
    j["problem_id"] = id;
    lines.push_back(std::move(j));
  }
  out.jsonl(lines);
}

void cmd_audit(Runtime& rt, const std::string& suite_path, const std::string& wrong_path,
               Output& out) {
  std::map<std::string, TestSuite> suites;
  if (suite_path.empty()) {
    for (const auto& [id, p] : rt.problems()) suites[id] = p.suite;
  } else {
    for (const auto& j : read_jsonl(suite_path)) {
      std::string id = get_string_or(j, "problem_id", get_string_or(j, "suite_id", ""));
      suites[id] = suite_from_json(j);
    }
  }
  std::map<std::string, std::vector<std::string>> wrong;
  if (wrong_path.empty()) {
    for (const auto& t : rt.traces()) {
      for (std::size_t i = 0; i + 1 < t.submissions.size(); ++i) {
        auto& codes = wrong[t.problem_id];
        if (std::find(codes.begin(), codes.end(), t.submissions[i].code) == codes.end()) {
          codes.push_back(t.submissions[i].code);
        }
      }
    }
  } else {
    for (const auto& j : read_jsonl(wrong_path)) {
      wrong[get_string(j, "problem_id")].push_back(get_string(j, "code"));
    }
  }

  json rows = json::array();
  std::vector<double> all;
  bool all_valid = true;
  for (const auto& [id, codes] : wrong) {
    auto it = suites.find(id);
    if (it == suites.end()) throw Error(ErrorCode::not_found, "no suite for problem " + id);
    auto report = audit_suite(it->second, codes, *rt.sandbox());
    rows.push_back(stats_row(id, report.stats, report.valid));
    all.insert(all.end(), report.ratios.begin(), report.ratios.end());
    all_valid = all_valid && report.valid;
  }
  if (all.empty()) throw Error(ErrorCode::invalid_request, "no wrong solutions to audit");
  out.json_doc({{"columns", {"mean", "std", "min", "q25", "median", "q75", "max"}},
                {"rows", rows},
                {"overall", stats_row("all", describe(all), all_valid)},
                {"ratios", all},
                {"valid", all_valid}});
}

std::vector<PairContext> contexts_from(Runtime& rt, const std::string& input) {
  std::vector<PairContext> ctxs;
  if (!input.empty()) {
    for (const auto& j : read_jsonl(input)) {
      ctxs.push_back(make_context(find_problem(rt.problems(), get_string(j, "problem_id")),
                                  get_string(j, "wrong_code")));
    }
    return ctxs;
  }
  for (const auto& t : dedup_identical_correct(rt.traces()).kept) {
    for (const auto& tr : build_triplets(t)) {
      ctxs.push_back(make_context(find_problem(rt.problems(), tr.problem_id), tr.wrong_code));
    }
  }
  return ctxs;
}

void cmd_pairs(Runtime& rt, const std::string& strategy, const std::string& input, int phase,
               const std::string& editor_name, Output& out, std::ostream& err) {
  const auto& cfg = rt.config();
  std::vector<json> lines;
  json summary = {{"strategy", strategy}};
  auto emit = [&](const PairingResult& r) {
    for (const auto& p : r.pairs) lines.push_back(to_json(p));
    json skipped = json::array();
    for (const auto& s : r.skipped) skipped.push_back(to_json(s));
    summary["pairs"] = r.pairs.size();
    summary["skipped"] = skipped;
  };

  if (strategy == "CW") {
    auto records = load_feedback(input.empty() ? rt.path(cfg.paths.feedback) : std::filesystem::path(input));
    emit(build_dpo_cw_all(records, rt.problems(), cfg.pairing.cw_cap));
  } else if (strategy == "TS") {
    if (input.empty()) throw Error(ErrorCode::invalid_request, "TS needs --input");
    std::vector<TsItem> items;
    for (const auto& j : read_jsonl(input)) {
      TsItem item{make_context(find_problem(rt.problems(), get_string(j, "problem_id")),
                               get_string(j, "wrong_code")),
                  get_string(j, "teacher"), get_string(j, "student"), {}, {}};
      if (j.contains("teacher_score")) item.teacher_score = j["teacher_score"].get<double>();
      if (j.contains("student_score")) item.student_score = j["student_score"].get<double>();
      items.push_back(std::move(item));
    }
    emit(build_dpo_ts(items, cfg.pairing.ts_validated));
  } else if (strategy == "CoffeeEval" || strategy == "RS") {
    auto feedback = rt.feedback_model();
    auto editor = rt.editor(editor_name);
    PairingResult all;
    std::size_t sft = 0;
    auto ctxs = contexts_from(rt, input);
    for (std::size_t i = 0; i < ctxs.size(); ++i) {
      const Problem& p = find_problem(rt.problems(), ctxs[i].problem_id);
      auto ranking = sample_and_rank(p, ctxs[i].wrong_code, *feedback, *editor, *rt.sandbox(),
                                     cfg.pairing.n_samples, cfg.seed + i);
      if (strategy == "RS") {
        if (auto rec = build_rejection_sampling(ranking, cfg.pairing.rs_min_score)) {
          lines.push_back(to_json(*rec));
          ++sft;
        } else {
          all.skipped.push_back({ranking.context, "below min_score"});
        }
      } else {
        auto r = build_dpo_coffeeeval(ranking);
        for (auto& x : r.pairs) all.pairs.push_back(std::move(x));
        for (auto& x : r.skipped) all.skipped.push_back(std::move(x));
      }
    }
    if (strategy == "RS") {
      json skipped = json::array();
      for (const auto& s : all.skipped) skipped.push_back(to_json(s));
      summary["records"] = sft;
      summary["skipped"] = skipped;
    } else {
      emit(all);
    }
  } else if (strategy == "editor-corpus") {
    auto records = load_feedback(input.empty() ? rt.path(cfg.paths.feedback) : std::filesystem::path(input));
    auto fixtures = rt.fixtures();
    std::vector<EditorEntry> d_correct, d_wrong;
    for (const auto& r : records) {
      const Problem& p = find_problem(rt.problems(), r.problem_id);
      const auto& f = fixtures->lookup(r.problem_id, r.wrong_code);
      EditorEntry e{p, r.wrong_code, r.text,
                    r.polarity == Polarity::correct ? f.correct_code : f.wrong_edit, r.polarity};
      (r.polarity == Polarity::correct ? d_correct : d_wrong).push_back(std::move(e));
    }
    for (const auto& rec : emit_editor_corpus(d_correct, d_wrong, phase)) {
      lines.push_back(to_json(rec));
    }
    summary["records"] = lines.size();
    summary["phase"] = phase;
  } else {
    throw Error(ErrorCode::invalid_request,
                "unknown strategy " + strategy + " (TS, CW, CoffeeEval, RS, editor-corpus)");
  }
  out.jsonl(lines);
  err << summary.dump() << '\n';
}

void cmd_score(Runtime& rt, const std::string& problem_id, const std::string& wrong_file,
               const std::string& feedback, const std::string& feedback_file,
               const std::string& editor, Output& out) {
  auto env = rt.reward_env();
  RewardRequest req;
  req.problem_id = problem_id;
  req.wrong_code = read_file(wrong_file);
  req.feedback = feedback_file.empty() ? feedback : read_file(feedback_file);
  req.editor = editor;
  out.json_doc(to_json(env->score(req), false));
}

void cmd_evaluate(Runtime& rt, const std::string& editor_name, std::size_t n, bool generate,
                  Output& out) {
  if (n == 0) throw Error(ErrorCode::invalid_request, "--n must be >= 1");
  auto editor = rt.editor(editor_name);
  auto sandbox = rt.sandbox();
  std::map<std::string, CorrectCount> per_problem;
  json result = {{"editor", editor_name.empty() ? rt.config().default_editor : editor_name},
                 {"n", n}};

  if (generate) {
    auto feedback = rt.feedback_model();
    auto ctxs = contexts_from(rt, "");
    for (std::size_t i = 0; i < ctxs.size(); ++i) {
      const Problem& p = find_problem(rt.problems(), ctxs[i].problem_id);
      auto texts = feedback->generate(p, ctxs[i].wrong_code, n, rt.config().seed + i);
      auto& c = per_problem[p.problem_id];
      for (const auto& t : texts) {
        c.correct += coffee_eval(p, ctxs[i].wrong_code, t, *editor, *sandbox).pass_all;
        ++c.samples;
      }
    }
    result["mode"] = "generated";
  } else {
    auto records = load_feedback(rt.path(rt.config().paths.feedback));
    std::vector<LabeledScore> scored;
    for (const auto& r : records) {
      const Problem& p = find_problem(rt.problems(), r.problem_id);
      auto& c = per_problem[p.problem_id];
      double total = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        auto resp = coffee_eval(p, r.wrong_code, r.text, *editor, *sandbox);
        c.correct += resp.pass_all;
        ++c.samples;
        total += resp.score;
      }
      scored.push_back({total / static_cast<double>(n), r.polarity == Polarity::correct ? 1 : 0});
    }
    result["mode"] = "labeled";
    result["items"] = scored.size();
    result["metrics"] = to_json(evaluate_metrics(scored));
  }

  std::vector<CorrectCount> counts;
  json problems = json::array();
  for (const auto& [id, c] : per_problem) {
    counts.push_back(c);
    problems.push_back({{"problem_id", id}, {"correct", c.correct}, {"samples", c.samples}});
  }
  result["problems"] = problems;
  result["pass_at_1"] = pass_at_1(counts);
  out.json_doc(result);
}

void cmd_overlap(const std::string& candidate, const std::string& reference,
                 const std::string& policy, Output& out) {
  LineNormalization norm;
  if (policy == "exact") {
    norm.mode = LineNormalization::Mode::exact;
  } else if (policy != "whitespace") {
    throw Error(ErrorCode::invalid_request, "--policy must be exact or whitespace");
  }
  out.json_doc(to_json(line_overlap(read_documents(candidate), read_documents(reference), norm)));
}

int cmd_serve(Runtime& rt, std::optional<int> port, std::ostream& out, std::ostream& err) {
  ServiceConfig sc = rt.config().service;
  if (port) sc.port = *port;
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  Service service(rt.reward_env(), rt.sandbox(), sc);
  int bound = service.start();
  bool ready = service.run_canary();
  out << json{{"port", bound}, {"ready", ready}}.dump() << std::endl;
  if (!ready) err << "sandbox canary failed; /health reports 503\n";
  int sig = 0;
  sigwait(&signals, &sig);
  service.stop(true);
  return 0;
}

}  // namespace

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_request: return 3;
    case ErrorCode::not_found: return 4;
    case ErrorCode::upstream_model_error: return 5;
    case ErrorCode::sandbox_error: return 6;
    case ErrorCode::capacity: return 7;
  }
  return 1;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reward environment for code feedback: corpus, test synthesis, scoring, pairing",
               "coffee"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config_path, "EnvConfig JSON file");
  app.add_option("--seed", common.seed, "Seed for every sampling step");
  app.add_option("--corpus", common.corpus, "Corpus directory (overrides paths.corpus)");
  app.add_option("--output,-o", common.output, "Write the primary output here");

  auto* ingest = app.add_subcommand("ingest", "Parse edit traces and derive triplets");
  std::string traces, triplets_out;
  ingest->add_option("--traces", traces, "Trace JSONL (default: corpus traces)");
  ingest->add_option("--triplets-out", triplets_out, "Write triplets JSONL here");

  auto* testgen = app.add_subcommand("testgen", "Synthesize hidden test suites");
  std::vector<std::string> only;
  testgen->add_option("--problem", only, "Restrict to these problem ids");

  auto* audit = app.add_subcommand("audit", "Pass-ratio audit of suites against wrong codes");
  std::string suite_path, wrong_path;
  audit->add_option("--suite", suite_path, "Suite JSONL (default: corpus problems)");
  audit->add_option("--wrong", wrong_path, "Wrong-code JSONL {problem_id, code}");

  auto* pairs = app.add_subcommand("pairs", "Build preference / SFT / editor datasets");
  std::string strategy, input, pairs_editor;
  int phase = 1;
  pairs->add_option("--strategy", strategy, "TS, CW, CoffeeEval, RS or editor-corpus")->required();
  pairs->add_option("--input", input, "Input JSONL for the strategy");
  pairs->add_option("--phase", phase, "Editor corpus phase (1 or 2)");
  pairs->add_option("--editor", pairs_editor, "Editor used for reward ranking");

  auto* score = app.add_subcommand("score", "Score one feedback text");
  std::string problem_id, wrong_file, feedback, feedback_file, score_editor;
  score->add_option("--problem", problem_id, "Problem id")->required();
  score->add_option("--wrong", wrong_file, "File holding the wrong code")->required();
  score->add_option("--feedback", feedback, "Feedback text");
  score->add_option("--feedback-file", feedback_file, "File holding the feedback text");
  score->add_option("--editor", score_editor, "mock-faithful, mock-skewed or model");

  auto* evaluate = app.add_subcommand("evaluate", "Pass@1 and reward-model metrics over a corpus");
  std::string eval_editor;
  std::size_t n = 1;
  bool generate = false;
  evaluate->add_option("--editor", eval_editor, "mock-faithful, mock-skewed or model");
  evaluate->add_option("--n", n, "Samples per item");
  evaluate->add_flag("--generate", generate, "Sample feedback from the feedback model");

  auto* overlap = app.add_subcommand("overlap", "Line overlap between two code directories");
  std::string candidate, reference, policy = "whitespace";
  overlap->add_option("--candidate", candidate, "Candidate directory")->required();
  overlap->add_option("--reference", reference, "Reference directory")->required();
  overlap->add_option("--policy", policy, "exact or whitespace");

  auto* serve = app.add_subcommand("serve", "Run the HTTP reward service");
  std::optional<int> port;
  serve->add_option("--port", port, "Port (0 picks a free one)");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  std::vector<std::string> argv_store = {"coffee"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    Runtime rt(common);
    Output o(common.output, out);
    if (*ingest) cmd_ingest(rt, traces, triplets_out, o);
    if (*testgen) cmd_testgen(rt, only, o);
    if (*audit) cmd_audit(rt, suite_path, wrong_path, o);
    if (*pairs) cmd_pairs(rt, strategy, input, phase, pairs_editor, o, err);
    if (*score) cmd_score(rt, problem_id, wrong_file, feedback, feedback_file, score_editor, o);
    if (*evaluate) cmd_evaluate(rt, eval_editor, n, generate, o);
    if (*overlap) cmd_overlap(candidate, reference, policy, o);
    if (*serve) return cmd_serve(rt, port, out, err);
    return 0;
  } catch (const ConfigError& e) {
    err << json{{"error", {{"code", to_string(e.code())}, {"issues", e.issues()}}}}.dump() << '\n';
    return exit_code_for(e.code());
  } catch (const Error& e) {
    err << json{{"error", {{"code", to_string(e.code())}, {"message", e.what()}}}}.dump() << '\n';
    return exit_code_for(e.code());
  }
}

}  // namespace coffee
