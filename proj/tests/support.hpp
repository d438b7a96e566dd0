#pragma once

// Helpers shared by the integration tests and the acceptance binary.

#include <filesystem>
#include <memory>
#include <string>

#include "coffee/clients.hpp"
#include "coffee/io.hpp"
#include "coffee/reward.hpp"
#include "coffee/sandbox.hpp"

namespace coffee::testing {

inline std::filesystem::path fixtures_dir() { return COFFEE_FIXTURES_DIR; }

inline std::shared_ptr<Sandbox> fixture_sandbox(std::size_t workers = 4) {
  SandboxConfig cfg;
  cfg.workers = workers;
  cfg.max_concurrent = 8;
  return std::make_shared<Sandbox>(cfg);
}

inline ProblemIndex fixture_problems() {
  return load_problems(fixtures_dir() / "problems.jsonl");
}

inline std::shared_ptr<const EditFixtures> fixture_edits() {
  return std::make_shared<EditFixtures>(EditFixtures::load_jsonl(fixtures_dir() / "edit_fixtures.jsonl"));
}

// An editor that always fails upstream, for error-path tests.
class BrokenEditor : public Editor {
 public:
  std::string edit(const EditRequest&) override {
    throw Error(ErrorCode::upstream_model_error, "editor endpoint unavailable");
  }
  std::string name() const override { return "broken"; }
};

inline std::shared_ptr<RewardEnv> fixture_env(std::shared_ptr<Sandbox> sandbox) {
  auto env = std::make_shared<RewardEnv>(sandbox);
  for (const auto& [_, p] : fixture_problems()) env->add_problem(p);
  auto edits = fixture_edits();
  env->add_editor("mock-faithful", std::make_shared<FaithfulMockEditor>(edits));
  env->add_editor("mock-skewed", std::make_shared<SkewedMockEditor>(edits));
  env->add_editor("broken", std::make_shared<BrokenEditor>());
  return env;
}

}  // namespace coffee::testing
