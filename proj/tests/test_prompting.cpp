#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <set>

#include "shuntgate/prompting.hpp"
#include "shuntgate/rng.hpp"

using namespace shuntgate;
using core::ProbabilityVector;
using prompting::build_hard_prompt;
using prompting::build_soft_prompt;
using prompting::format_confidence;
using prompting::ProficiencySet;
using prompting::PromptMode;
using prompting::render_template;

TEST_CASE("template rendering") {
  CHECK(render_template("pick one of {candidates}", {{"candidates", "a, b"}}) ==
        "pick one of a, b");
  CHECK(render_template("literal {{braces}} stay", {}) == "literal {braces} stay");
  CHECK(render_template("{x}{y}", {{"x", "1"}, {"y", "2"}}) == "12");
  CHECK_THROWS_AS(render_template("{missing}", {}), DomainError);
  CHECK_THROWS_AS(render_template("open {slot", {{"slot", "v"}}), DomainError);
  CHECK_THROWS_AS(render_template("stray } brace", {}), DomainError);
}

TEST_CASE("confidence formatting is two-decimal with even ties") {
  CHECK(format_confidence(0.3333333) == "0.33");
  CHECK(format_confidence(0.125) == "0.12");   // tie to even
  CHECK(format_confidence(0.875) == "0.88");   // tie to even
  CHECK(format_confidence(1.0) == "1.00");
  CHECK(format_confidence(0.0) == "0.00");
  // Re-parsing the formatted value and formatting again is stable.
  const std::string rendered = format_confidence(0.337);
  CHECK(format_confidence(std::strtod(rendered.c_str(), nullptr)) == rendered);
}

static ProbabilityVector animal_confidences() {
  return ProbabilityVector{{0.10, 0.55, 0.35}, {"cat", "dog", "bird"}};
}

TEST_CASE("soft prompt annotates proficient classes only") {
  ProficiencySet proficient;
  proficient.classes = {"cat"};
  const auto record = build_soft_prompt("Classify the photo. Candidates: {candidates}.",
                                        animal_confidences(), proficient);
  CHECK(record.mode == PromptMode::Soft);
  CHECK(record.rendered.find("cat with probability 0.10") != std::string::npos);
  CHECK(record.rendered.find("dog with probability") == std::string::npos);
  CHECK(record.rendered.find("cat, dog, bird") != std::string::npos);
  CHECK(record.injected_confidences.size() == 1);
  CHECK(record.injected_confidences.at("cat") == 0.10);
  CHECK(record.pruned_candidates.empty());
  CHECK(record.surviving_candidates.size() == 3);
}

TEST_CASE("soft prompt with no proficient classes is the identity") {
  const std::string base = "Classify the photo as best you can.";
  const auto record = build_soft_prompt(base, animal_confidences(), ProficiencySet{});
  CHECK(record.rendered == base);
  CHECK(record.no_op);
}

TEST_CASE("soft prompt honors an explicit annotations slot") {
  ProficiencySet proficient;
  proficient.classes = {"cat", "dog"};
  const auto record = build_soft_prompt("Hints: [{annotations}] Decide.", animal_confidences(),
                                        proficient);
  CHECK(record.rendered.find("Hints: [cat with probability 0.10\ndog with probability 0.55]") !=
        std::string::npos);
}

TEST_CASE("soft prompt requires confidences for every proficient class") {
  ProficiencySet proficient;
  proficient.classes = {"zebra"};
  CHECK_THROWS_AS(build_soft_prompt("{candidates}", animal_confidences(), proficient),
                  DomainError);
}

TEST_CASE("proficiency rules") {
  const std::map<std::string, double> acc{{"cat", 0.99}, {"dog", 0.80}, {"bird", 0.97}};
  const auto above = prompting::proficiency_accuracy_above(acc, 0.95);
  CHECK(above.classes == std::set<std::string>{"cat", "bird"});
  const auto top1 = prompting::proficiency_top_k(acc, 1);
  CHECK(top1.classes == std::set<std::string>{"cat"});
}

TEST_CASE("hard prompt shrinks the candidate list and the entropy bound") {
  std::vector<std::string> candidates;
  ProbabilityVector conf;
  for (int i = 0; i < 100; ++i) {
    candidates.push_back("class" + std::to_string(i));
    conf.class_ids.push_back(candidates.back());
    conf.probs.push_back(0.01);
  }
  ProficiencySet proficient;
  for (int i = 0; i < 30; ++i) proficient.classes.insert("class" + std::to_string(i));

  const auto record =
      build_hard_prompt("Choose among: {candidates}", conf, proficient, candidates);
  CHECK(record.mode == PromptMode::Hard);
  CHECK(record.surviving_candidates.size() == 70);
  CHECK(record.pruned_candidates.size() == 30);
  CHECK_FALSE(record.no_op);
  CHECK(core::max_entropy_bound(record.surviving_candidates.size()) <
        core::max_entropy_bound(candidates.size()));
}

TEST_CASE("hard prompt with disjoint proficiency is a no-op") {
  ProficiencySet proficient;
  proficient.classes = {"zebra"};
  const auto conf = animal_confidences();
  const auto record =
      build_hard_prompt("{candidates}", conf, proficient, conf.class_ids);
  CHECK(record.no_op);
  CHECK(record.surviving_candidates == conf.class_ids);
  CHECK(record.pruned_candidates.empty());
}

TEST_CASE("hard prompt refuses to empty the candidate set") {
  ProficiencySet proficient;
  proficient.classes = {"cat", "dog", "bird"};
  const auto conf = animal_confidences();
  CHECK_THROWS_AS(build_hard_prompt("{candidates}", conf, proficient, conf.class_ids),
                  DomainError);
}

TEST_CASE("hard prompt partitions candidates exactly on random sets") {
  rng::Rng r(808);
  for (int iter = 0; iter < 1000; ++iter) {
    const std::size_t n = 2 + r.uniform_index(40);
    std::vector<std::string> candidates;
    ProbabilityVector conf;
    for (std::size_t i = 0; i < n; ++i) {
      candidates.push_back("k" + std::to_string(i));
      conf.class_ids.push_back(candidates.back());
      conf.probs.push_back(1.0 / static_cast<double>(n));
    }
    ProficiencySet proficient;
    for (std::size_t i = 0; i < n; ++i)
      if (r.uniform() < 0.4 && proficient.classes.size() + 1 < n)
        proficient.classes.insert(candidates[i]);

    const auto record = build_hard_prompt("{candidates}", conf, proficient, candidates);
    // pruned and surviving partition the original list.
    std::set<std::string> reunion(record.pruned_candidates.begin(),
                                  record.pruned_candidates.end());
    for (const auto& cls : record.surviving_candidates) {
      CHECK(reunion.count(cls) == 0);
      reunion.insert(cls);
    }
    CHECK(reunion == std::set<std::string>(candidates.begin(), candidates.end()));
    if (!record.pruned_candidates.empty())
      CHECK(record.surviving_candidates.size() < candidates.size());
  }
}

// ---------------------------------------------------------------------------
// Transfer pipelines
// ---------------------------------------------------------------------------

using backends::CostLedger;
using backends::CostProfile;
using backends::Sample;
using backends::ScriptedGenerator;
using prompting::PipelineStage;
using prompting::run_transfer_pipeline;
using prompting::StageExecutor;

static Sample dispute_sample(const std::string& text) {
  Sample s;
  s.id = "case-1";
  s.payload = text;
  return s;
}

TEST_CASE("summarize-then-judge pipeline keeps the token hand-off auditable") {
  const std::string narration =
      "one two three four five six seven eight nine ten eleven twelve";  // 12 tokens
  ScriptedGenerator summarizer("small", "short digest of the case");     // 5 tokens
  CostLedger large_ledger;
  ScriptedGenerator judge("large", "the narrator is at fault", CostProfile{1, 0, 0},
                          &large_ledger);

  std::vector<PipelineStage> stages;
  stages.push_back({"summarize", StageExecutor::SmallModel, &summarizer, {}, "{stage_output}"});
  stages.push_back({"judge", StageExecutor::LargeModel, &judge, {}, "{stage_output}"});

  const auto result = run_transfer_pipeline(stages, dispute_sample(narration));
  CHECK(result.output == "the narrator is at fault");
  CHECK(result.record.mode == PromptMode::Transfer);
  CHECK(result.record.token_count_in == 12);
  CHECK(result.record.token_count_out == 5);
  CHECK(result.large_stats.input_tokens == 5);
  const auto entries = large_ledger.entries();
  REQUIRE(entries.size() == 1);
  CHECK(entries[0].input_tokens == result.record.token_count_out);
  REQUIRE(result.traces.size() == 2);
  CHECK(result.traces[0].token_count_in == 12);
  CHECK(result.traces[0].token_count_out == 5);
  CHECK(result.traces[1].token_count_in == 5);
}

TEST_CASE("degenerate single large stage equals a direct call") {
  ScriptedGenerator large("large", "direct answer");
  std::vector<PipelineStage> stages;
  stages.push_back({"only", StageExecutor::LargeModel, &large, {}, "{stage_output}"});
  const auto result = run_transfer_pipeline(stages, dispute_sample("the raw input text"));
  CHECK(result.output == large.generate("the raw input text").text());
  CHECK(result.record.token_count_in == result.record.token_count_out);
}

TEST_CASE("pure truncation stage bounds the token count") {
  rng::Rng r(909);
  std::vector<PipelineStage> stages;
  stages.push_back({"truncate", StageExecutor::PureFunction, nullptr,
                    prompting::truncate_tokens(100), "{stage_output}"});
  for (int iter = 0; iter < 100; ++iter) {
    std::string text;
    const std::size_t n = 1 + r.uniform_index(300);
    for (std::size_t i = 0; i < n; ++i) text += "tok" + std::to_string(i) + " ";
    const auto result = run_transfer_pipeline(stages, dispute_sample(text));
    CHECK(backends::token_count(result.output) <= 100);
    CHECK(result.traces[0].token_count_out <= 100);
  }
}

TEST_CASE("pipeline validation and failure reporting") {
  ScriptedGenerator large("large", "answer");
  ScriptedGenerator small("small", "digest");
  std::vector<PipelineStage> misplaced;
  misplaced.push_back({"judge", StageExecutor::LargeModel, &large, {}, "{stage_output}"});
  misplaced.push_back({"late", StageExecutor::SmallModel, &small, {}, "{stage_output}"});
  CHECK_THROWS_AS(run_transfer_pipeline(misplaced, dispute_sample("text")), DomainError);

  std::vector<PipelineStage> broken;
  broken.push_back({"boom", StageExecutor::PureFunction, nullptr,
                    [](const std::string&) -> std::string {
                      throw DomainError("stage exploded");
                    },
                    "{stage_output}"});
  try {
    run_transfer_pipeline(broken, dispute_sample("text"));
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("boom") != std::string::npos);
  }

  CHECK_THROWS_AS(run_transfer_pipeline({}, dispute_sample("text")), DomainError);
}
