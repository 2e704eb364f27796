#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "shuntgate/backends.hpp"
#include "shuntgate/core.hpp"
#include "shuntgate/errors.hpp"
#include "shuntgate/prompting.hpp"

namespace shuntgate::router {

using backends::CallStats;
using backends::Dataset;
using backends::ModelBackend;
using backends::Sample;
using core::ProbabilityVector;

// ---------------------------------------------------------------------------
// Policy and outcomes
// ---------------------------------------------------------------------------

enum class Tier { SpecificSmall, LearnableSmall, Large };

inline const char* tier_name(Tier tier) {
  switch (tier) {
    case Tier::SpecificSmall: return "specific_small";
    case Tier::LearnableSmall: return "learnable_small";
    case Tier::Large: return "large";
  }
  return "?";
}

inline Tier tier_from_name(const std::string& name) {
  if (name == "specific_small") return Tier::SpecificSmall;
  if (name == "learnable_small") return Tier::LearnableSmall;
  if (name == "large") return Tier::Large;
  throw DomainError("unknown tier name: " + name);
}

enum class Strategy { Confidence, DistributionModel, PredictionModel };

inline const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Confidence: return "confidence";
    case Strategy::DistributionModel: return "distribution_model";
    case Strategy::PredictionModel: return "prediction_model";
  }
  return "?";
}

inline Strategy strategy_from_name(const std::string& name) {
  if (name == "confidence") return Strategy::Confidence;
  if (name == "distribution_model") return Strategy::DistributionModel;
  if (name == "prediction_model") return Strategy::PredictionModel;
  throw ConfigError("unknown shunt strategy: " + name);
}

/// Shunt policy: threshold and strategy.  The tier order is the fixed
/// three-tier cascade specific-small -> learnable-small -> large.
struct ShuntPolicy {
  double delta = 0.97;
  Strategy strategy = Strategy::Confidence;

  void validate() const {
    if (!(delta > 0.0 && delta < 1.0)) throw DomainError("shunt threshold must lie in (0, 1)");
  }
};

struct RoutingOutcome {
  std::string sample_id;
  Tier tier = Tier::SpecificSmall;
  std::string prediction;
  double confidence = 0.0;
  std::int64_t cost_micro = 0;
  std::optional<prompting::PromptRecord> prompt_used;
  /// Set when the large tier failed and the answer fell back to the
  /// best small tier.
  bool degraded_fallback = false;
};

/// Thrown by route() when fallback is disabled and the large tier fails;
/// carries the best small-tier answer.
class RoutingError : public TransportError {
 public:
  RoutingError(const std::string& what, RoutingOutcome fallback)
      : TransportError(what), fallback_(std::move(fallback)) {}
  const RoutingOutcome& fallback() const { return fallback_; }

 private:
  RoutingOutcome fallback_;
};

// ---------------------------------------------------------------------------
// Large-tier prompt construction
// ---------------------------------------------------------------------------

/// How the escalated sample's prompt is built from the specific small
/// model's confidence.  Null plan means a plain classify call.
struct LargePromptPlan {
  prompting::PromptMode mode = prompting::PromptMode::Soft;
  std::string base_template;
  prompting::SoftPromptOptions soft_options;
  prompting::ProficiencySet proficient;
  /// Transfer mode only: the stage chain, already wired to backends.
  std::vector<prompting::PipelineStage> stages;
};

struct RouteTargets {
  ModelBackend* specific_small = nullptr;  // required
  ModelBackend* learnable_small = nullptr; // optional tier
  ModelBackend* large = nullptr;           // required
  std::vector<std::string> candidates;
  const LargePromptPlan* prompt_plan = nullptr;
  /// Serve the best small-tier answer when the large tier fails; when
  /// false, route() throws RoutingError instead.
  bool fallback_on_transport_error = true;
};

// ---------------------------------------------------------------------------
// Shunt strategies
// ---------------------------------------------------------------------------

/// Decides whether a small tier keeps the sample.
class ShuntStrategy {
 public:
  virtual ~ShuntStrategy() = default;
  virtual std::string name() const = 0;
  virtual bool keep_small(const Sample& sample, const ProbabilityVector& confidence,
                          const ShuntPolicy& policy) = 0;
};

/// Default: keep iff the max confidence strictly exceeds delta.
/// Confidence exactly equal to delta routes onward.
class ConfidenceStrategy : public ShuntStrategy {
 public:
  std::string name() const override { return "confidence"; }
  bool keep_small(const Sample&, const ProbabilityVector& confidence,
                  const ShuntPolicy& policy) override {
    return confidence.max_prob() > policy.delta;
  }
};

/// Coarse region classifier: keep the sample in the small tier when the
/// auxiliary model places it in one of the configured regions.
class DistributionModelStrategy : public ShuntStrategy {
 public:
  DistributionModelStrategy(ModelBackend* aux, std::vector<std::string> regions,
                            std::set<std::string> small_regions)
      : aux_(aux), regions_(std::move(regions)), small_regions_(std::move(small_regions)) {
    if (!aux_) throw ConfigError("distribution-model strategy requires an auxiliary model");
    if (regions_.empty()) throw ConfigError("distribution-model strategy requires region labels");
  }

  std::string name() const override { return "distribution_model"; }
  bool keep_small(const Sample& sample, const ProbabilityVector&, const ShuntPolicy&) override {
    return small_regions_.count(aux_->classify(sample, regions_).argmax_class()) > 0;
  }

 private:
  ModelBackend* aux_;
  std::vector<std::string> regions_;
  std::set<std::string> small_regions_;
};

/// Correctness predictor: keep the sample when the auxiliary model
/// predicts the small model will answer correctly.
class PredictionModelStrategy : public ShuntStrategy {
 public:
  static constexpr const char* kCorrect = "correct";
  static constexpr const char* kWrong = "wrong";

  explicit PredictionModelStrategy(ModelBackend* aux) : aux_(aux) {
    if (!aux_) throw ConfigError("prediction-model strategy requires an auxiliary model");
  }

  std::string name() const override { return "prediction_model"; }
  bool keep_small(const Sample& sample, const ProbabilityVector&, const ShuntPolicy&) override {
    return aux_->classify(sample, {kCorrect, kWrong}).argmax_class() == kCorrect;
  }

 private:
  ModelBackend* aux_;
};

// ---------------------------------------------------------------------------
// Routing
// ---------------------------------------------------------------------------

namespace detail {

inline RoutingOutcome small_outcome(const Sample& sample, Tier tier,
                                    const ProbabilityVector& confidence) {
  RoutingOutcome outcome;
  outcome.sample_id = sample.id;
  outcome.tier = tier;
  outcome.prediction = confidence.argmax_class();
  outcome.confidence = confidence.max_prob();
  outcome.cost_micro = 0;  // small tiers are free in the query-proportion model
  return outcome;
}

inline RoutingOutcome transfer_outcome(const Sample& sample, const LargePromptPlan& plan) {
  auto result = prompting::run_transfer_pipeline(plan.stages, sample);
  RoutingOutcome outcome;
  outcome.sample_id = sample.id;
  outcome.tier = Tier::Large;
  outcome.prediction = result.output;
  outcome.cost_micro = result.large_stats.cost_micro;
  outcome.prompt_used = std::move(result.record);
  if (!result.final_generation.step_distributions.empty()) {
    outcome.confidence = backends::aggregate_sequence_confidence(
        result.final_generation.step_distributions, result.final_generation.tokens);
  } else {
    outcome.confidence = 1.0;  // backend exposed no token probabilities
  }
  return outcome;
}

}  // namespace detail

/// Inference-time shunting with a pluggable keep/escalate decision.
/// Exactly one tier serves the sample.
inline RoutingOutcome route_with_strategy(const Sample& sample, const ShuntPolicy& policy,
                                          const RouteTargets& targets, ShuntStrategy& strategy) {
  policy.validate();
  if (!targets.specific_small || !targets.large)
    throw ConfigError("route requires specific-small and large backends");
  if (targets.candidates.empty()) throw DomainError("route: empty candidate list");

  const ProbabilityVector c_s1 =
      targets.specific_small->classify(sample, targets.candidates);
  if (strategy.keep_small(sample, c_s1, policy))
    return detail::small_outcome(sample, Tier::SpecificSmall, c_s1);

  std::optional<ProbabilityVector> c_s2;
  if (targets.learnable_small) {
    c_s2 = targets.learnable_small->classify(sample, targets.candidates);
    if (strategy.keep_small(sample, *c_s2, policy))
      return detail::small_outcome(sample, Tier::LearnableSmall, *c_s2);
  }

  // Escalation: build the prompt from the small confidences, then call
  // the large backend.
  const auto fallback = [&]() {
    const bool learnable_better = c_s2 && c_s2->max_prob() > c_s1.max_prob();
    RoutingOutcome out = detail::small_outcome(
        sample, learnable_better ? Tier::LearnableSmall : Tier::SpecificSmall,
        learnable_better ? *c_s2 : c_s1);
    out.degraded_fallback = true;
    return out;
  };

  try {
    if (targets.prompt_plan && targets.prompt_plan->mode == prompting::PromptMode::Transfer)
      return detail::transfer_outcome(sample, *targets.prompt_plan);

    std::optional<prompting::PromptRecord> record;
    std::vector<std::string> large_candidates = targets.candidates;
    std::optional<std::string> prompt_text;
    if (targets.prompt_plan) {
      const auto& plan = *targets.prompt_plan;
      std::map<std::string, std::string> slots;
      slots["payload"] = sample.has_text() ? sample.text() : std::string();
      if (plan.mode == prompting::PromptMode::Soft) {
        auto options = plan.soft_options;
        options.extra_slots.insert(slots.begin(), slots.end());
        record = prompting::build_soft_prompt(plan.base_template, c_s1, plan.proficient, options);
      } else {
        record = prompting::build_hard_prompt(plan.base_template, c_s1, plan.proficient,
                                              targets.candidates, slots);
        large_candidates = record->surviving_candidates;
      }
      prompt_text = record->rendered;
    }

    CallStats stats;
    const ProbabilityVector c_l =
        targets.large->classify(sample, large_candidates, prompt_text, &stats);
    RoutingOutcome outcome;
    outcome.sample_id = sample.id;
    outcome.tier = Tier::Large;
    outcome.prediction = c_l.argmax_class();
    outcome.confidence = c_l.max_prob();
    outcome.cost_micro = stats.cost_micro;
    outcome.prompt_used = std::move(record);
    return outcome;
  } catch (const TransportError& e) {
    if (targets.fallback_on_transport_error) return fallback();
    throw RoutingError(std::string("large tier failed: ") + e.what(), fallback());
  }
}

/// The three-tier cascade with the default confidence rule: a sample
/// stays in the first small tier whose max confidence exceeds delta.
inline RoutingOutcome route(const Sample& sample, const ShuntPolicy& policy,
                            const RouteTargets& targets) {
  ConfidenceStrategy confidence;
  return route_with_strategy(sample, policy, targets, confidence);
}

// ---------------------------------------------------------------------------
// Threshold calibration
// ---------------------------------------------------------------------------

enum class CalibrationObjective { MatchLargeAccuracy, MaxAccuracy };

inline CalibrationObjective objective_from_name(const std::string& name) {
  if (name == "match-large") return CalibrationObjective::MatchLargeAccuracy;
  if (name == "max-accuracy") return CalibrationObjective::MaxAccuracy;
  throw ConfigError("unknown calibration objective: " + name);
}

struct SweepPoint {
  double delta = 0.0;
  double accuracy = 0.0;
  double query_proportion = 0.0;
};

struct CalibrationResult {
  double chosen_delta = 0.0;
  bool objective_met = false;
  double target_used = 0.0;
  std::vector<SweepPoint> sweep;  // sorted by delta
};

struct CalibrationOptions {
  std::vector<double> grid;
  CalibrationObjective objective = CalibrationObjective::MatchLargeAccuracy;
  /// MatchLargeAccuracy target; defaults to the large model's own
  /// accuracy on the validation set.
  std::optional<double> target;
};

/// Parses a delta grid spec "start:stop:step" into explicit points.
inline std::vector<double> parse_grid(const std::string& spec) {
  double start = 0.0, stop = 0.0, step = 0.0;
  if (std::sscanf(spec.c_str(), "%lf:%lf:%lf", &start, &stop, &step) != 3)
    throw ConfigError("grid spec must be start:stop:step, got: " + spec);
  if (step <= 0.0 || stop < start) throw ConfigError("grid spec is not increasing: " + spec);
  std::vector<double> grid;
  for (int i = 0;; ++i) {
    const double d = start + step * i;
    if (d > stop + step * 0.5) break;
    grid.push_back(std::min(d, stop));
  }
  return grid;
}

/// Simulates two-tier routing per delta over the validation set and
/// picks the smallest delta meeting the objective (ties go to the
/// smaller, cheaper delta).  Small and large answers are computed once
/// per sample, never per grid point.
inline CalibrationResult calibrate_delta(const Dataset& validation, ModelBackend& specific_small,
                                         ModelBackend& large,
                                         const std::vector<std::string>& candidates,
                                         const CalibrationOptions& options) {
  if (options.grid.empty()) throw DomainError("calibration grid is empty");
  for (double d : options.grid)
    if (!(d > 0.0 && d < 1.0)) throw DomainError("calibration grid delta outside (0, 1)");
  if (validation.empty()) throw DomainError("calibration needs a non-empty validation set");
  if (candidates.empty()) throw DomainError("calibration: empty candidate list");

  struct PerSample {
    double small_confidence;
    bool small_correct;
    bool large_correct;
  };
  std::vector<PerSample> cache;
  cache.reserve(validation.size());
  std::size_t large_correct_total = 0;
  for (const auto& sample : validation) {
    if (!sample.gold_label)
      throw DomainError("calibration sample lacks a gold label: " + sample.id);
    const ProbabilityVector c_s = specific_small.classify(sample, candidates);
    const ProbabilityVector c_l = large.classify(sample, candidates);
    PerSample row{c_s.max_prob(), c_s.argmax_class() == *sample.gold_label,
                  c_l.argmax_class() == *sample.gold_label};
    large_correct_total += row.large_correct ? 1 : 0;
    cache.push_back(row);
  }
  const double n = static_cast<double>(cache.size());
  const double large_only_accuracy = static_cast<double>(large_correct_total) / n;

  CalibrationResult result;
  result.target_used = options.target.value_or(large_only_accuracy);

  std::vector<double> grid = options.grid;
  std::sort(grid.begin(), grid.end());
  for (double delta : grid) {
    std::size_t correct = 0, escalated = 0;
    for (const auto& row : cache) {
      if (row.small_confidence > delta) {
        correct += row.small_correct ? 1 : 0;
      } else {
        ++escalated;
        correct += row.large_correct ? 1 : 0;
      }
    }
    result.sweep.push_back(
        {delta, static_cast<double>(correct) / n, static_cast<double>(escalated) / n});
  }

  if (options.objective == CalibrationObjective::MatchLargeAccuracy) {
    for (const auto& point : result.sweep) {
      if (point.accuracy >= result.target_used) {
        result.chosen_delta = point.delta;
        result.objective_met = true;
        return result;
      }
    }
  }
  // MaxAccuracy, or best effort when no delta met the target.
  const auto best = std::max_element(
      result.sweep.begin(), result.sweep.end(),
      [](const SweepPoint& a, const SweepPoint& b) { return a.accuracy < b.accuracy; });
  result.chosen_delta = best->delta;
  result.objective_met = options.objective == CalibrationObjective::MaxAccuracy;
  return result;
}

}  // namespace shuntgate::router
