#pragma once

#include <cfenv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "shuntgate/backends.hpp"
#include "shuntgate/core.hpp"
#include "shuntgate/errors.hpp"

namespace shuntgate::prompting {

using backends::CallStats;
using backends::GenerationResult;
using backends::ModelBackend;
using backends::Sample;
using backends::token_count;
using core::ProbabilityVector;

// ---------------------------------------------------------------------------
// Template rendering
// ---------------------------------------------------------------------------

/// Substitutes `{name}` slots from the map.  `{{` and `}}` render as
/// literal braces; a slot with no binding is a domain error.
inline std::string render_template(const std::string& tmpl,
                                   const std::map<std::string, std::string>& slots) {
  std::string out;
  out.reserve(tmpl.size());
  for (std::size_t i = 0; i < tmpl.size();) {
    const char c = tmpl[i];
    if (c == '{') {
      if (i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
        out += '{';
        i += 2;
        continue;
      }
      const std::size_t close = tmpl.find('}', i + 1);
      if (close == std::string::npos)
        throw DomainError("template has unterminated slot");
      const std::string name = tmpl.substr(i + 1, close - i - 1);
      auto it = slots.find(name);
      if (it == slots.end())
        throw DomainError("template slot mismatch: no value for '" + name + "'");
      out += it->second;
      i = close + 1;
    } else if (c == '}') {
      if (i + 1 < tmpl.size() && tmpl[i + 1] == '}') {
        out += '}';
        i += 2;
        continue;
      }
      throw DomainError("template has unbalanced '}'");
    } else {
      out += c;
      ++i;
    }
  }
  return out;
}

/// Fixed two-decimal confidence rendering with round-half-even ties, so
/// prompts are stable across runs and cache-friendly.
inline std::string format_confidence(double value) {
  const long long cents = std::llrint(value * 100.0);  // FE_TONEAREST: ties to even
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%lld.%02lld", cents < 0 ? "-" : "",
                std::llabs(cents) / 100, std::llabs(cents) % 100);
  return buf;
}

// ---------------------------------------------------------------------------
// Proficiency
// ---------------------------------------------------------------------------

enum class ProficiencyRule { AccuracyAbove, TopKByValidationAccuracy };

/// Classes the small model excels at, as selected by a configurable rule
/// over per-class validation accuracy.
struct ProficiencySet {
  std::set<std::string> classes;
  ProficiencyRule rule = ProficiencyRule::AccuracyAbove;
  double threshold = 0.95;
  std::size_t k = 0;
};

inline ProficiencySet proficiency_accuracy_above(const std::map<std::string, double>& per_class,
                                                 double threshold = 0.95) {
  ProficiencySet set;
  set.rule = ProficiencyRule::AccuracyAbove;
  set.threshold = threshold;
  for (const auto& [cls, acc] : per_class)
    if (acc > threshold) set.classes.insert(cls);
  return set;
}

inline ProficiencySet proficiency_top_k(const std::map<std::string, double>& per_class,
                                        std::size_t k) {
  ProficiencySet set;
  set.rule = ProficiencyRule::TopKByValidationAccuracy;
  set.k = k;
  std::vector<std::pair<std::string, double>> ranked(per_class.begin(), per_class.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (std::size_t i = 0; i < ranked.size() && i < k; ++i) set.classes.insert(ranked[i].first);
  return set;
}

// ---------------------------------------------------------------------------
// Prompt records
// ---------------------------------------------------------------------------

enum class PromptMode { Soft, Hard, Transfer };

inline const char* prompt_mode_name(PromptMode mode) {
  switch (mode) {
    case PromptMode::Soft: return "soft";
    case PromptMode::Hard: return "hard";
    case PromptMode::Transfer: return "transfer";
  }
  return "?";
}

struct PromptRecord {
  std::string template_text;
  std::string rendered;
  PromptMode mode = PromptMode::Soft;
  std::map<std::string, double> injected_confidences;
  std::vector<std::string> pruned_candidates;
  std::vector<std::string> surviving_candidates;
  std::int64_t token_count_in = 0;
  std::int64_t token_count_out = 0;
  bool no_op = false;
};

struct SoftPromptOptions {
  /// Rendered once per proficient class; sees {label} and {confidence}.
  std::string annotation_template = "{label} with probability {confidence}";
  /// Joins annotations, and separates them from the base when appended.
  std::string separator = "\n";
  /// Extra slot bindings available to the base template (e.g. payload).
  std::map<std::string, std::string> extra_slots;
};

namespace detail {
inline std::string join(const std::vector<std::string>& items, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}
}  // namespace detail

/// Soft Prompt Pruning: annotate the prompt with the small model's
/// confidence for proficient classes only; the candidate list is kept
/// intact.  Annotations fill an {annotations} slot when the base
/// template declares one and are appended otherwise, so a slotless base
/// with no proficient classes renders unchanged.
inline PromptRecord build_soft_prompt(const std::string& base_template,
                                      const ProbabilityVector& c_s,
                                      const ProficiencySet& proficient,
                                      const SoftPromptOptions& options = {}) {
  c_s.validate();
  for (const auto& cls : proficient.classes)
    if (!c_s.contains(cls))
      throw DomainError("proficient class '" + cls + "' missing from confidence vector");

  PromptRecord record;
  record.template_text = base_template;
  record.mode = PromptMode::Soft;
  record.surviving_candidates = c_s.class_ids;

  std::vector<std::string> annotations;
  for (std::size_t i = 0; i < c_s.class_ids.size(); ++i) {
    const std::string& cls = c_s.class_ids[i];
    if (!proficient.classes.count(cls)) continue;
    record.injected_confidences[cls] = c_s.probs[i];
    annotations.push_back(render_template(
        options.annotation_template,
        {{"label", cls}, {"confidence", format_confidence(c_s.probs[i])}}));
  }
  const std::string annotation_block = detail::join(annotations, options.separator);

  std::map<std::string, std::string> slots = options.extra_slots;
  slots["candidates"] = detail::join(c_s.class_ids, ", ");
  slots["annotations"] = annotation_block;

  record.rendered = render_template(base_template, slots);
  const bool has_annotation_slot = base_template.find("{annotations}") != std::string::npos;
  if (!annotation_block.empty() && !has_annotation_slot) {
    if (!record.rendered.empty()) record.rendered += options.separator;
    record.rendered += annotation_block;
  }
  record.no_op = annotations.empty();
  record.token_count_in = token_count(base_template);
  record.token_count_out = token_count(record.rendered);
  return record;
}

/// Hard Prompt Pruning: remove proficient classes from the candidate
/// list, shrinking the prediction space from N to M and lowering its
/// entropy ceiling from log N to log M.
inline PromptRecord build_hard_prompt(const std::string& base_template,
                                      const ProbabilityVector& c_s,
                                      const ProficiencySet& proficient,
                                      const std::vector<std::string>& candidates,
                                      const std::map<std::string, std::string>& extra_slots = {}) {
  c_s.validate();
  if (candidates.empty()) throw DomainError("hard prompt: empty candidate list");

  PromptRecord record;
  record.template_text = base_template;
  record.mode = PromptMode::Hard;
  for (const auto& cls : candidates) {
    if (proficient.classes.count(cls))
      record.pruned_candidates.push_back(cls);
    else
      record.surviving_candidates.push_back(cls);
  }
  if (record.surviving_candidates.empty())
    throw DomainError("hard prompt: pruning would empty the candidate set");
  record.no_op = record.pruned_candidates.empty();

  std::map<std::string, std::string> slots = extra_slots;
  slots["candidates"] = detail::join(record.surviving_candidates, ", ");
  record.rendered = render_template(base_template, slots);
  record.token_count_in = token_count(base_template);
  record.token_count_out = token_count(record.rendered);
  return record;
}

// ---------------------------------------------------------------------------
// Prompt Transferring pipelines
// ---------------------------------------------------------------------------

enum class StageExecutor { SmallModel, LargeModel, PureFunction };

inline const char* stage_executor_name(StageExecutor e) {
  switch (e) {
    case StageExecutor::SmallModel: return "small_model";
    case StageExecutor::LargeModel: return "large_model";
    case StageExecutor::PureFunction: return "pure_function";
  }
  return "?";
}

/// One link of a transfer chain.  The stage prompt is rendered from the
/// template with {stage_output} bound to the previous stage's output and
/// {payload} to the pipeline input.
struct PipelineStage {
  std::string name;
  StageExecutor executor = StageExecutor::PureFunction;
  ModelBackend* backend = nullptr;                       // model stages
  std::function<std::string(const std::string&)> fn;     // pure stages
  std::string template_text = "{stage_output}";
};

struct StageTrace {
  std::string name;
  StageExecutor executor = StageExecutor::PureFunction;
  std::int64_t token_count_in = 0;   // tokens of the rendered stage prompt
  std::int64_t token_count_out = 0;  // tokens of the stage output
};

struct PipelineResult {
  std::string output;
  PromptRecord record;
  std::vector<StageTrace> traces;
  /// Final-stage generation when the last stage is a model; empty otherwise.
  GenerationResult final_generation;
  CallStats large_stats;  // billing of the large stage, if any
};

/// Rejects chains where an expensive large-model stage is anywhere but
/// the end, or a stage lacks its executor.
inline void validate_pipeline(const std::vector<PipelineStage>& stages) {
  if (stages.empty()) throw DomainError("pipeline has no stages");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& stage = stages[i];
    if (stage.executor == StageExecutor::LargeModel && i + 1 != stages.size())
      throw DomainError("pipeline stage '" + stage.name + "': large-model stage must be final");
    if (stage.executor == StageExecutor::PureFunction && !stage.fn)
      throw DomainError("pipeline stage '" + stage.name + "': missing function");
    if (stage.executor != StageExecutor::PureFunction && stage.backend == nullptr)
      throw DomainError("pipeline stage '" + stage.name + "': missing backend");
  }
}

/// Executes the chain on a text sample.  Small-model output flows into
/// the next stage's prompt via {stage_output}; token counts at pipeline
/// entry and at the hand-off into the large stage are recorded so the
/// reduction is auditable.
inline PipelineResult run_transfer_pipeline(const std::vector<PipelineStage>& stages,
                                            const Sample& sample) {
  validate_pipeline(stages);
  const std::string& entry_text = sample.text();

  PipelineResult result;
  result.record.mode = PromptMode::Transfer;
  result.record.token_count_in = token_count(entry_text);
  result.record.token_count_out = result.record.token_count_in;

  std::string current = entry_text;
  for (const auto& stage : stages) {
    std::string prompt;
    try {
      prompt = render_template(stage.template_text,
                               {{"stage_output", current}, {"payload", entry_text}});
    } catch (const Error& e) {
      throw DomainError("pipeline stage '" + stage.name + "' failed: " + e.what());
    }

    if (stage.executor == StageExecutor::LargeModel) {
      // The hand-off into the expensive call: everything before the
      // stage template was produced by cheap stages.
      result.record.token_count_out = token_count(current);
      result.record.template_text = stage.template_text;
      result.record.rendered = prompt;
    }

    StageTrace trace{stage.name, stage.executor, token_count(prompt), 0};
    std::string output;
    try {
      if (stage.executor == StageExecutor::PureFunction) {
        output = stage.fn(prompt);
      } else {
        CallStats stats;
        GenerationResult gen = stage.backend->generate(prompt, &stats);
        output = gen.text();
        if (&stage == &stages.back()) result.final_generation = std::move(gen);
        if (stage.executor == StageExecutor::LargeModel) result.large_stats = stats;
      }
    } catch (const Error& e) {
      throw DomainError("pipeline stage '" + stage.name + "' failed: " + e.what());
    }
    trace.token_count_out = token_count(output);
    result.traces.push_back(std::move(trace));
    current = std::move(output);
  }

  if (result.record.rendered.empty() && !stages.empty() &&
      stages.back().executor != StageExecutor::LargeModel) {
    // No large stage: the record carries the final cheap stage's view.
    result.record.template_text = stages.back().template_text;
    result.record.token_count_out = token_count(current);
  }
  result.output = std::move(current);
  return result;
}

/// Pure stage helper: keep at most `limit` whitespace tokens.
inline std::function<std::string(const std::string&)> truncate_tokens(std::size_t limit) {
  return [limit](const std::string& text) {
    const auto tokens = backends::whitespace_tokenize(text);
    std::string out;
    for (std::size_t i = 0; i < tokens.size() && i < limit; ++i) {
      if (i) out += ' ';
      out += tokens[i];
    }
    return out;
  };
}

}  // namespace shuntgate::prompting
