#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "shuntgate/core.hpp"
#include "shuntgate/errors.hpp"
#include "shuntgate/rng.hpp"

namespace shuntgate::backends {

using core::ProbabilityVector;

// ---------------------------------------------------------------------------
// Tokens
// ---------------------------------------------------------------------------

/// Pluggable tokenizer hook; the default splits on whitespace.
using Tokenizer = std::function<std::vector<std::string>(const std::string&)>;

inline std::vector<std::string> whitespace_tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  return tokens;
}

inline std::int64_t token_count(const std::string& text) {
  return static_cast<std::int64_t>(whitespace_tokenize(text).size());
}

// ---------------------------------------------------------------------------
// Samples
// ---------------------------------------------------------------------------

/// One input record: text or a dense feature vector, with optional gold
/// label and category tag.
struct Sample {
  std::string id;
  std::variant<std::string, std::vector<double>> payload;
  std::optional<std::string> gold_label;
  std::optional<std::string> category;

  bool has_text() const { return std::holds_alternative<std::string>(payload); }

  const std::string& text() const {
    if (!has_text()) throw DomainError("sample " + id + " has no text payload");
    return std::get<std::string>(payload);
  }

  const std::vector<double>& features() const {
    if (has_text()) throw DomainError("sample " + id + " has no feature payload");
    return std::get<std::vector<double>>(payload);
  }

  void validate() const {
    if (id.empty()) throw DomainError("sample has empty id");
    const bool empty_payload =
        has_text() ? std::get<std::string>(payload).empty()
                   : std::get<std::vector<double>>(payload).empty();
    if (empty_payload) throw DomainError("sample " + id + " has empty payload");
  }

  /// Billable size of the payload: whitespace tokens for text, vector
  /// length for features.
  std::int64_t payload_tokens() const {
    return has_text() ? token_count(text())
                      : static_cast<std::int64_t>(features().size());
  }
};

/// Ordered collection of samples with unique ids.
class Dataset {
 public:
  void add(Sample sample) {
    sample.validate();
    if (index_.count(sample.id))
      throw DomainError("duplicate sample id: " + sample.id);
    index_.emplace(sample.id, samples_.size());
    samples_.push_back(std::move(sample));
  }

  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }

  const Sample& operator[](std::size_t i) const { return samples_[i]; }

  const Sample* find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &samples_[it->second];
  }

  auto begin() const { return samples_.begin(); }
  auto end() const { return samples_.end(); }

  /// Distinct gold labels in first-seen order.
  std::vector<std::string> label_universe() const {
    std::vector<std::string> labels;
    for (const auto& s : samples_) {
      if (!s.gold_label) continue;
      if (std::find(labels.begin(), labels.end(), *s.gold_label) == labels.end())
        labels.push_back(*s.gold_label);
    }
    return labels;
  }

 private:
  std::vector<Sample> samples_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Cost accounting
// ---------------------------------------------------------------------------

/// One currency unit = 1,000,000 micro-units.  Money is integral so
/// Table-style cost reports are exact.
inline constexpr std::int64_t kMicrosPerUnit = 1'000'000;

struct CostProfile {
  std::int64_t price_per_input_token_micro = 0;
  std::int64_t price_per_output_token_micro = 0;
  std::int64_t fixed_per_call_micro = 0;

  void validate() const {
    if (price_per_input_token_micro < 0 || price_per_output_token_micro < 0 ||
        fixed_per_call_micro < 0)
      throw DomainError("cost profile prices must be non-negative");
  }

  std::int64_t call_cost(std::int64_t input_tokens, std::int64_t output_tokens) const {
    return input_tokens * price_per_input_token_micro +
           output_tokens * price_per_output_token_micro + fixed_per_call_micro;
  }
};

struct CostEntry {
  std::string backend;
  std::string sample_id;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  std::int64_t cost_micro = 0;
};

/// Thread-safe accumulator of per-call costs.  The running total is
/// atomic; the entry list is mutex-guarded.
class CostLedger {
 public:
  void record(CostEntry entry) {
    total_micro_.fetch_add(entry.cost_micro, std::memory_order_relaxed);
    std::lock_guard<std::mutex> lock(mutex_);
    entries_.push_back(std::move(entry));
  }

  std::int64_t total_micro() const { return total_micro_.load(std::memory_order_relaxed); }

  std::vector<CostEntry> entries() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return entries_;
  }

  std::size_t entry_count() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return entries_.size();
  }

  std::size_t count_for(const std::string& backend) const {
    std::lock_guard<std::mutex> lock(mutex_);
    std::size_t n = 0;
    for (const auto& e : entries_)
      if (e.backend == backend) ++n;
    return n;
  }

 private:
  mutable std::mutex mutex_;
  std::vector<CostEntry> entries_;
  std::atomic<std::int64_t> total_micro_{0};
};

/// Per-call token and cost figures, filled by backends on request.
struct CallStats {
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  std::int64_t cost_micro = 0;
};

// ---------------------------------------------------------------------------
// Backend interface
// ---------------------------------------------------------------------------

struct GenerationResult {
  std::vector<std::string> tokens;
  /// Per-step distributions over the vocabulary actually scored; may be
  /// empty when the backend does not expose token probabilities.
  std::vector<ProbabilityVector> step_distributions;

  std::string text() const {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i) out += ' ';
      out += tokens[i];
    }
    return out;
  }
};

/// Uniform surface over small local models, the simulated large oracle
/// and remote large-model clients.
class ModelBackend {
 public:
  virtual ~ModelBackend() = default;

  virtual std::string name() const = 0;
  virtual CostProfile cost_profile() const { return {}; }

  /// Classifies `sample` over exactly `candidates`, in order.  `prompt`
  /// carries a pruning/transfer prompt for backends that accept one.
  virtual ProbabilityVector classify(const Sample& sample,
                                     const std::vector<std::string>& candidates,
                                     const std::optional<std::string>& prompt = std::nullopt,
                                     CallStats* stats = nullptr) = 0;

  virtual GenerationResult generate(const std::string& prompt, CallStats* stats = nullptr) {
    (void)prompt;
    (void)stats;
    throw DomainError("backend " + name() + " does not support generation");
  }
};

/// Arithmetic mean of the probability assigned to each chosen token —
/// the sequence-level confidence for generative backends.
inline double aggregate_sequence_confidence(const std::vector<ProbabilityVector>& token_probs,
                                            const std::vector<std::string>& chosen) {
  if (token_probs.empty() || chosen.empty())
    throw DomainError("aggregate_sequence_confidence: empty sequence");
  if (token_probs.size() != chosen.size())
    throw DomainError("aggregate_sequence_confidence: step/token count mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < chosen.size(); ++i)
    sum += token_probs[i].prob_of(chosen[i]);
  return sum / static_cast<double>(chosen.size());
}

// ---------------------------------------------------------------------------
// Simulated oracle
// ---------------------------------------------------------------------------

/// Closed interval of confidences drawn uniformly.
struct ConfidenceRange {
  double lo = 0.90;
  double hi = 0.99;

  void validate() const {
    if (lo < 0.0 || hi > 1.0 || lo > hi)
      throw DomainError("confidence range must satisfy 0 <= lo <= hi <= 1");
  }
};

/// Desk-scale stand-in for a hosted large model: per-class accuracy,
/// configurable confidence behavior, seeded and bit-reproducible.
struct SimulatedOracleConfig {
  std::map<std::string, double> per_class_accuracy;
  double default_accuracy = 0.9;
  ConfidenceRange confidence_when_correct{0.90, 0.99};
  ConfidenceRange confidence_when_wrong{0.40, 0.80};
  std::uint64_t seed = 0;

  void validate() const {
    auto check = [](double a) {
      if (a < 0.0 || a > 1.0) throw DomainError("oracle accuracy outside [0, 1]");
    };
    check(default_accuracy);
    for (const auto& [cls, acc] : per_class_accuracy) check(acc);
    confidence_when_correct.validate();
    confidence_when_wrong.validate();
  }
};

class SimulatedOracle : public ModelBackend {
 public:
  SimulatedOracle(std::string name, SimulatedOracleConfig config, CostProfile cost = {},
                  CostLedger* ledger = nullptr)
      : name_(std::move(name)), config_(std::move(config)), cost_(cost), ledger_(ledger) {
    config_.validate();
    cost_.validate();
  }

  std::string name() const override { return name_; }
  CostProfile cost_profile() const override { return cost_; }

  ProbabilityVector classify(const Sample& sample, const std::vector<std::string>& candidates,
                             const std::optional<std::string>& prompt = std::nullopt,
                             CallStats* stats = nullptr) override {
    if (candidates.empty()) throw DomainError("classify: empty candidate list");
    const std::size_t n = candidates.size();

    // Per-sample stream derived from (seed, sample id): call order and
    // concurrency cannot perturb reproducibility, and repeated calls on
    // the same sample agree.
    rng::Rng sample_rng(config_.seed ^ rng::fnv1a64(sample.id));

    std::size_t target = pseudo_target(sample, candidates);
    const double accuracy = accuracy_for(candidates[target]);
    const bool correct = sample_rng.uniform() < accuracy;

    std::size_t predicted = target;
    if (!correct && n > 1) {
      std::size_t offset = 1 + sample_rng.uniform_index(n - 1);
      predicted = (target + offset) % n;
    }

    const ConfidenceRange& range =
        (predicted == target) ? config_.confidence_when_correct : config_.confidence_when_wrong;
    double confidence = n == 1 ? 1.0 : sample_rng.uniform(range.lo, range.hi);

    ProbabilityVector out;
    out.class_ids = candidates;
    out.probs.assign(n, n == 1 ? 0.0 : (1.0 - confidence) / static_cast<double>(n - 1));
    out.probs[predicted] = confidence;
    out.validate();

    bill(sample, prompt, stats);
    return out;
  }

 private:
  std::size_t pseudo_target(const Sample& sample, const std::vector<std::string>& candidates) const {
    if (sample.gold_label) {
      for (std::size_t i = 0; i < candidates.size(); ++i)
        if (candidates[i] == *sample.gold_label) return i;
    }
    // No usable gold label: pick a stable pseudo-target from the id hash.
    return static_cast<std::size_t>(
        rng::splitmix64(rng::fnv1a64(sample.id) ^ config_.seed) % candidates.size());
  }

  double accuracy_for(const std::string& cls) const {
    auto it = config_.per_class_accuracy.find(cls);
    return it == config_.per_class_accuracy.end() ? config_.default_accuracy : it->second;
  }

  void bill(const Sample& sample, const std::optional<std::string>& prompt, CallStats* stats) {
    const std::int64_t in_tokens = prompt ? token_count(*prompt) : sample.payload_tokens();
    const std::int64_t out_tokens = 1;  // the class answer
    const std::int64_t cost = cost_.call_cost(in_tokens, out_tokens);
    if (stats) *stats = CallStats{in_tokens, out_tokens, cost};
    if (ledger_) ledger_->record({name_, sample.id, in_tokens, out_tokens, cost});
  }

  std::string name_;
  SimulatedOracleConfig config_;
  CostProfile cost_;
  CostLedger* ledger_;
};

/// Generation backend that replays a canned reply; stands in for a
/// summarization small model in transfer pipelines.
class ScriptedGenerator : public ModelBackend {
 public:
  ScriptedGenerator(std::string name, std::string reply, CostProfile cost = {},
                    CostLedger* ledger = nullptr)
      : name_(std::move(name)), reply_(std::move(reply)), cost_(cost), ledger_(ledger) {}

  std::string name() const override { return name_; }
  CostProfile cost_profile() const override { return cost_; }

  ProbabilityVector classify(const Sample&, const std::vector<std::string>&,
                             const std::optional<std::string>& = std::nullopt,
                             CallStats* = nullptr) override {
    throw DomainError("backend " + name_ + " only supports generation");
  }

  GenerationResult generate(const std::string& prompt, CallStats* stats = nullptr) override {
    GenerationResult result;
    result.tokens = whitespace_tokenize(reply_);
    const std::int64_t in_tokens = token_count(prompt);
    const std::int64_t out_tokens = static_cast<std::int64_t>(result.tokens.size());
    const std::int64_t cost = cost_.call_cost(in_tokens, out_tokens);
    if (stats) *stats = CallStats{in_tokens, out_tokens, cost};
    if (ledger_) ledger_->record({name_, "", in_tokens, out_tokens, cost});
    return result;
  }

 private:
  std::string name_;
  std::string reply_;
  CostProfile cost_;
  CostLedger* ledger_;
};

}  // namespace shuntgate::backends
