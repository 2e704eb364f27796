#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "shuntgate/backends.hpp"
#include "shuntgate/errors.hpp"
#include "shuntgate/router.hpp"

namespace shuntgate::metrics {

using backends::Dataset;
using router::RoutingOutcome;
using router::Tier;

// ---------------------------------------------------------------------------
// Evaluation reports
// ---------------------------------------------------------------------------

struct CategoryStats {
  std::size_t n = 0;        // outcomes in this category
  std::size_t scored = 0;   // outcomes with a gold label
  std::size_t correct = 0;
  std::size_t large_n = 0;  // outcomes served by the large tier

  double accuracy() const {
    return scored == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(scored);
  }
  double query_proportion() const {
    return n == 0 ? 0.0 : static_cast<double>(large_n) / static_cast<double>(n);
  }
};

/// Per-category and overall accuracy / query-proportion / cost report.
/// All ratios are exact integer counts rendered at fixed precision, so
/// two runs over the same outcomes produce byte-identical reports.
struct EvaluationReport {
  std::map<std::string, CategoryStats> per_category;
  std::size_t total = 0;
  std::size_t scored = 0;
  std::size_t correct = 0;
  std::size_t large_count = 0;
  std::size_t unscored = 0;
  std::int64_t total_cost_micro = 0;
  std::optional<double> small_only_accuracy;
  std::optional<double> large_only_accuracy;
  std::map<std::string, std::string> metadata;

  double overall_accuracy() const {
    return scored == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(scored);
  }
  double overall_query_proportion() const {
    return total == 0 ? 0.0 : static_cast<double>(large_count) / static_cast<double>(total);
  }

  std::string to_table() const;
  std::string to_jsonl() const;
};

/// Exact-count evaluation of routing outcomes against gold labels.
/// Outcomes whose sample lacks a gold label are excluded from accuracy
/// and surfaced through `unscored`.
inline EvaluationReport evaluate(const std::vector<RoutingOutcome>& outcomes,
                                 const Dataset& gold) {
  EvaluationReport report;
  for (const auto& outcome : outcomes) {
    const backends::Sample* sample = gold.find(outcome.sample_id);
    if (!sample)
      throw DomainError("outcome references unknown sample id: " + outcome.sample_id);

    const std::string category = sample->category.value_or("uncategorized");
    CategoryStats& stats = report.per_category[category];
    ++stats.n;
    ++report.total;
    if (outcome.tier == Tier::Large) {
      ++stats.large_n;
      ++report.large_count;
    }
    report.total_cost_micro += outcome.cost_micro;

    if (!sample->gold_label) {
      ++report.unscored;
      continue;
    }
    ++stats.scored;
    ++report.scored;
    if (outcome.prediction == *sample->gold_label) {
      ++stats.correct;
      ++report.correct;
    }
  }
  return report;
}

namespace detail {

inline std::string percent_cell(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", value * 100.0);
  return buf;
}

inline std::string money(std::int64_t micro) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%lld.%06lld", static_cast<long long>(micro / 1'000'000),
                static_cast<long long>(std::llabs(micro % 1'000'000)));
  return buf;
}

}  // namespace detail

inline std::string EvaluationReport::to_table() const {
  std::string out;
  std::size_t width = 12;
  for (const auto& [category, _] : per_category) width = std::max(width, category.size() + 2);

  auto row = [&](const std::string& name, const std::string& cell, const std::string& n) {
    out += name;
    out.append(width > name.size() ? width - name.size() : 1, ' ');
    out += cell;
    out.append(cell.size() < 20 ? 20 - cell.size() : 1, ' ');
    out += n;
    out += '\n';
  };

  row("category", "accuracy|query", "n");
  for (const auto& [category, stats] : per_category)
    row(category,
        detail::percent_cell(stats.accuracy()) + "|" + detail::percent_cell(stats.query_proportion()),
        std::to_string(stats.n));
  row("overall",
      detail::percent_cell(overall_accuracy()) + "|" + detail::percent_cell(overall_query_proportion()),
      std::to_string(total));
  out += "total cost: " + detail::money(total_cost_micro) + " units\n";
  if (unscored > 0) out += "unscored: " + std::to_string(unscored) + "\n";
  if (small_only_accuracy)
    out += "small-only accuracy: " + detail::percent_cell(*small_only_accuracy) + "\n";
  if (large_only_accuracy)
    out += "large-only accuracy: " + detail::percent_cell(*large_only_accuracy) + "\n";
  return out;
}

inline std::string EvaluationReport::to_jsonl() const {
  std::string out;
  for (const auto& [category, stats] : per_category) {
    nlohmann::json line{{"category", category},
                        {"accuracy", stats.accuracy()},
                        {"query_proportion", stats.query_proportion()},
                        {"n", stats.n},
                        {"scored", stats.scored},
                        {"correct", stats.correct},
                        {"large_n", stats.large_n}};
    out += line.dump();
    out += '\n';
  }
  nlohmann::json overall{{"category", "__overall__"},
                         {"accuracy", overall_accuracy()},
                         {"query_proportion", overall_query_proportion()},
                         {"n", total},
                         {"scored", scored},
                         {"correct", correct},
                         {"large_n", large_count},
                         {"unscored", unscored},
                         {"total_cost_micro", total_cost_micro}};
  if (small_only_accuracy) overall["small_only_accuracy"] = *small_only_accuracy;
  if (large_only_accuracy) overall["large_only_accuracy"] = *large_only_accuracy;
  if (!metadata.empty()) overall["metadata"] = metadata;
  out += overall.dump();
  out += '\n';
  return out;
}

// ---------------------------------------------------------------------------
// BLEU
// ---------------------------------------------------------------------------

struct BleuScore {
  std::array<double, 4> bleu_n{0.0, 0.0, 0.0, 0.0};  // cumulative BLEU-1..4
  double brevity_penalty = 1.0;
  double mean = 0.0;  // arithmetic mean of the reported bleu_n values
  int max_n = 4;
  /// Set when the hypothesis is shorter than some requested n, forcing
  /// those levels to 0.
  bool shortness_flag = false;
};

/// Corpus-level BLEU state: clipped n-gram matches and totals
/// accumulated across sentence pairs.
class BleuAccumulator {
 public:
  explicit BleuAccumulator(int max_n = 4) : max_n_(max_n) {
    if (max_n < 1 || max_n > 4) throw DomainError("bleu supports n in 1..4");
  }

  void add(const std::vector<std::string>& hypothesis,
           const std::vector<std::vector<std::string>>& references) {
    if (hypothesis.empty()) throw DomainError("bleu: empty hypothesis");
    if (references.empty()) throw DomainError("bleu: no references");
    for (const auto& ref : references)
      if (ref.empty()) throw DomainError("bleu: empty reference");

    hypothesis_length_ += hypothesis.size();
    reference_length_ += closest_reference_length(hypothesis.size(), references);

    for (int n = 1; n <= max_n_; ++n) {
      if (hypothesis.size() < static_cast<std::size_t>(n)) {
        shortness_ = true;
        continue;
      }
      std::unordered_map<std::string, std::size_t> hyp_counts = ngram_counts(hypothesis, n);
      std::unordered_map<std::string, std::size_t> ref_max;
      for (const auto& ref : references) {
        for (const auto& [gram, count] : ngram_counts(ref, n)) {
          auto& best = ref_max[gram];
          best = std::max(best, count);
        }
      }
      for (const auto& [gram, count] : hyp_counts) {
        auto it = ref_max.find(gram);
        if (it != ref_max.end()) matches_[n - 1] += std::min(count, it->second);
      }
      totals_[n - 1] += hypothesis.size() - n + 1;
    }
  }

  BleuScore score() const {
    if (hypothesis_length_ == 0) throw DomainError("bleu: nothing accumulated");
    BleuScore result;
    result.max_n = max_n_;
    result.shortness_flag = shortness_;
    const double c = static_cast<double>(hypothesis_length_);
    const double r = static_cast<double>(reference_length_);
    result.brevity_penalty = c < r ? std::exp(1.0 - r / c) : 1.0;

    double log_sum = 0.0;
    bool dead = false;
    for (int n = 1; n <= max_n_; ++n) {
      const double precision =
          totals_[n - 1] == 0
              ? 0.0
              : static_cast<double>(matches_[n - 1]) / static_cast<double>(totals_[n - 1]);
      if (precision <= 0.0) dead = true;
      if (!dead) log_sum += std::log(precision);
      result.bleu_n[n - 1] =
          dead ? 0.0 : result.brevity_penalty * std::exp(log_sum / static_cast<double>(n));
    }
    double sum = 0.0;
    for (int n = 1; n <= max_n_; ++n) sum += result.bleu_n[n - 1];
    result.mean = sum / static_cast<double>(max_n_);
    return result;
  }

 private:
  static std::unordered_map<std::string, std::size_t> ngram_counts(
      const std::vector<std::string>& tokens, int n) {
    std::unordered_map<std::string, std::size_t> counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      std::string gram;
      for (int k = 0; k < n; ++k) {
        if (k) gram += '\x1f';  // unit separator keeps tokens unambiguous
        gram += tokens[i + k];
      }
      ++counts[gram];
    }
    return counts;
  }

  static std::size_t closest_reference_length(
      std::size_t hyp_len, const std::vector<std::vector<std::string>>& references) {
    std::size_t best = references.front().size();
    for (const auto& ref : references) {
      const auto diff = [&](std::size_t len) {
        return len > hyp_len ? len - hyp_len : hyp_len - len;
      };
      if (diff(ref.size()) < diff(best) || (diff(ref.size()) == diff(best) && ref.size() < best))
        best = ref.size();
    }
    return best;
  }

  int max_n_;
  std::array<std::size_t, 4> matches_{0, 0, 0, 0};
  std::array<std::size_t, 4> totals_{0, 0, 0, 0};
  std::size_t hypothesis_length_ = 0;
  std::size_t reference_length_ = 0;
  bool shortness_ = false;
};

/// Single-pair BLEU: modified n-gram precision with clipping, geometric
/// mean over orders 1..n, and brevity penalty exp(1 - r/c) when c < r.
inline BleuScore bleu(const std::vector<std::string>& hypothesis,
                      const std::vector<std::vector<std::string>>& references, int max_n = 4) {
  BleuAccumulator acc(max_n);
  acc.add(hypothesis, references);
  return acc.score();
}

}  // namespace shuntgate::metrics
