#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "shuntgate/errors.hpp"

namespace shuntgate::core {

/// Absolute tolerance for every probability-mass check in the library.
inline constexpr double kProbTolerance = 1e-9;

/// Raw per-class scores produced by a model head before normalization.
struct LogitVector {
  std::vector<double> values;
};

/// Normalized confidence distribution over candidate classes.
/// `probs[i]` is the confidence assigned to `class_ids[i]`.
struct ProbabilityVector {
  std::vector<double> probs;
  std::vector<std::string> class_ids;

  std::size_t size() const { return probs.size(); }

  /// Throws DomainError unless this is a valid distribution: non-empty,
  /// parallel arrays, entries in [0, 1], mass 1 within kProbTolerance.
  void validate() const {
    if (probs.empty()) throw DomainError("probability vector is empty");
    if (probs.size() != class_ids.size())
      throw DomainError("probability vector has mismatched probs/class_ids lengths");
    double sum = 0.0;
    for (double p : probs) {
      if (!std::isfinite(p) || p < -kProbTolerance || p > 1.0 + kProbTolerance)
        throw DomainError("probability entry outside [0, 1]");
      sum += p;
    }
    if (std::abs(sum - 1.0) > kProbTolerance)
      throw DomainError("probability mass does not sum to 1");
  }

  std::size_t argmax_index() const {
    if (probs.empty()) throw DomainError("probability vector is empty");
    return static_cast<std::size_t>(
        std::max_element(probs.begin(), probs.end()) - probs.begin());
  }

  const std::string& argmax_class() const { return class_ids[argmax_index()]; }

  double max_prob() const { return probs[argmax_index()]; }

  double prob_of(const std::string& class_id) const {
    for (std::size_t i = 0; i < class_ids.size(); ++i)
      if (class_ids[i] == class_id) return probs[i];
    throw DomainError("class id not present in probability vector: " + class_id);
  }

  bool contains(const std::string& class_id) const {
    return std::find(class_ids.begin(), class_ids.end(), class_id) != class_ids.end();
  }
};

/// Joint probability mass p(x, y) over finite alphabets, row-major in x.
struct JointDistribution {
  std::size_t n_x = 0;
  std::size_t n_y = 0;
  std::vector<double> mass;

  double at(std::size_t x, std::size_t y) const { return mass[x * n_y + y]; }

  void validate() const {
    if (n_x == 0 || n_y == 0 || mass.size() != n_x * n_y)
      throw DomainError("joint distribution has inconsistent shape");
    double sum = 0.0;
    for (double m : mass) {
      if (!std::isfinite(m) || m < 0.0) throw DomainError("joint mass entry is negative");
      sum += m;
    }
    if (std::abs(sum - 1.0) > kProbTolerance)
      throw DomainError("joint mass does not sum to 1");
  }
};

/// Entropies in nats for a joint table: H(X), H(X|Y) and I(X;Y).
struct EntropyReport {
  double h_x = 0.0;
  double h_x_given_y = 0.0;
  double mutual_information = 0.0;
};

namespace detail {
inline double plogp(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }
}  // namespace detail

/// Numerically stabilized softmax.  Shift-invariant by construction:
/// the max logit is subtracted before exponentiation, so any finite
/// input yields a valid distribution.
inline ProbabilityVector softmax(const LogitVector& logits,
                                 std::vector<std::string> class_ids = {}) {
  if (logits.values.empty()) throw DomainError("softmax: empty logit vector");
  for (double z : logits.values)
    if (!std::isfinite(z)) throw DomainError("softmax: non-finite logit");
  if (!class_ids.empty() && class_ids.size() != logits.values.size())
    throw DomainError("softmax: class id count does not match logit count");

  const double shift = *std::max_element(logits.values.begin(), logits.values.end());
  ProbabilityVector out;
  out.probs.reserve(logits.values.size());
  double sum = 0.0;
  for (double z : logits.values) {
    const double e = std::exp(z - shift);
    out.probs.push_back(e);
    sum += e;
  }
  for (double& p : out.probs) p /= sum;

  if (class_ids.empty()) {
    out.class_ids.reserve(out.probs.size());
    for (std::size_t i = 0; i < out.probs.size(); ++i)
      out.class_ids.push_back(std::to_string(i));
  } else {
    out.class_ids = std::move(class_ids);
  }
  return out;
}

/// Shannon entropy -sum p log p in nats, with the 0 log 0 = 0 convention.
/// Result lies in [0, log N].
inline double entropy(const ProbabilityVector& p) {
  p.validate();
  double h = 0.0;
  for (double pi : p.probs) h -= detail::plogp(pi);
  return h < 0.0 ? 0.0 : h;
}

/// H(X), H(X|Y) and I(X;Y) by direct summation over the joint table.
/// H(X|Y) = H(X,Y) - H(Y); the chain rule guarantees H(X|Y) <= H(X).
inline EntropyReport conditional_entropy(const JointDistribution& joint) {
  joint.validate();
  std::vector<double> p_x(joint.n_x, 0.0), p_y(joint.n_y, 0.0);
  double h_xy = 0.0;
  for (std::size_t x = 0; x < joint.n_x; ++x) {
    for (std::size_t y = 0; y < joint.n_y; ++y) {
      const double m = joint.at(x, y);
      p_x[x] += m;
      p_y[y] += m;
      h_xy -= detail::plogp(m);
    }
  }
  double h_x = 0.0, h_y = 0.0;
  for (double p : p_x) h_x -= detail::plogp(p);
  for (double p : p_y) h_y -= detail::plogp(p);

  EntropyReport report;
  report.h_x = h_x;
  report.h_x_given_y = h_xy - h_y;
  report.mutual_information = h_x - report.h_x_given_y;
  return report;
}

/// KL(p || q) = sum p log(p/q) in nats.  Returns +infinity when q has
/// zero mass somewhere p does not, so callers can skip such pairs
/// instead of handling an exception.
inline double kl_divergence(const ProbabilityVector& p, const ProbabilityVector& q) {
  p.validate();
  q.validate();
  if (p.size() != q.size())
    throw DomainError("kl_divergence: distributions differ in length");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.probs.size(); ++i) {
    const double pi = p.probs[i];
    if (pi <= 0.0) continue;
    if (q.probs[i] <= 0.0) return std::numeric_limits<double>::infinity();
    kl += pi * std::log(pi / q.probs[i]);
  }
  // Gibbs' inequality puts the true value at >= 0; round-off may leave
  // a residual within tolerance.
  return (kl < 0.0 && kl > -kProbTolerance) ? 0.0 : kl;
}

/// log(n): the entropy ceiling for a distribution over n candidates.
/// Shrinking the candidate set from N to M < N strictly lowers it.
inline double max_entropy_bound(std::size_t n_candidates) {
  if (n_candidates == 0) throw DomainError("max_entropy_bound: zero candidates");
  return std::log(static_cast<double>(n_candidates));
}

}  // namespace shuntgate::core
