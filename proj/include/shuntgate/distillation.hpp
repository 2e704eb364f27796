#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "shuntgate/backends.hpp"
#include "shuntgate/core.hpp"
#include "shuntgate/errors.hpp"
#include "shuntgate/rng.hpp"

namespace shuntgate::distill {

using backends::CostLedger;
using backends::Dataset;
using backends::ModelBackend;
using backends::Sample;
using core::ProbabilityVector;

/// Argument order of the distillation loss.  StudentFirst follows the
/// training equations as written, KL(student(x), teacher); TeacherFirst
/// is the conventional KL(teacher, student).
enum class KlOrder { StudentFirst, TeacherFirst };

// ---------------------------------------------------------------------------
// Reference trainable classifier
// ---------------------------------------------------------------------------

/// Linear-softmax classifier over dense feature vectors: forward pass is
/// softmax(Wx + b).  Trained with plain mini-batch gradient descent so
/// every gradient admits finite-difference verification.
class LinearSoftmaxClassifier {
 public:
  LinearSoftmaxClassifier(std::vector<std::string> class_ids, std::size_t n_features,
                          double learning_rate = 0.1, std::uint64_t seed = 0)
      : class_ids_(std::move(class_ids)),
        n_features_(n_features),
        learning_rate_(learning_rate),
        seed_(seed),
        weights_(class_ids_.size() * n_features, 0.0),
        bias_(class_ids_.size(), 0.0) {
    if (class_ids_.empty()) throw DomainError("classifier needs at least one class");
    if (n_features_ == 0) throw DomainError("classifier needs at least one feature");
    if (learning_rate_ <= 0.0) throw DomainError("learning rate must be positive");
  }

  const std::vector<std::string>& class_ids() const { return class_ids_; }
  std::size_t n_classes() const { return class_ids_.size(); }
  std::size_t n_features() const { return n_features_; }
  double learning_rate() const { return learning_rate_; }
  void set_learning_rate(double lr) {
    if (lr <= 0.0) throw DomainError("learning rate must be positive");
    learning_rate_ = lr;
  }
  std::uint64_t seed() const { return seed_; }

  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& bias() const { return bias_; }
  double& weight_at(std::size_t cls, std::size_t feat) { return weights_[cls * n_features_ + feat]; }
  double weight_at(std::size_t cls, std::size_t feat) const { return weights_[cls * n_features_ + feat]; }
  double& bias_at(std::size_t cls) { return bias_[cls]; }

  std::vector<double> logits(const std::vector<double>& x) const {
    if (x.size() != n_features_)
      throw DomainError("feature vector length does not match classifier");
    std::vector<double> z(n_classes(), 0.0);
    for (std::size_t c = 0; c < n_classes(); ++c) {
      double acc = bias_[c];
      const double* row = &weights_[c * n_features_];
      for (std::size_t f = 0; f < n_features_; ++f) acc += row[f] * x[f];
      z[c] = acc;
    }
    return z;
  }

  ProbabilityVector forward(const std::vector<double>& x) const {
    return core::softmax(core::LogitVector{logits(x)}, class_ids_);
  }

  struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad_weights;  // same layout as weights
    std::vector<double> grad_bias;
  };

  /// Loss and analytic gradient of the KL objective at one sample.
  /// StudentFirst with a teacher that has zero mass anywhere returns an
  /// infinite loss and a zero gradient; callers skip such pairs.
  LossGrad kl_loss_gradient(const std::vector<double>& x, const ProbabilityVector& teacher,
                            KlOrder order) const {
    check_teacher(teacher);
    const ProbabilityVector student = forward(x);

    LossGrad out;
    out.grad_weights.assign(weights_.size(), 0.0);
    out.grad_bias.assign(n_classes(), 0.0);

    std::vector<double> grad_z(n_classes(), 0.0);
    if (order == KlOrder::TeacherFirst) {
      // KL(t || s) = sum t log(t/s); d/dz = s - t.  A student that has
      // underflowed to zero on a supported class makes the divergence
      // infinite; the pair is skipped upstream.
      double loss = 0.0;
      for (std::size_t i = 0; i < n_classes(); ++i) {
        const double t = teacher.probs[i];
        if (t > 0.0) {
          if (student.probs[i] <= 0.0) {
            out.loss = std::numeric_limits<double>::infinity();
            return out;
          }
          loss += t * std::log(t / student.probs[i]);
        }
        grad_z[i] = student.probs[i] - t;
      }
      out.loss = loss < 0.0 && loss > -core::kProbTolerance ? 0.0 : loss;
    } else {
      // KL(s || t) = sum s log(s/t); d/dz_j = s_j (a_j - L) with
      // a_i = log s_i - log t_i and L the loss itself.  Terms with
      // s_i = 0 contribute 0 to both loss and gradient (the s -> 0
      // limit); a teacher zero under student support is infinite.
      for (std::size_t i = 0; i < n_classes(); ++i)
        if (teacher.probs[i] <= 0.0 && student.probs[i] > 0.0) {
          out.loss = std::numeric_limits<double>::infinity();
          return out;
        }
      std::vector<double> a(n_classes(), 0.0);
      double loss = 0.0;
      for (std::size_t i = 0; i < n_classes(); ++i) {
        if (student.probs[i] <= 0.0) continue;
        a[i] = std::log(student.probs[i]) - std::log(teacher.probs[i]);
        loss += student.probs[i] * a[i];
      }
      for (std::size_t i = 0; i < n_classes(); ++i)
        grad_z[i] = student.probs[i] > 0.0 ? student.probs[i] * (a[i] - loss) : 0.0;
      out.loss = loss < 0.0 && loss > -core::kProbTolerance ? 0.0 : loss;
    }

    for (std::size_t c = 0; c < n_classes(); ++c) {
      double* row = &out.grad_weights[c * n_features_];
      for (std::size_t f = 0; f < n_features_; ++f) row[f] = grad_z[c] * x[f];
      out.grad_bias[c] = grad_z[c];
    }
    return out;
  }

  void apply_gradient(const LossGrad& grad, double scale = 1.0) {
    const double step = learning_rate_ * scale;
    for (std::size_t i = 0; i < weights_.size(); ++i) weights_[i] -= step * grad.grad_weights[i];
    for (std::size_t i = 0; i < bias_.size(); ++i) bias_[i] -= step * grad.grad_bias[i];
  }

  /// One averaged gradient step over a mini-batch of (features, teacher)
  /// pairs.  Returns the mean loss over the finite pairs; infinite pairs
  /// are skipped and counted through `skipped`.
  template <typename Pairs>
  double batch_step(const Pairs& batch, KlOrder order, std::size_t* skipped = nullptr) {
    if (batch.empty()) return 0.0;
    LossGrad total;
    total.grad_weights.assign(weights_.size(), 0.0);
    total.grad_bias.assign(n_classes(), 0.0);
    double loss_sum = 0.0;
    std::size_t used = 0;
    for (const auto& [x, teacher] : batch) {
      LossGrad g = kl_loss_gradient(*x, *teacher, order);
      if (std::isinf(g.loss)) {
        if (skipped) ++*skipped;
        continue;
      }
      for (std::size_t i = 0; i < total.grad_weights.size(); ++i)
        total.grad_weights[i] += g.grad_weights[i];
      for (std::size_t i = 0; i < total.grad_bias.size(); ++i)
        total.grad_bias[i] += g.grad_bias[i];
      loss_sum += g.loss;
      ++used;
    }
    if (used == 0) return 0.0;
    apply_gradient(total, 1.0 / static_cast<double>(used));
    return loss_sum / static_cast<double>(used);
  }

  /// Supervised cross-entropy training against one-hot gold labels.
  void train_supervised(const Dataset& data, int epochs, int batch_size,
                        std::uint64_t shuffle_seed) {
    if (epochs <= 0 || batch_size <= 0)
      throw DomainError("training needs positive epochs and batch size");
    std::vector<std::pair<const std::vector<double>*, ProbabilityVector>> examples;
    for (const auto& sample : data) {
      if (!sample.gold_label) continue;
      examples.emplace_back(&sample.features(), one_hot(*sample.gold_label));
    }
    if (examples.empty()) throw DomainError("no labeled samples to train on");

    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    rng::Rng shuffler(shuffle_seed);
    using Pair = std::pair<const std::vector<double>*, const ProbabilityVector*>;
    for (int epoch = 0; epoch < epochs; ++epoch) {
      shuffle(order, shuffler);
      for (std::size_t start = 0; start < order.size(); start += batch_size) {
        std::vector<Pair> batch;
        for (std::size_t i = start; i < order.size() && i < start + batch_size; ++i)
          batch.emplace_back(examples[order[i]].first, &examples[order[i]].second);
        batch_step(batch, KlOrder::TeacherFirst);
      }
    }
  }

  double accuracy(const Dataset& data) const {
    std::size_t scored = 0, correct = 0;
    for (const auto& sample : data) {
      if (!sample.gold_label) continue;
      ++scored;
      if (forward(sample.features()).argmax_class() == *sample.gold_label) ++correct;
    }
    if (scored == 0) throw DomainError("accuracy over a slice with no gold labels");
    return static_cast<double>(correct) / static_cast<double>(scored);
  }

  ProbabilityVector one_hot(const std::string& cls) const {
    ProbabilityVector p;
    p.class_ids = class_ids_;
    p.probs.assign(n_classes(), 0.0);
    auto it = std::find(class_ids_.begin(), class_ids_.end(), cls);
    if (it == class_ids_.end()) throw DomainError("unknown class label: " + cls);
    p.probs[static_cast<std::size_t>(it - class_ids_.begin())] = 1.0;
    return p;
  }

  bool same_architecture(const LinearSoftmaxClassifier& other) const {
    return class_ids_ == other.class_ids_ && n_features_ == other.n_features_;
  }

  bool parameters_equal(const LinearSoftmaxClassifier& other) const {
    return weights_ == other.weights_ && bias_ == other.bias_;
  }

  // --- checkpoint io (JSON with shape header; round-trips bit-exactly) ---

  nlohmann::json to_json() const {
    return nlohmann::json{{"format", "shuntgate-linear-classifier"},
                          {"version", 1},
                          {"seed", seed_},
                          {"learning_rate", learning_rate_},
                          {"class_ids", class_ids_},
                          {"n_features", n_features_},
                          {"weights", weights_},
                          {"bias", bias_}};
  }

  static LinearSoftmaxClassifier from_json(const nlohmann::json& j) {
    try {
      if (j.at("format").get<std::string>() != "shuntgate-linear-classifier")
        throw DomainError("checkpoint has wrong format tag");
      if (j.at("version").get<int>() != 1)
        throw DomainError("unsupported checkpoint version");
      LinearSoftmaxClassifier model(j.at("class_ids").get<std::vector<std::string>>(),
                                    j.at("n_features").get<std::size_t>(),
                                    j.at("learning_rate").get<double>(),
                                    j.at("seed").get<std::uint64_t>());
      model.weights_ = j.at("weights").get<std::vector<double>>();
      model.bias_ = j.at("bias").get<std::vector<double>>();
      if (model.weights_.size() != model.n_classes() * model.n_features_ ||
          model.bias_.size() != model.n_classes())
        throw DomainError("checkpoint parameter shapes are inconsistent");
      return model;
    } catch (const nlohmann::json::exception& e) {
      throw DomainError(std::string("malformed checkpoint: ") + e.what());
    }
  }

  std::string checkpoint_string() const { return to_json().dump(); }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DomainError("cannot write checkpoint: " + path);
    out << to_json().dump(2) << '\n';
  }

  static LinearSoftmaxClassifier load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DomainError("cannot read checkpoint: " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DomainError(std::string("malformed checkpoint: ") + e.what());
    }
    return from_json(j);
  }

 private:
  void check_teacher(const ProbabilityVector& teacher) const {
    teacher.validate();
    if (teacher.class_ids != class_ids_)
      throw DomainError("teacher distribution classes do not match classifier");
  }

  static void shuffle(std::vector<std::size_t>& order, rng::Rng& rng) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_index(i)]);
  }

  std::vector<std::string> class_ids_;
  std::size_t n_features_;
  double learning_rate_;
  std::uint64_t seed_;
  std::vector<double> weights_;
  std::vector<double> bias_;
};

/// Backend view over a linear classifier.  Classification over a
/// candidate subset renormalizes the softmax over just those logits,
/// which is how a pruned prediction space is served.
class LinearBackend : public ModelBackend {
 public:
  LinearBackend(std::string name, const LinearSoftmaxClassifier* model,
                backends::CostProfile cost = {}, CostLedger* ledger = nullptr)
      : name_(std::move(name)), model_(model), cost_(cost), ledger_(ledger) {
    if (!model_) throw DomainError("linear backend requires a model");
  }

  std::string name() const override { return name_; }
  backends::CostProfile cost_profile() const override { return cost_; }

  ProbabilityVector classify(const Sample& sample, const std::vector<std::string>& candidates,
                             const std::optional<std::string>& prompt = std::nullopt,
                             backends::CallStats* stats = nullptr) override {
    if (candidates.empty()) throw DomainError("classify: empty candidate list");
    const std::vector<double> z = model_->logits(sample.features());
    core::LogitVector selected;
    selected.values.reserve(candidates.size());
    for (const auto& cls : candidates) {
      auto it = std::find(model_->class_ids().begin(), model_->class_ids().end(), cls);
      if (it == model_->class_ids().end())
        throw DomainError("candidate unknown to backend " + name_ + ": " + cls);
      selected.values.push_back(z[static_cast<std::size_t>(it - model_->class_ids().begin())]);
    }
    ProbabilityVector out = core::softmax(selected, candidates);

    const std::int64_t in_tokens = prompt ? backends::token_count(*prompt) : sample.payload_tokens();
    const std::int64_t cost = cost_.call_cost(in_tokens, 1);
    if (stats) *stats = backends::CallStats{in_tokens, 1, cost};
    if (ledger_ && cost > 0) ledger_->record({name_, sample.id, in_tokens, 1, cost});
    return out;
  }

 private:
  std::string name_;
  const LinearSoftmaxClassifier* model_;
  backends::CostProfile cost_;
  CostLedger* ledger_;
};

// ---------------------------------------------------------------------------
// Partitioning (training data flow)
// ---------------------------------------------------------------------------

struct TeacherExample {
  Sample sample;
  ProbabilityVector teacher;
};

/// The x1/x2/x3 split: x1 carries frozen specific-small teachers, x3
/// (a subset of x2) carries frozen large-model teachers.  Teachers are
/// cached here and never re-queried during training.
struct DistillationPlan {
  double delta = 0.97;
  std::vector<std::string> candidates;
  std::vector<TeacherExample> x1;
  std::vector<Sample> x2;
  std::vector<TeacherExample> x3;

  nlohmann::json to_json() const;
  static DistillationPlan from_json(const nlohmann::json& j);
};

/// Splits the dataset by small-model confidence against delta, queries
/// the large model only on the low-confidence slice x2, and keeps the
/// confident large answers as x3 teachers.
inline DistillationPlan partition(const Dataset& dataset, ModelBackend& specific_small,
                                  ModelBackend& large, double delta,
                                  const std::vector<std::string>& candidates) {
  if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must lie in (0, 1)");
  if (candidates.empty()) throw DomainError("partition: empty candidate list");

  DistillationPlan plan;
  plan.delta = delta;
  plan.candidates = candidates;
  for (const auto& sample : dataset) {
    const ProbabilityVector c_s1 = specific_small.classify(sample, candidates);
    if (c_s1.max_prob() > delta) {
      plan.x1.push_back({sample, c_s1});
    } else {
      plan.x2.push_back(sample);
      const ProbabilityVector c_l = large.classify(sample, candidates);
      if (c_l.max_prob() > delta) plan.x3.push_back({sample, c_l});
    }
  }
  if (plan.x1.empty() && plan.x3.empty())
    throw DomainError("distillation infeasible: no confident teacher on either side");
  return plan;
}

// ---------------------------------------------------------------------------
// 2-stage confidence distillation
// ---------------------------------------------------------------------------

struct DistillationOptions {
  int epochs = 30;
  int batch_size = 16;
  /// Alternation pattern: ratio_large batches from x3, then ratio_self
  /// batches from x1, repeating.  An epoch ends once every pool has
  /// completed at least one full pass; the smaller pool recycles with a
  /// reshuffle so the mix stays even throughout the epoch.
  int ratio_large = 1;
  int ratio_self = 1;
  KlOrder order = KlOrder::StudentFirst;
  /// Ablation switch: drop the self-distillation (x1) term entirely.
  bool use_self_distillation = true;
  /// Stop when both epoch losses change by less than this relative
  /// amount for `plateau_epochs` consecutive epochs.
  double plateau_rel_change = 1e-4;
  int plateau_epochs = 3;
  std::uint64_t shuffle_seed = 0;
};

struct DistillationReport {
  std::vector<double> loss_ls_curve;      // per mini-batch, x3 vs large teacher
  std::vector<double> loss_s1s2_curve;    // per mini-batch, x1 vs specific teacher
  std::vector<double> loss_ls_epoch;      // epoch averages of the mini-batch losses
  std::vector<double> loss_s1s2_epoch;
  double pre_easy_accuracy = 0.0;
  double post_easy_accuracy = 0.0;
  double pre_hard_accuracy = 0.0;
  double post_hard_accuracy = 0.0;
  double forgetting_delta = 0.0;  // percentage points lost on the easy slice
  int epochs_run = 0;
  std::size_t skipped_infinite_pairs = 0;
};

namespace detail {

using FeatureTeacher = std::pair<const std::vector<double>*, const ProbabilityVector*>;

inline std::vector<FeatureTeacher> to_pairs(const std::vector<TeacherExample>& pool) {
  std::vector<FeatureTeacher> pairs;
  pairs.reserve(pool.size());
  for (const auto& ex : pool) pairs.emplace_back(&ex.sample.features(), &ex.teacher);
  return pairs;
}

inline double pool_loss(const LinearSoftmaxClassifier& model,
                        const std::vector<FeatureTeacher>& pool, KlOrder order) {
  double sum = 0.0;
  std::size_t used = 0;
  for (const auto& [x, teacher] : pool) {
    const auto g = model.kl_loss_gradient(*x, *teacher, order);
    if (std::isinf(g.loss)) continue;
    sum += g.loss;
    ++used;
  }
  return used == 0 ? 0.0 : sum / static_cast<double>(used);
}

/// Reference accuracy of the model on a teacher pool: gold labels where
/// present, teacher argmax otherwise.
inline double pool_accuracy(const LinearSoftmaxClassifier& model,
                            const std::vector<TeacherExample>& pool) {
  if (pool.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& ex : pool) {
    const std::string reference =
        ex.sample.gold_label ? *ex.sample.gold_label : ex.teacher.argmax_class();
    if (model.forward(ex.sample.features()).argmax_class() == reference) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(pool.size());
}

}  // namespace detail

inline std::vector<std::size_t> shuffled_indices(std::size_t n, rng::Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
  return order;
}

/// Alternating KL distillation per the 2CD training loop: mini-batches
/// from x3 against the large teacher interleaved with mini-batches from
/// x1 against the frozen specific-small teacher.
inline DistillationReport distill(const DistillationPlan& plan, LinearSoftmaxClassifier& learnable,
                                  const DistillationOptions& options = {}) {
  if (options.epochs <= 0 || options.batch_size <= 0)
    throw DomainError("distillation needs positive epochs and batch size");
  if (options.ratio_large <= 0 || options.ratio_self <= 0)
    throw DomainError("alternation ratio parts must be positive");
  if (plan.x1.empty() && plan.x3.empty())
    throw DomainError("distillation infeasible: both teacher pools are empty");

  const auto large_pool = detail::to_pairs(plan.x3);
  const auto self_pool = options.use_self_distillation
                             ? detail::to_pairs(plan.x1)
                             : std::vector<detail::FeatureTeacher>{};

  DistillationReport report;
  report.pre_easy_accuracy = detail::pool_accuracy(learnable, plan.x1);
  report.pre_hard_accuracy = detail::pool_accuracy(learnable, plan.x3);

  std::string last_good = learnable.checkpoint_string();
  rng::Rng shuffler(options.shuffle_seed);
  int plateau_streak = 0;

  // Cycling cursor over one pool: reshuffles and wraps when drained, so
  // the alternation mix stays even regardless of pool-size imbalance.
  struct PoolCursor {
    const std::vector<detail::FeatureTeacher>* pool;
    std::vector<std::size_t> order;
    std::size_t next = 0;
    std::size_t consumed = 0;  // items drawn this epoch

    bool pass_done() const { return pool->empty() || consumed >= pool->size(); }

    std::vector<detail::FeatureTeacher> take(std::size_t batch_size, rng::Rng& rng) {
      std::vector<detail::FeatureTeacher> batch;
      if (pool->empty()) return batch;
      while (batch.size() < batch_size) {
        if (next >= order.size()) {
          order = shuffled_indices(pool->size(), rng);
          next = 0;
        }
        batch.push_back((*pool)[order[next++]]);
        ++consumed;
      }
      return batch;
    }
  };

  PoolCursor large_cursor{&large_pool, shuffled_indices(large_pool.size(), shuffler)};
  PoolCursor self_cursor{&self_pool, shuffled_indices(self_pool.size(), shuffler)};

  const std::size_t batch_size = static_cast<std::size_t>(options.batch_size);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    large_cursor.consumed = 0;
    self_cursor.consumed = 0;
    double ls_sum = 0.0, s1s2_sum = 0.0;
    std::size_t ls_batches = 0, s1s2_batches = 0;

    try {
      while (!large_cursor.pass_done() || !self_cursor.pass_done()) {
        for (int k = 0; k < options.ratio_large && !large_pool.empty(); ++k) {
          const auto batch = large_cursor.take(batch_size, shuffler);
          if (batch.empty()) break;
          const double loss =
              learnable.batch_step(batch, options.order, &report.skipped_infinite_pairs);
          if (!std::isfinite(loss))
            throw TrainingError("distillation diverged on the large-teacher loss", last_good);
          report.loss_ls_curve.push_back(loss);
          ls_sum += loss;
          ++ls_batches;
        }
        for (int k = 0; k < options.ratio_self && !self_pool.empty(); ++k) {
          const auto batch = self_cursor.take(batch_size, shuffler);
          if (batch.empty()) break;
          const double loss =
              learnable.batch_step(batch, options.order, &report.skipped_infinite_pairs);
          if (!std::isfinite(loss))
            throw TrainingError("distillation diverged on the self-distillation loss", last_good);
          report.loss_s1s2_curve.push_back(loss);
          s1s2_sum += loss;
          ++s1s2_batches;
        }
      }
    } catch (const DomainError& e) {
      // Inputs were validated at plan time; a domain failure mid-epoch
      // means the parameters blew up (non-finite logits).
      throw TrainingError(std::string("distillation diverged: ") + e.what(), last_good);
    }
    report.loss_ls_epoch.push_back(ls_batches ? ls_sum / static_cast<double>(ls_batches) : 0.0);
    report.loss_s1s2_epoch.push_back(
        s1s2_batches ? s1s2_sum / static_cast<double>(s1s2_batches) : 0.0);
    report.epochs_run = epoch + 1;
    last_good = learnable.checkpoint_string();

    if (report.loss_ls_epoch.size() >= 2) {
      const auto rel_change = [](const std::vector<double>& curve) {
        const double prev = curve[curve.size() - 2];
        const double cur = curve.back();
        return std::abs(prev - cur) / std::max(std::abs(prev), 1e-12);
      };
      const bool flat = rel_change(report.loss_ls_epoch) < options.plateau_rel_change &&
                        rel_change(report.loss_s1s2_epoch) < options.plateau_rel_change;
      plateau_streak = flat ? plateau_streak + 1 : 0;
      if (plateau_streak >= options.plateau_epochs) break;
    }
  }

  report.post_easy_accuracy = detail::pool_accuracy(learnable, plan.x1);
  report.post_hard_accuracy = detail::pool_accuracy(learnable, plan.x3);
  report.forgetting_delta = (report.pre_easy_accuracy - report.post_easy_accuracy) * 100.0;
  return report;
}

/// Accuracy lost on the originally-mastered slice, in percentage points.
/// Positive values indicate forgetting.
inline double forgetting_audit(const LinearSoftmaxClassifier& before,
                               const LinearSoftmaxClassifier& after, const Dataset& easy_slice) {
  if (!before.same_architecture(after))
    throw DomainError("forgetting audit requires identical architectures");
  if (easy_slice.empty()) throw DomainError("forgetting audit on an empty slice");
  return (before.accuracy(easy_slice) - after.accuracy(easy_slice)) * 100.0;
}

// ---------------------------------------------------------------------------
// Plan serialization
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json sample_to_json(const Sample& s) {
  nlohmann::json j{{"id", s.id}};
  if (s.has_text())
    j["payload"] = s.text();
  else
    j["payload"] = s.features();
  if (s.gold_label) j["gold_label"] = *s.gold_label;
  if (s.category) j["category"] = *s.category;
  return j;
}

inline Sample sample_from_json(const nlohmann::json& j) {
  Sample s;
  s.id = j.at("id").get<std::string>();
  const auto& payload = j.at("payload");
  if (payload.is_string())
    s.payload = payload.get<std::string>();
  else
    s.payload = payload.get<std::vector<double>>();
  if (j.contains("gold_label") && !j.at("gold_label").is_null())
    s.gold_label = j.at("gold_label").get<std::string>();
  if (j.contains("category") && !j.at("category").is_null())
    s.category = j.at("category").get<std::string>();
  s.validate();
  return s;
}

inline nlohmann::json teacher_example_to_json(const TeacherExample& ex) {
  return nlohmann::json{{"sample", sample_to_json(ex.sample)},
                        {"teacher", {{"probs", ex.teacher.probs}, {"class_ids", ex.teacher.class_ids}}}};
}

inline TeacherExample teacher_example_from_json(const nlohmann::json& j) {
  TeacherExample ex;
  ex.sample = sample_from_json(j.at("sample"));
  ex.teacher.probs = j.at("teacher").at("probs").get<std::vector<double>>();
  ex.teacher.class_ids = j.at("teacher").at("class_ids").get<std::vector<std::string>>();
  ex.teacher.validate();
  return ex;
}

}  // namespace detail

inline nlohmann::json DistillationPlan::to_json() const {
  nlohmann::json j{{"format", "shuntgate-distillation-plan"},
                   {"version", 1},
                   {"delta", delta},
                   {"candidates", candidates}};
  j["x1"] = nlohmann::json::array();
  for (const auto& ex : x1) j["x1"].push_back(detail::teacher_example_to_json(ex));
  j["x2"] = nlohmann::json::array();
  for (const auto& s : x2) j["x2"].push_back(detail::sample_to_json(s));
  j["x3"] = nlohmann::json::array();
  for (const auto& ex : x3) j["x3"].push_back(detail::teacher_example_to_json(ex));
  return j;
}

inline DistillationPlan DistillationPlan::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "shuntgate-distillation-plan")
      throw DomainError("plan file has wrong format tag");
    DistillationPlan plan;
    plan.delta = j.at("delta").get<double>();
    plan.candidates = j.at("candidates").get<std::vector<std::string>>();
    for (const auto& e : j.at("x1")) plan.x1.push_back(detail::teacher_example_from_json(e));
    for (const auto& e : j.at("x2")) plan.x2.push_back(detail::sample_from_json(e));
    for (const auto& e : j.at("x3")) plan.x3.push_back(detail::teacher_example_from_json(e));
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("malformed plan file: ") + e.what());
  }
}

}  // namespace shuntgate::distill
