#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "shuntgate/core.hpp"
#include "shuntgate/rng.hpp"
#include "test_support.hpp"

using namespace shuntgate;
using core::JointDistribution;
using core::LogitVector;
using core::ProbabilityVector;
using testsupport::random_distribution;
using testsupport::random_joint;
using testsupport::random_product_joint;

TEST_CASE("softmax of uniform logits is uniform") {
  const auto p = core::softmax(LogitVector{{0.0, 0.0, 0.0}});
  p.validate();
  for (double pi : p.probs) CHECK(pi == Catch::Approx(1.0 / 3.0).margin(1e-12));
}

TEST_CASE("softmax is shift invariant") {
  rng::Rng r(101);
  for (int iter = 0; iter < 200; ++iter) {
    LogitVector z;
    const std::size_t n = 2 + r.uniform_index(8);
    for (std::size_t i = 0; i < n; ++i) z.values.push_back(r.uniform(-10.0, 10.0));
    LogitVector shifted = z;
    const double c = r.uniform(-50.0, 50.0);
    for (double& v : shifted.values) v += c;

    const auto a = core::softmax(z);
    const auto b = core::softmax(shifted);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(std::abs(a.probs[i] - b.probs[i]) < 1e-12);
    CHECK(a.argmax_index() == b.argmax_index());
  }
}

TEST_CASE("softmax matches the closed-form two-logit value") {
  // softmax([1, 2]) = [1/(1+e), e/(1+e)]
  const auto p = core::softmax(LogitVector{{1.0, 2.0}});
  CHECK(p.probs[0] == Catch::Approx(0.2689414213699951).epsilon(1e-12));
  CHECK(p.probs[1] == Catch::Approx(0.7310585786300049).epsilon(1e-12));
}

TEST_CASE("softmax sums to 1 and preserves argmax across random logits") {
  rng::Rng r(202);
  for (int iter = 0; iter < 500; ++iter) {
    LogitVector z;
    const std::size_t n = 1 + r.uniform_index(20);
    for (std::size_t i = 0; i < n; ++i) z.values.push_back(r.uniform(-300.0, 300.0));
    const auto p = core::softmax(z);
    double sum = 0.0;
    for (double pi : p.probs) sum += pi;
    CHECK(std::abs(sum - 1.0) <= core::kProbTolerance);
    const auto argmax_z = static_cast<std::size_t>(
        std::max_element(z.values.begin(), z.values.end()) - z.values.begin());
    CHECK(p.argmax_index() == argmax_z);
  }
}

TEST_CASE("softmax rejects bad input") {
  CHECK_THROWS_AS(core::softmax(LogitVector{}), DomainError);
  CHECK_THROWS_AS(core::softmax(LogitVector{{1.0, std::numeric_limits<double>::infinity()}}),
                  DomainError);
  CHECK_THROWS_AS(core::softmax(LogitVector{{std::nan("")}}), DomainError);
  CHECK_THROWS_AS(core::softmax(LogitVector{{1.0, 2.0}}, {"only-one"}), DomainError);
}

TEST_CASE("entropy of the uniform distribution is log N") {
  ProbabilityVector p{{0.25, 0.25, 0.25, 0.25}, {"a", "b", "c", "d"}};
  CHECK(core::entropy(p) == Catch::Approx(std::log(4.0)).margin(1e-12));
}

TEST_CASE("entropy of a degenerate distribution is zero") {
  ProbabilityVector p{{1.0, 0.0, 0.0}, {"a", "b", "c"}};
  CHECK(core::entropy(p) == 0.0);
}

TEST_CASE("entropy matches direct summation on a fixed case") {
  // -(0.5 ln 0.5 + 0.25 ln 0.25 + 0.25 ln 0.25)
  ProbabilityVector p{{0.5, 0.25, 0.25}, {"a", "b", "c"}};
  CHECK(core::entropy(p) == Catch::Approx(1.0397207708399179).epsilon(1e-12));
}

TEST_CASE("entropy stays within [0, log N] and only uniform attains the top") {
  rng::Rng r(303);
  for (int iter = 0; iter < 2000; ++iter) {
    const std::size_t n = 2 + r.uniform_index(16);
    const auto p = random_distribution(r, n);
    const double h = core::entropy(p);
    CHECK(h >= 0.0);
    CHECK(h <= core::max_entropy_bound(n) + core::kProbTolerance);
  }
  ProbabilityVector uniform{{0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1},
                            {"0", "1", "2", "3", "4", "5", "6", "7", "8", "9"}};
  CHECK(std::abs(core::entropy(uniform) - core::max_entropy_bound(10)) <= 1e-9);
}

TEST_CASE("entropy rejects invalid distributions") {
  CHECK_THROWS_AS(core::entropy(ProbabilityVector{{0.5, 0.4}, {"a", "b"}}), DomainError);
  CHECK_THROWS_AS(core::entropy(ProbabilityVector{{}, {}}), DomainError);
  CHECK_THROWS_AS(core::entropy(ProbabilityVector{{1.2, -0.2}, {"a", "b"}}), DomainError);
}

TEST_CASE("conditional entropy: independence gives equality") {
  rng::Rng r(404);
  for (int iter = 0; iter < 200; ++iter) {
    const auto j = random_product_joint(r, 2 + r.uniform_index(5), 2 + r.uniform_index(5));
    const auto rep = core::conditional_entropy(j);
    CHECK(std::abs(rep.h_x_given_y - rep.h_x) < 1e-9);
    CHECK(std::abs(rep.mutual_information) < 1e-9);
  }
}

TEST_CASE("conditional entropy: perfectly correlated table has H(X|Y) = 0") {
  JointDistribution j;
  j.n_x = 2;
  j.n_y = 2;
  j.mass = {0.5, 0.0, 0.0, 0.5};
  const auto rep = core::conditional_entropy(j);
  CHECK(rep.h_x_given_y == Catch::Approx(0.0).margin(1e-12));
  CHECK(rep.h_x == Catch::Approx(std::log(2.0)).margin(1e-12));
  CHECK(rep.mutual_information == Catch::Approx(std::log(2.0)).margin(1e-12));
}

TEST_CASE("conditioning never raises entropy on random tables") {
  rng::Rng r(505);
  for (int iter = 0; iter < 1000; ++iter) {
    const auto j = random_joint(r, 3, 3);
    const auto rep = core::conditional_entropy(j);
    CHECK(rep.h_x_given_y <= rep.h_x + 1e-9);
    // Random dense tables are dependent almost surely.
    CHECK(rep.h_x_given_y < rep.h_x);
    CHECK(rep.mutual_information >= -1e-9);
    CHECK(std::abs(rep.mutual_information - (rep.h_x - rep.h_x_given_y)) < 1e-9);
  }
}

TEST_CASE("conditional entropy rejects bad mass") {
  JointDistribution j;
  j.n_x = 2;
  j.n_y = 2;
  j.mass = {0.5, 0.1, 0.1, 0.5};
  CHECK_THROWS_AS(core::conditional_entropy(j), DomainError);
  j.mass = {0.7, -0.2, 0.3, 0.2};
  CHECK_THROWS_AS(core::conditional_entropy(j), DomainError);
}

TEST_CASE("kl divergence identity, fixed value, and support policy") {
  ProbabilityVector p{{0.3, 0.7}, {"a", "b"}};
  CHECK(core::kl_divergence(p, p) == Catch::Approx(0.0).margin(1e-12));

  ProbabilityVector point{{1.0, 0.0}, {"a", "b"}};
  ProbabilityVector half{{0.5, 0.5}, {"a", "b"}};
  CHECK(core::kl_divergence(point, half) == Catch::Approx(std::log(2.0)).epsilon(1e-12));

  // q lacks mass where p has it: distinguished infinity, not an error.
  CHECK(std::isinf(core::kl_divergence(half, point)));

  ProbabilityVector three{{0.2, 0.3, 0.5}, {"a", "b", "c"}};
  CHECK_THROWS_AS(core::kl_divergence(p, three), DomainError);
}

TEST_CASE("kl divergence is non-negative over random pairs") {
  rng::Rng r(606);
  for (int iter = 0; iter < 1000; ++iter) {
    const std::size_t n = 2 + r.uniform_index(10);
    const auto p = random_distribution(r, n);
    const auto q = random_distribution(r, n);
    CHECK(core::kl_divergence(p, q) >= 0.0);
  }
}

TEST_CASE("max entropy bound") {
  CHECK(core::max_entropy_bound(1) == 0.0);
  CHECK(core::max_entropy_bound(100) > core::max_entropy_bound(10));
  CHECK_THROWS_AS(core::max_entropy_bound(0), DomainError);
}

TEST_CASE("entropy bound is approached by near-uniform samples") {
  rng::Rng r(707);
  for (std::size_t n : {2ul, 10ul, 100ul}) {
    const double bound = core::max_entropy_bound(n);
    double best = 0.0;
    for (int iter = 0; iter < 2000; ++iter) {
      ProbabilityVector p;
      p.probs.resize(n);
      p.class_ids.resize(n, "x");
      double sum = 0.0;
      for (auto& v : p.probs) {
        v = 1.0 + r.uniform(-1e-4, 1e-4);
        sum += v;
      }
      for (auto& v : p.probs) v /= sum;
      const double h = core::entropy(p);
      CHECK(h <= bound + 1e-9);
      best = std::max(best, h);
    }
    CHECK(bound - best < 1e-3);
  }
}
