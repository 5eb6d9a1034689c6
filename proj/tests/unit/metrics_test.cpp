#include <doctest.h>

#include <cmath>

#include "fsdnet/metrics.hpp"
#include "fsdnet/rng.hpp"

using namespace fsdnet;
using namespace fsdnet::metrics;

namespace {

// O(N^2) pairwise count; ties score one half.
double pairwise_auc(const std::vector<double>& p, const std::vector<std::uint8_t>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (y[j]) continue;
      pairs += 1.0;
      wins += p[i] > p[j] ? 1.0 : (p[i] == p[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

}  // namespace

TEST_CASE("auc examples") {
  using V = std::vector<double>;
  using L = std::vector<std::uint8_t>;
  CHECK(auc(V{0.9, 0.1}, L{1, 0}) == 1.0);
  CHECK(auc(V{0.1, 0.9}, L{1, 0}) == 0.0);
  CHECK(auc(V{0.5, 0.5, 0.5, 0.5}, L{1, 0, 1, 0}) == 0.5);
  CHECK(auc(V{0.8, 0.8, 0.3}, L{1, 0, 0}) == 0.75);
  CHECK_THROWS_AS(auc(V{0.1, 0.2}, L{1, 1}), MetricError);
  CHECK_THROWS_AS(auc(V{0.1, 0.2}, L{0, 0}), MetricError);
  CHECK_THROWS_AS(auc(V{0.1}, L{0, 1}), MetricError);
}

TEST_CASE("auc matches the pairwise oracle") {
  Rng rng(123);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> p(200);
    std::vector<std::uint8_t> y(200);
    for (std::size_t i = 0; i < 200; ++i) {
      // Coarse grid so ties are common.
      p[i] = std::round(rng.uniform() * (trial % 2 ? 20 : 1e6)) / 20.0;
      y[i] = static_cast<std::uint8_t>(rng.uniform() < 0.3 + 0.2 * p[i] / 50000.0);
    }
    y[0] = 1;
    y[1] = 0;
    const double fast = auc(p, y);
    CHECK(std::abs(fast - pairwise_auc(p, y)) <= 1e-12);

    // Strictly monotone transform keeps AUC; order reversal complements it.
    std::vector<double> t(p.size()), r(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      t[i] = std::log1p(p[i]) + p[i] - 7.0;
      r[i] = -p[i];
    }
    CHECK(std::abs(auc(t, y) - fast) <= 1e-12);
    CHECK(std::abs(auc(r, y) - (1.0 - fast)) <= 1e-12);
  }
}

TEST_CASE("logloss") {
  using V = std::vector<double>;
  using L = std::vector<std::uint8_t>;
  CHECK(logloss(V{0.5}, L{1}) == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(logloss(V{1.0, 0.0}, L{1, 0}) < 1e-6);
  CHECK(logloss(V{1.0, 0.0}, L{1, 0}) > 0.0);
  CHECK(std::isfinite(logloss(V{0.0}, L{1})));
  CHECK(logloss(V{0.0}, L{1}) == doctest::Approx(-std::log(kProbabilityClamp)));
  CHECK(logloss(V(4, 0.5), L{1, 0, 1, 0}) == doctest::Approx(std::log(2.0)));

  // Among constant predictors the base rate minimises the loss.
  const L labels{1, 0, 0, 1, 0, 0, 0, 1, 0, 0};  // base rate 0.3
  double best_p = 0, best = 1e9;
  for (int k = 1; k < 100; ++k) {
    const double q = k / 100.0;
    const double v = logloss(V(labels.size(), q), labels);
    if (v < best) {
      best = v;
      best_p = q;
    }
  }
  CHECK(best_p == doctest::Approx(0.3));

  const auto e = evaluate(V{0.9, 0.2, 0.4}, L{1, 0, 1});
  CHECK(e.n == 3);
  CHECK(e.positives == 2);
  CHECK(e.auc == 1.0);
}

TEST_CASE("welch t-test") {
  using V = std::vector<double>;
  SUBCASE("reference example") {
    // Reference values from scipy.stats.ttest_ind(a, b, equal_var=False).
    const auto r = t_test(V{0.5, 0.6, 0.7}, V{0.1, 0.2, 0.3});
    CHECK(r.t == doctest::Approx(4.898979485566356).epsilon(1e-12));
    CHECK(r.df == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(std::abs(r.p_value - 0.008049893100837717) < 1e-3);
    CHECK(r.p_value == doctest::Approx(0.008049893100837717).epsilon(1e-10));
  }
  SUBCASE("unequal variances") {
    // scipy.stats.ttest_ind(..., equal_var=False)
    const auto r = t_test(V{1, 2, 3, 4}, V{2, 4, 6, 8});
    CHECK(r.t == doctest::Approx(-1.7320508075688774).epsilon(1e-12));
    CHECK(r.df == doctest::Approx(4.411764705882353).epsilon(1e-12));
    CHECK(r.p_value == doctest::Approx(0.15158050484530383).epsilon(1e-9));
  }
  SUBCASE("identical groups") {
    const auto r = t_test(V{0.3, 0.5, 0.4}, V{0.3, 0.5, 0.4});
    CHECK(r.t == 0.0);
    CHECK(r.p_value == 1.0);
  }
  SUBCASE("zero variance") {
    const auto r = t_test(V{1, 1, 1}, V{0, 0, 0});
    CHECK(r.p_value < 1e-12);
    CHECK(std::isinf(r.t));
    const auto same = t_test(V{2, 2}, V{2, 2});
    CHECK(same.p_value == 1.0);
  }
  SUBCASE("preconditions") {
    CHECK_THROWS_AS(t_test(V{1, 2}, V{1, 2, 3}), MetricError);
    CHECK_THROWS_AS(t_test(V{1}, V{2}), MetricError);
  }
  CHECK(mean(V{1, 2, 3}) == 2.0);
  CHECK(sample_stddev(V{1, 2, 3}) == doctest::Approx(1.0));
  CHECK(sample_stddev(V{5}) == 0.0);
}
