#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rqre/risk.hpp"
#include "rqre/rng.hpp"

using namespace rqre;

namespace {
const double kTwoPoint = std::log((1.0 + std::exp(1.0)) / 2.0);  // ~0.62011
}

TEST_CASE("entropic risk two-point closed form") {
  auto d = FiniteDistribution::uniform({0.0, 1.0});
  CHECK(entropic_risk(d, 1.0) == doctest::Approx(kTwoPoint).epsilon(1e-12));
  CHECK(kTwoPoint == doctest::Approx(0.62011).epsilon(1e-4));
}

TEST_CASE("entropic risk of a constant is the constant") {
  FiniteDistribution d;
  d.outcomes = {3.25, 3.25, 3.25};
  d.weights = {0.2, 0.5, 0.3};
  for (double tau : {1e-3, 1.0, 50.0})
    CHECK(entropic_risk(d, tau) == doctest::Approx(3.25).epsilon(1e-12));
}

TEST_CASE("entropic risk approaches the mean as tau -> 0") {
  auto d = FiniteDistribution::uniform({0.0, 1.0});
  CHECK(entropic_risk(d, 0.001) == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("entropic risk bounds and tau monotonicity") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 2 + int(rng.below(6));
    FiniteDistribution d;
    double s = 0.0;
    for (int j = 0; j < m; ++j) {
      d.outcomes.push_back(rng.uniform(-4.0, 4.0));
      d.weights.push_back(0.1 + rng.u01());
      s += d.weights.back();
    }
    for (auto& w : d.weights) w /= s;
    double lo = d.outcomes[0], hi = d.outcomes[0];
    for (double z : d.outcomes) {
      lo = std::min(lo, z);
      hi = std::max(hi, z);
    }
    double prev = -1e300;
    for (double tau : {0.01, 0.1, 1.0, 5.0, 25.0}) {
      const double r = entropic_risk(d, tau);
      CHECK(r >= lo - 1e-9);
      CHECK(r <= hi + 1e-9);
      CHECK(r >= prev - 1e-9);
      prev = r;
    }
  }
}

TEST_CASE("entropic translation invariance is exact") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    FiniteDistribution d = FiniteDistribution::uniform(
        {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)});
    const double c = rng.uniform(-5, 5);
    FiniteDistribution shifted = d;
    for (auto& z : shifted.outcomes) z += c;
    CHECK(entropic_risk(shifted, 2.0) ==
          doctest::Approx(entropic_risk(d, 2.0) + c).epsilon(1e-12));
  }
}

TEST_CASE("empirical entropic basics") {
  std::vector<double> c = {1.5, 1.5, 1.5};
  CHECK(empirical_entropic(c, 0.7) == doctest::Approx(1.5).epsilon(1e-12));
  std::vector<double> two = {0.0, 1.0};
  CHECK(empirical_entropic(two, 1.0) == doctest::Approx(kTwoPoint).epsilon(1e-12));
  CHECK_THROWS_AS(empirical_entropic(std::vector<double>{}, 1.0), std::invalid_argument);
}

TEST_CASE("empirical entropic equals weighted form on exact multiplicities") {
  // 3 copies of 0.2 and 1 copy of 1.4.
  std::vector<double> samples = {0.2, 0.2, 1.4, 0.2};
  FiniteDistribution d;
  d.outcomes = {0.2, 1.4};
  d.weights = {0.75, 0.25};
  CHECK(empirical_entropic(samples, 1.3) ==
        doctest::Approx(entropic_risk(d, 1.3)).epsilon(1e-12));
}

TEST_CASE("empirical entropic concentrates at the Monte Carlo rate") {
  // 100 repetitions of m = 10^4 Bernoulli(1/2) draws; at least 99 must land
  // within 0.05 of the closed form.
  Rng rng(20260810);
  int hits = 0;
  std::vector<double> samples(10000);
  for (int rep = 0; rep < 100; ++rep) {
    for (auto& s : samples) s = rng.u01() < 0.5 ? 0.0 : 1.0;
    if (std::abs(empirical_entropic(samples, 1.0) - kTwoPoint) < 0.05) ++hits;
  }
  CHECK(hits >= 99);
}

TEST_CASE("empirical cvar order statistics") {
  std::vector<double> v = {1.0, 2.0, 3.0, 4.0};
  CHECK(empirical_cvar(v, 0.5) == doctest::Approx(3.5).epsilon(1e-12));
  std::vector<double> one = {5.0};
  CHECK(empirical_cvar(one, 0.25) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(empirical_cvar(one, 0.9) == doctest::Approx(5.0).epsilon(1e-12));
  std::vector<double> top = {0.0, 0.0, 0.0, 10.0};
  CHECK(empirical_cvar(top, 0.75) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK_THROWS_AS(empirical_cvar(std::vector<double>{}, 0.5), std::invalid_argument);
}

TEST_CASE("finite dual risk over candidate sets") {
  // Point mass on the outcome with loss 3, zero penalty.
  std::vector<double> loss = {1.0, 3.0};
  std::vector<DualCandidate> point = {{{0.0, 1.0}, 0.0}};
  CHECK(finite_dual_risk(loss, point) == doctest::Approx(3.0).epsilon(1e-12));

  // max(2 - 1, 4 - 3) = 1 on outcomes {0, 4}.
  std::vector<double> loss2 = {0.0, 4.0};
  std::vector<DualCandidate> two = {{{0.5, 0.5}, 1.0}, {{0.0, 1.0}, 3.0}};
  CHECK(finite_dual_risk(loss2, two) == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<DualCandidate> bad = {{{1.0, 0.0, 0.0}, 0.0}};
  CHECK_THROWS_AS(finite_dual_risk(loss2, bad), std::invalid_argument);
}

TEST_CASE("KL-penalized dual grid refines to entropic risk monotonically") {
  // sup_p { E_p[Z] - KL(p || uniform) } over p on {0,1} equals the entropic
  // risk of uniform {0,1} at tau = 1; refining (nested doubling) grids must
  // increase toward it.
  const std::vector<double> loss = {0.0, 1.0};
  auto kl_to_uniform = [](double p) {
    auto term = [](double x) { return x > 0.0 ? x * std::log(2.0 * x) : 0.0; };
    return term(p) + term(1.0 - p);
  };
  auto grid_value = [&](int g) {
    std::vector<DualCandidate> set;
    for (int k = 0; k <= g; ++k) {
      const double p = double(k) / g;
      set.push_back({{1.0 - p, p}, kl_to_uniform(p)});
    }
    return finite_dual_risk(loss, set);
  };
  double prev = -1e300;
  for (int g : {8, 16, 32, 64, 1024}) {
    const double v = grid_value(g);
    CHECK(v >= prev - 1e-13);
    CHECK(v <= kTwoPoint + 1e-12);
    prev = v;
  }
  CHECK(std::abs(grid_value(1024) - kTwoPoint) < 1e-2);
}

TEST_CASE("environment risk estimates") {
  std::vector<double> v = {2.0, 4.0};
  std::vector<double> w = {0.5, 0.5};
  CHECK(env_risk_estimate(v, w, RiskSpec::risk_neutral()) == doctest::Approx(3.0));
  CHECK(env_risk_estimate(v, w, RiskSpec::entropic(1e-4)) ==
        doctest::Approx(3.0).epsilon(1e-3));
  std::vector<double> losses = {0.0, 1.0};
  CHECK(env_risk_estimate(losses, w, RiskSpec::entropic(1.0)) ==
        doctest::Approx(kTwoPoint).epsilon(1e-9));
  CHECK_THROWS_AS(
      env_risk_estimate(std::vector<double>{}, std::vector<double>{}, RiskSpec{}),
      std::invalid_argument);

  // Environment-side finite dual uses the inf + penalty form.
  std::vector<DualCandidate> set = {{{1.0, 0.0}, 0.5}, {{0.0, 1.0}, 0.1}};
  CHECK(env_risk_estimate(v, w, RiskSpec::finite_dual(set)) ==
        doctest::Approx(std::min(2.0 + 0.5, 4.0 + 0.1)).epsilon(1e-12));
}

TEST_CASE("axiom suite passes for the convex families") {
  CHECK(risk_axiom_suite(RiskSpec::entropic(1.0)).all());
  CHECK(risk_axiom_suite(RiskSpec::risk_neutral()).all());
  CHECK(risk_axiom_suite(RiskSpec::cvar(0.8)).all());
  std::vector<DualCandidate> set = {{{0.3, 0.7, 0.0}, 0.2}, {{0.1, 0.1, 0.8}, 0.0}};
  CHECK(risk_axiom_suite(RiskSpec::finite_dual(set)).all());
}

TEST_CASE("entropic risk is not positively homogeneous") {
  auto z = FiniteDistribution::uniform({0.0, 1.0});
  auto z2 = FiniteDistribution::uniform({0.0, 2.0});
  const double lhs = entropic_risk(z2, 1.0);
  const double rhs = 2.0 * entropic_risk(z, 1.0);
  CHECK(lhs == doctest::Approx(std::log((1.0 + std::exp(2.0)) / 2.0)).epsilon(1e-12));
  CHECK(lhs == doctest::Approx(1.43378).epsilon(1e-4));
  CHECK(rhs == doctest::Approx(1.24023).epsilon(1e-4));
  CHECK(lhs - rhs >= 0.19);
}

TEST_CASE("distribution and spec validation") {
  FiniteDistribution bad;
  bad.outcomes = {1.0, 2.0};
  bad.weights = {0.7, 0.7};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_THROWS_AS(entropic_risk(FiniteDistribution::uniform({1.0}), 0.0),
                  std::invalid_argument);
  RiskSpec s = RiskSpec::cvar(1.5);
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}
