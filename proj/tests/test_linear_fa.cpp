#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rqre/linear_fa.hpp"
#include "rqre/rng.hpp"

using namespace rqre;

namespace {

Eigen::VectorXd unit(int d, int k) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
  v(k) = 1.0;
  return v;
}

Eigen::VectorXd random_unit(Rng& rng, int d) {
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v(i) = rng.uniform(-1.0, 1.0);
  v /= v.norm();
  return v;
}

}  // namespace

TEST_CASE("rank one update arithmetic") {
  RidgeDesign design(2, 1.0, 1);
  const double y = 1.0;
  design.update(unit(2, 0), std::span<const double>(&y, 1));
  CHECK(design.gram()(0, 0) == doctest::Approx(2.0));
  CHECK(design.gram()(1, 1) == doctest::Approx(1.0));
  CHECK(design.gram()(0, 1) == doctest::Approx(0.0));
  CHECK(design.target_sum(0)(0) == doctest::Approx(1.0));
  auto w = design.weights(0);
  CHECK(w(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(w(1) == doctest::Approx(0.0));
  CHECK(design.count() == 1);
}

TEST_CASE("zero feature only increments the count") {
  RidgeDesign design(3, 0.5, 2);
  const double ys[2] = {1.0, -1.0};
  design.update(Eigen::VectorXd::Zero(3), ys);
  CHECK(design.count() == 1);
  CHECK((design.gram() - 0.5 * Eigen::MatrixXd::Identity(3, 3)).norm() == 0.0);
  CHECK(design.target_sum(0).norm() == 0.0);
}

TEST_CASE("incremental gram equals the batch recomputation") {
  Rng rng(17);
  const int d = 6;
  RidgeDesign design(d, 2.0, 1);
  Eigen::MatrixXd batch = 2.0 * Eigen::MatrixXd::Identity(d, d);
  for (int k = 0; k < 1000; ++k) {
    const auto phi = random_unit(rng, d);
    const double y = rng.uniform(-1.0, 1.0);
    design.update(phi, std::span<const double>(&y, 1));
    batch += phi * phi.transpose();
  }
  CHECK((design.gram() - batch).norm() <= 1e-10);
}

TEST_CASE("gram stays symmetric positive definite") {
  Rng rng(18);
  const int d = 5;
  RidgeDesign design(d, 1.5, 1);
  for (int k = 0; k < 300; ++k) {
    const auto phi = random_unit(rng, d);
    const double y = rng.u01();
    design.update(phi, std::span<const double>(&y, 1));
  }
  const auto& g = design.gram();
  CHECK((g - g.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g, Eigen::EigenvaluesOnly);
  CHECK(es.eigenvalues().minCoeff() >= 1.5 - 1e-9);
}

TEST_CASE("weights are zero without targets and recover a planted vector") {
  Rng rng(19);
  const int d = 4;
  RidgeDesign empty(d, 1.0, 1);
  CHECK(empty.weights(0).norm() == doctest::Approx(0.0));

  Eigen::VectorXd w_star(d);
  for (int i = 0; i < d; ++i) w_star(i) = rng.uniform(-0.5, 0.5);
  w_star /= std::max(1.0, w_star.norm());
  RidgeDesign design(d, 1e-8, 1);
  for (int k = 0; k < d; ++k) {
    Eigen::VectorXd phi = unit(d, k) * 0.9;
    const double y = phi.dot(w_star);
    design.update(phi, std::span<const double>(&y, 1));
  }
  CHECK((design.weights(0) - w_star).norm() <= 1e-4);
}

TEST_CASE("weight solve residual is tiny") {
  Rng rng(23);
  const int d = 8;
  RidgeDesign design(d, 1.0, 1);
  for (int k = 0; k < 200; ++k) {
    const auto phi = random_unit(rng, d);
    const double y = rng.uniform(0.0, 2.0);
    design.update(phi, std::span<const double>(&y, 1));
  }
  const auto w = design.weights(0);
  const double rel = (design.gram() * w - design.target_sum(0)).norm() /
                     std::max(design.target_sum(0).norm(), 1e-300);
  CHECK(rel <= 1e-10);
}

TEST_CASE("bonus closed form under repeated features") {
  RidgeDesign design(2, 1.0, 1);
  const auto e1 = unit(2, 0);
  CHECK(design.bonus(e1, 0.1) == doctest::Approx(0.1).epsilon(1e-12));
  const double y = 0.0;
  design.update(e1, std::span<const double>(&y, 1));
  CHECK(design.bonus(e1, 0.1) == doctest::Approx(0.1 * std::sqrt(0.5)).epsilon(1e-12));
  for (int reps : {1, 10, 100}) {
    RidgeDesign d2(2, 1.0, 1);
    for (int k = 0; k < reps; ++k) d2.update(e1, std::span<const double>(&y, 1));
    CHECK(d2.bonus(e1, 0.1) ==
          doctest::Approx(0.1 / std::sqrt(1.0 + reps)).epsilon(1e-10));
  }
}

TEST_CASE("bonus shrinks as the design absorbs more data") {
  Rng rng(29);
  const int d = 5;
  RidgeDesign design(d, 1.0, 1);
  std::vector<Eigen::VectorXd> probes;
  for (int k = 0; k < 10; ++k) probes.push_back(random_unit(rng, d));
  std::vector<double> before;
  for (const auto& p : probes) before.push_back(design.bonus(p, 1.0));
  for (int k = 0; k < 50; ++k) {
    const double y = 0.0;
    design.update(random_unit(rng, d), std::span<const double>(&y, 1));
  }
  for (std::size_t k = 0; k < probes.size(); ++k)
    CHECK(design.bonus(probes[k], 1.0) <= before[k] + 1e-12);
}

TEST_CASE("q estimate is clipped to [0, B]") {
  RidgeDesign design(2, 1.0, 1);
  OviHyper hyper;
  hyper.beta = 0.0;
  hyper.b_clip = 2.0;
  CHECK(design.q_estimate(0, unit(2, 0), hyper) == doctest::Approx(0.0));
  const double y = 100.0;
  for (int k = 0; k < 50; ++k) design.update(unit(2, 0), std::span<const double>(&y, 1));
  CHECK(design.q_estimate(0, unit(2, 0), hyper) == doctest::Approx(2.0));
  // Negative targets floor at zero.
  RidgeDesign neg(2, 1.0, 1);
  const double yn = -5.0;
  for (int k = 0; k < 50; ++k) neg.update(unit(2, 0), std::span<const double>(&yn, 1));
  CHECK(neg.q_estimate(0, unit(2, 0), hyper) == doctest::Approx(0.0));
}

TEST_CASE("derived value cap") {
  const std::vector<int> actions = {2, 2};
  const std::vector<double> eps = {1.0, 1.0};
  CHECK(OviHyper::derive_b_clip(2, actions, eps) ==
        doctest::Approx(2.0 * (1.0 + std::log(2.0))).epsilon(1e-12));
  const std::vector<int> actions6 = {6, 6};
  const std::vector<double> eps01 = {0.1, 0.1};
  CHECK(OviHyper::derive_b_clip(75, actions6, eps01) ==
        doctest::Approx(75.0 * (1.0 + std::log(6.0) / 0.1)).epsilon(1e-12));
}

TEST_CASE("feature norms above one are rejected") {
  RidgeDesign design(2, 1.0, 1);
  Eigen::VectorXd big(2);
  big << 1.2, 0.0;
  const double y = 0.0;
  CHECK_THROWS_AS(design.update(big, std::span<const double>(&y, 1)),
                  std::invalid_argument);
}

TEST_CASE("elliptical potential harmonic case matches its closed form") {
  const int K = 1000;
  std::vector<Eigen::VectorXd> trace(K, unit(1, 0));
  const auto audit = elliptical_potential_audit(1, 1.0, trace);
  double harmonic = 0.0;
  for (int k = 0; k < K; ++k) harmonic += 1.0 / (1.0 + k);
  CHECK(audit.cumulative == doctest::Approx(harmonic).epsilon(1e-8));
  CHECK(audit.bound == doctest::Approx(2.0 * std::log(1.0 + K)).epsilon(1e-12));
  CHECK(audit.pass());
}

TEST_CASE("elliptical potential on an empty trace") {
  const auto audit = elliptical_potential_audit(3, 1.0, {});
  CHECK(audit.cumulative == 0.0);
  CHECK(audit.pass());
}

TEST_CASE("elliptical potential bound holds for random unit features") {
  Rng rng(37);
  const int d = 5, K = 10000;
  EllipticalAccumulator acc(d, 1.0);
  for (int k = 0; k < K; ++k) acc.absorb(random_unit(rng, d));
  const auto audit = acc.report();
  CHECK(audit.bound == doctest::Approx(10.0 * std::log(1.0 + 10000.0)).epsilon(1e-12));
  CHECK(audit.bound == doctest::Approx(92.1).epsilon(1e-3));
  CHECK(audit.cumulative <= audit.bound);
  CHECK(audit.pass());
}

TEST_CASE("incremental audit matches the from-scratch replay") {
  Rng rng(41);
  const int d = 4;
  std::vector<Eigen::VectorXd> trace;
  EllipticalAccumulator acc(d, 1.0);
  for (int k = 0; k < 500; ++k) {
    trace.push_back(random_unit(rng, d));
    acc.absorb(trace.back());
  }
  const auto replay = elliptical_potential_audit(d, 1.0, trace);
  CHECK(acc.report().cumulative == doctest::Approx(replay.cumulative).epsilon(1e-9));
}
