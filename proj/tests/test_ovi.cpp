#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "rqre/eval.hpp"
#include "rqre/ovi.hpp"

using namespace rqre;

namespace {

TrainConfig matrix_config(long episodes, double eps = 1.0, double tau = 0.0) {
  TrainConfig cfg;
  cfg.episodes = episodes;
  cfg.horizon = 1;
  cfg.solver = SolverConfig::make(2, eps, tau, SolveMethod::FixedPoint, 200, 1e-8);
  cfg.hyper.beta = 0.1;
  cfg.hyper.lambda = 1.0;
  cfg.hyper.b_clip = 0.0;
  cfg.buffer_capacity = 1000;
  cfg.update_frequency = 20;
  cfg.seed = 7;
  cfg.reward_scale = 4.0;
  return cfg;
}

TrainConfig synthetic_config(long episodes, const SyntheticConfig& env_cfg,
                             double beta = 0.1) {
  TrainConfig cfg;
  cfg.episodes = episodes;
  cfg.horizon = env_cfg.horizon;
  cfg.solver = SolverConfig::make(env_cfg.players, 1.0, 0.0,
                                  SolveMethod::FixedPoint, 200, 1e-8);
  cfg.hyper.beta = beta;
  cfg.hyper.lambda = 1.0;
  cfg.hyper.b_clip = 0.0;
  cfg.buffer_capacity = 100000;
  cfg.update_frequency = 20;
  cfg.env_risk_samples = 32;
  cfg.seed = 11;
  cfg.reward_scale = 1.0;
  return cfg;
}

}  // namespace

TEST_CASE("before the first update play is uniform with zero weights") {
  auto env = make_matrix_game(StagePayoff::stag_hunt());
  auto cfg = matrix_config(1);
  auto [agents, log] = train(*env, cfg);
  CHECK_FALSE(agents.trained);
  for (const auto& w : agents.w[0]) CHECK(w.norm() == doctest::Approx(0.0));

  // The optimistic all-cap tensor ties every action, so the policy is uniform.
  QEvaluator eval(agents, *env, true);
  Rng rng(0);
  const auto tensors = eval.tensors(env->initial_state(rng), 1);
  for (const auto& t : tensors)
    for (double q : t) CHECK(q == doctest::Approx(agents.q_cap(1)));
  TrainedPolicy pol(agents, *env, true);
  const auto& pi = pol.profile(*env, env->initial_state(rng), 1);
  for (const auto& dist : pi.dists)
    for (double p : dist) CHECK(p == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("compute_targets follows the one-step backup") {
  TrainConfig cfg;
  cfg.episodes = 10;
  cfg.horizon = 2;
  cfg.solver = SolverConfig::make(2, 1.0, 0.0);
  cfg.reward_scale = 4.0;
  cfg.env_risk = RiskSpec::risk_neutral();

  Transition tr;
  tr.state = {0.0};
  tr.joint = {0, 0};
  tr.rewards_scaled = {1.0, 0.5};  // raw 4 and 2 under scale 4
  tr.next = {1.0};
  tr.episode = 1;
  const std::vector<Transition> batch = {tr};

  // Terminal stage: targets are the scaled rewards themselves.
  auto terminal = compute_targets(batch, 2, cfg, nullptr, nullptr);
  CHECK(terminal[0][0] == doctest::Approx(1.0));
  CHECK(terminal[1][0] == doctest::Approx(0.5));

  // Risk-neutral interior stage: reward plus the realized continuation.
  auto next_value = [](const State&) { return std::vector<double>{2.0, 2.0}; };
  auto interior = compute_targets(batch, 1, cfg, next_value, nullptr);
  CHECK(interior[0][0] == doctest::Approx(3.0));

  // Single-sample entropic estimation degenerates to the realized value.
  cfg.env_risk = RiskSpec::entropic(1.0);
  cfg.env_risk_samples = 1;
  auto single = compute_targets(batch, 1, cfg, next_value, nullptr);
  CHECK(single[0][0] == doctest::Approx(3.0));
}

TEST_CASE("synthetic linear bandit recovers the reward vector") {
  SyntheticConfig env_cfg;
  env_cfg.dim = 2;
  env_cfg.players = 1;
  env_cfg.horizon = 1;
  env_cfg.action_counts = {4};
  env_cfg.num_states = 1;
  env_cfg.seed = 5;
  auto env = make_synthetic_linear_mg(env_cfg);

  auto cfg = synthetic_config(500, env_cfg);
  cfg.solver = SolverConfig::make(1, 1.0, 0.0, SolveMethod::FixedPoint, 200, 1e-8);
  auto [agents, log] = train(*env, cfg);
  const auto& theta = env->reward_vectors(1)[0];
  Eigen::VectorXd diff = agents.w[0][0];
  for (int k = 0; k < env_cfg.dim; ++k) diff(k) -= theta[k];
  INFO("recovery error ", diff.norm());
  CHECK(diff.norm() <= 0.05);
}

TEST_CASE("matrix stag hunt training drives true-tensor exploitability down") {
  auto env = make_matrix_game(StagePayoff::stag_hunt());
  auto cfg = matrix_config(2000);
  auto [agents, log] = train(*env, cfg);
  REQUIRE(log.rows.size() == 2000);
  double tail = 0.0;
  for (std::size_t k = 1900; k < 2000; ++k) tail += log.rows[k].exploitability;
  tail /= 100.0;
  INFO("mean exploitability over the last 100 episodes: ", tail);
  CHECK(tail <= 0.1);
}

TEST_CASE("training is deterministic given the seed") {
  auto env = make_matrix_game(StagePayoff::stag_hunt());
  auto cfg = matrix_config(120);
  auto [a1, log1] = train(*env, cfg);
  auto [a2, log2] = train(*env, cfg);
  std::ostringstream s1, s2;
  log1.write_csv(s1);
  log2.write_csv(s2);
  CHECK(s1.str() == s2.str());
  for (int h = 0; h < 1; ++h)
    for (int i = 0; i < 2; ++i)
      CHECK((a1.w[h][i] - a2.w[h][i]).norm() == 0.0);
}

TEST_CASE("checkpoint round trip resumes bit-identically") {
  auto env = make_matrix_game(StagePayoff::stag_hunt());
  auto cfg = matrix_config(90);

  OviRunner full(*env, cfg);
  full.run();

  OviRunner part(*env, cfg);
  TrainHooks halt;
  halt.halt = [](long ep) { return ep >= 35; };
  part.run(halt);
  CHECK(part.episode() == 35);
  std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
  part.save_checkpoint(buf);

  OviRunner resumed(*env, cfg);
  resumed.load_checkpoint(buf);
  CHECK(resumed.episode() == 35);
  resumed.run();

  std::ostringstream s1, s2;
  full.log().write_csv(s1);
  resumed.log().write_csv(s2);
  CHECK(s1.str() == s2.str());
}

TEST_CASE("buffer discipline keeps only the most recent transitions") {
  auto env = make_matrix_game(StagePayoff::stag_hunt());
  auto cfg = matrix_config(100);
  cfg.buffer_capacity = 30;
  OviRunner runner(*env, cfg);
  runner.run();
  for (auto size : runner.buffer_sizes()) CHECK(size == 30);
}

TEST_CASE("targets stay within [0, 1 + B] for every risk kind") {
  SyntheticConfig env_cfg;
  env_cfg.horizon = 2;
  env_cfg.seed = 21;
  auto env = make_synthetic_linear_mg(env_cfg);

  const double b_clip = 3.0;
  Rng rng(50);
  std::vector<Transition> batch;
  for (int t = 0; t < 40; ++t) {
    Transition tr;
    tr.state = {double(rng.below(env_cfg.num_states))};
    tr.joint = {int(rng.below(2)), int(rng.below(2))};
    tr.rewards_scaled = {rng.u01(), rng.u01()};
    tr.next = {double(rng.below(env_cfg.num_states))};
    tr.episode = t + 1;
    batch.push_back(std::move(tr));
  }
  auto next_value = [&](const State& x) {
    Rng vr(Rng::derive(17, std::uint64_t(x[0])));
    return std::vector<double>{vr.u01() * b_clip, vr.u01() * b_clip};
  };
  for (auto spec : {RiskSpec::risk_neutral(), RiskSpec::entropic(0.5),
                    RiskSpec::cvar(0.75)}) {
    TrainConfig cfg;
    cfg.episodes = 40;
    cfg.horizon = 2;
    cfg.solver = SolverConfig::make(2, 1.0, 0.0);
    cfg.env_risk = spec;
    cfg.env_risk_samples = 32;
    cfg.seed = 3;
    const auto targets = compute_targets(batch, 1, cfg, next_value, env.get());
    for (const auto& per_player : targets)
      for (double y : per_player) {
        CHECK(y >= 0.0);
        CHECK(y <= 1.0 + b_clip);
      }
  }
}

TEST_CASE("executed policies keep full support and sharpen with epsilon") {
  auto env = make_matrix_game(StagePayoff::stag_hunt());
  auto cfg = matrix_config(300);
  auto [agents, log] = train(*env, cfg);
  REQUIRE(agents.trained);

  QEvaluator eval(agents, *env, false);
  Rng rng(0);
  const State x = env->initial_state(rng);
  StagePayoff payoff;
  payoff.n = 2;
  payoff.action_counts = env->spec().action_counts;
  payoff.tensors = eval.tensors(x, 1);

  double prev_entropy = 1e300;
  for (double eps : {0.5, 1.0, 2.0, 5.0, 20.0}) {
    auto solver = SolverConfig::make(2, eps, 0.0, SolveMethod::FixedPoint, 3000, 1e-10);
    auto [pi, diag] = rqre_solve(payoff, solver);
    for (const auto& dist : pi.dists)
      for (double p : dist) CHECK(p > 0.0);
    const double h = entropy(pi.dists[0]);
    CHECK(h <= prev_entropy + 1e-9);
    prev_entropy = h;
  }
}

TEST_CASE("optimism audit: untrained agents are fully optimistic") {
  SyntheticConfig env_cfg;
  env_cfg.horizon = 2;
  env_cfg.seed = 13;
  auto env = make_synthetic_linear_mg(env_cfg);
  auto cfg = synthetic_config(40, env_cfg);
  OviRunner runner(*env, cfg);
  // No episodes at all: Q is identically the cap.
  auto agents = runner.agents();
  auto rep = optimism_audit(agents, *env, cfg, 400);
  CHECK(rep.fraction == doctest::Approx(1.0));
}

TEST_CASE("optimism audit separates default bonus from the zero-bonus control") {
  SyntheticConfig env_cfg;
  env_cfg.dim = 6;
  env_cfg.num_states = 6;
  env_cfg.horizon = 2;
  env_cfg.seed = 3;
  env_cfg.kernel_concentration = 0.05;
  auto env = make_synthetic_linear_mg(env_cfg);

  auto cfg = synthetic_config(4000, env_cfg, 0.1);
  cfg.solver = SolverConfig::make(2, 3.0, 0.0, SolveMethod::FixedPoint, 200, 1e-8);
  cfg.env_risk_samples = 64;
  auto [agents, log] = train(*env, cfg);
  auto rep = optimism_audit(agents, *env, cfg, 1000);

  auto cfg0 = cfg;
  cfg0.hyper.beta = 0.0;
  auto [agents0, log0] = train(*env, cfg0);
  auto rep0 = optimism_audit(agents0, *env, cfg0, 1000);

  INFO("default beta fraction ", rep.fraction, ", zero beta fraction ", rep0.fraction);
  CHECK(rep.fraction > rep0.fraction);
  CHECK(rep.fraction >= 0.95);
  CHECK(rep0.fraction < 0.95);
}

TEST_CASE("grid training smoke run with full-support play and passing audits") {
  GridConfig gc;
  gc.horizon = 10;
  auto env = make_dynamic_stag_hunt(gc);
  TrainConfig cfg;
  cfg.episodes = 30;
  cfg.horizon = 10;
  cfg.solver = SolverConfig::make(2, 0.1, 0.0, SolveMethod::FixedPoint, 100, 1e-6);
  cfg.hyper.beta = 0.1;
  cfg.hyper.lambda = 1.0;
  cfg.buffer_capacity = 1000;
  cfg.update_frequency = 10;
  cfg.seed = 99;
  cfg.reward_scale = 4.0;

  OviRunner runner(*env, cfg);
  runner.run();
  for (const auto& a : runner.elliptical_reports()) CHECK(a.pass());

  auto agents = runner.agents();
  REQUIRE(agents.trained);
  TrainedPolicy pol(agents, *env, false);
  Rng rng(4);
  State x = env->initial_state(rng);
  for (int h = 1; h <= 5; ++h) {
    const auto& pi = pol.profile(*env, x, h);
    for (const auto& dist : pi.dists)
      for (double p : dist) CHECK(p > 0.0);
    std::vector<int> joint = {int(rng.below(6)), int(rng.below(6))};
    x = env->step(x, h, joint, rng).next;
  }
}
