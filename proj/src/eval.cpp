#include "rqre/eval.hpp"

#include <cmath>
#include <ostream>

namespace rqre {

namespace {

struct RolloutResult {
  std::vector<double> returns;
  int stag_stag = 0, hare_hare = 0, mixed = 0;
};

// One stochastic episode. `perturb_seat` >= 0 replaces that seat's action by
// `deviation` with probability `delta`.
RolloutResult rollout(const Environment& env, StagePolicy& p0, StagePolicy& p1,
                      std::uint64_t seed, double delta, int deviation,
                      int perturb_seat) {
  const auto& spec = env.spec();
  Rng rng(seed);
  RolloutResult out;
  out.returns.assign(spec.n, 0.0);
  State x = env.initial_state(rng);
  std::vector<int> joint(spec.n);
  for (int h = 1; h <= spec.horizon; ++h) {
    joint[0] = rng.categorical(p0.profile(env, x, h).dists[0]);
    joint[1] = rng.categorical(p1.profile(env, x, h).dists[1]);
    if (perturb_seat >= 0 && rng.u01() < delta) joint[perturb_seat] = deviation;
    StepResult sr = env.step(x, h, joint, rng);
    for (int i = 0; i < spec.n; ++i) out.returns[i] += sr.rewards[i];
    if (sr.event == kEventStagStag) ++out.stag_stag;
    else if (sr.event == kEventHareHare) ++out.hare_hare;
    else if (sr.event == kEventMixed) ++out.mixed;
    x = std::move(sr.next);
    if (sr.done) break;
  }
  return out;
}

struct Aggregate {
  double team_mean = 0.0;
  double team_se = 0.0;
  std::vector<double> per_player;
  std::vector<double> per_player_se;
  int stag_stag = 0, hare_hare = 0, mixed = 0;
};

Aggregate run_rollouts(const Environment& env, StagePolicy& p0, StagePolicy& p1,
                       const EvalConfig& cfg, double delta, int perturb_seat,
                       std::uint64_t stream) {
  const int n = env.spec().n;
  Aggregate agg;
  agg.per_player.assign(n, 0.0);
  agg.per_player_se.assign(n, 0.0);
  double team_sum = 0.0, team_sq = 0.0;
  std::vector<double> pp_sq(n, 0.0);
  for (int r = 0; r < cfg.rollouts; ++r) {
    const auto res = rollout(env, p0, p1,
                             Rng::derive(cfg.seed, (stream << 24) + r), delta,
                             cfg.deviation_action, perturb_seat);
    double team = 0.0;
    for (int i = 0; i < n; ++i) {
      team += res.returns[i];
      agg.per_player[i] += res.returns[i];
      pp_sq[i] += res.returns[i] * res.returns[i];
    }
    team_sum += team;
    team_sq += team * team;
    agg.stag_stag += res.stag_stag;
    agg.hare_hare += res.hare_hare;
    agg.mixed += res.mixed;
  }
  const double m = cfg.rollouts;
  agg.team_mean = team_sum / m;
  const double var = std::max(team_sq / m - agg.team_mean * agg.team_mean, 0.0);
  agg.team_se = m > 1 ? std::sqrt(var / (m - 1)) : 0.0;
  for (int i = 0; i < n; ++i) {
    agg.per_player[i] /= m;
    const double v =
        std::max(pp_sq[i] / m - agg.per_player[i] * agg.per_player[i], 0.0);
    agg.per_player_se[i] = m > 1 ? std::sqrt(v / (m - 1)) : 0.0;
  }
  return agg;
}

}  // namespace

TrainedPolicy::TrainedPolicy(const TrainedAgents& agents, const Environment& env,
                             bool with_bonus)
    : agents_(agents), eval_(agents, env, with_bonus), cache_(agents.H) {}

const MixedProfile& TrainedPolicy::profile(const Environment& env, const State& x,
                                           int h) {
  auto& cache = cache_[h - 1];
  auto it = cache.find(x);
  if (it != cache.end()) return it->second;
  StagePayoff payoff;
  payoff.n = env.spec().n;
  payoff.action_counts = env.spec().action_counts;
  payoff.tensors = eval_.tensors(x, h);
  auto [pi, diag] = rqre_solve(payoff, agents_.solver);
  return cache.emplace(x, std::move(pi)).first->second;
}

ReturnStats self_play(StagePolicy& agents, const Environment& env,
                      const EvalConfig& cfg) {
  if (cfg.rollouts < 1) throw std::invalid_argument("self_play: rollouts must be >= 1");
  const auto agg = run_rollouts(env, agents, agents, cfg, 0.0, -1, 0);
  ReturnStats s;
  s.mean = agg.team_mean;
  s.std_error = agg.team_se;
  s.per_player = agg.per_player;
  s.rollouts = cfg.rollouts;
  return s;
}

std::vector<RetentionPoint> perturbed_partner(StagePolicy& ego, StagePolicy& partner,
                                              const Environment& env,
                                              const EvalConfig& cfg) {
  bool has_zero = false;
  for (double d : cfg.deltas) {
    if (d < 0.0 || d > 1.0)
      throw std::invalid_argument("perturbed_partner: deltas must lie in [0,1]");
    if (d == 0.0) has_zero = true;
  }
  if (!has_zero) throw std::invalid_argument("perturbed_partner: delta grid must include 0");

  std::vector<RetentionPoint> out;
  double base = 0.0;
  for (std::size_t k = 0; k < cfg.deltas.size(); ++k) {
    const auto agg = run_rollouts(env, ego, partner, cfg, cfg.deltas[k],
                                  /*perturb_seat=*/1, k + 1);
    RetentionPoint pt;
    pt.delta = cfg.deltas[k];
    pt.team_return = agg.team_mean;
    pt.std_error = agg.team_se;
    if (pt.delta == 0.0) base = pt.team_return;
    out.push_back(pt);
  }
  for (auto& pt : out) {
    if (base != 0.0) {
      pt.retention = pt.team_return / base;
      pt.retention_defined = true;
    }
  }
  return out;
}

std::vector<CrossPlayCell> cross_play(
    std::span<const std::pair<NamedPolicy, NamedPolicy>> pairings,
    const Environment& env, const EvalConfig& cfg) {
  std::vector<CrossPlayCell> out;
  std::uint64_t stream = 1000;
  for (const auto& [a, b] : pairings) {
    CrossPlayCell cell;
    cell.pairing = a.name + "|" + b.name;
    auto fwd = run_rollouts(env, *a.policy, *b.policy, cfg, 0.0, -1, stream++);
    auto rev = run_rollouts(env, *b.policy, *a.policy, cfg, 0.0, -1, stream++);
    cell.reward_a_first = fwd.per_player[0];
    cell.reward_b_first = fwd.per_player[1];
    cell.se_first = fwd.team_se;
    cell.reward_b_second = rev.per_player[0];
    cell.reward_a_second = rev.per_player[1];
    cell.se_second = rev.team_se;
    out.push_back(std::move(cell));
  }
  return out;
}

OutcomeFractions outcome_fractions(StagePolicy& a, StagePolicy& b,
                                   const Environment& env, const EvalConfig& cfg) {
  const auto agg = run_rollouts(env, a, b, cfg, 0.0, -1, 5000);
  OutcomeFractions f;
  f.interactions = agg.stag_stag + agg.hare_hare + agg.mixed;
  if (f.interactions > 0) {
    f.any = true;
    f.stag_stag = double(agg.stag_stag) / f.interactions;
    f.hare_hare = double(agg.hare_hare) / f.interactions;
    f.mixed = double(agg.mixed) / f.interactions;
  }
  return f;
}

double true_tensor_exploitability(const TrainedAgents& agents,
                                  const Environment& matrix_env,
                                  const SolverConfig& solver) {
  const StagePayoff* truth = matrix_env.exact_payoffs();
  if (truth == nullptr || matrix_env.spec().horizon != 1)
    throw std::invalid_argument(
        "true_tensor_exploitability: needs a single-stage matrix environment");
  StagePayoff scaled = *truth;
  for (auto& t : scaled.tensors)
    for (auto& u : t) u /= agents.reward_scale;
  TrainedPolicy policy(agents, matrix_env, /*with_bonus=*/false);
  Rng rng(0);
  const State x = matrix_env.initial_state(rng);
  return exploitability(scaled, policy.profile(matrix_env, x, 1), solver).max_gap;
}

void write_report_csv(std::ostream& os, std::span<const ReportRow> rows) {
  os << "# schema=1\n";
  os << "condition,delta,pairing,metric,value,stderr,rollouts,seed\n";
  char buf[64];
  for (const auto& r : rows) {
    auto num = [&](double v) {
      std::snprintf(buf, sizeof buf, "%.10g", v);
      return std::string(buf);
    };
    os << r.condition << ',' << num(r.delta) << ',' << r.pairing << ',' << r.metric
       << ',' << num(r.value) << ',' << num(r.std_error) << ',' << r.rollouts << ','
       << r.seed << "\n";
  }
}

}  // namespace rqre
