#include "rqre/stage_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "rqre/rng.hpp"

namespace rqre {

namespace {

constexpr int kMaxInnerSteps = 500;
constexpr double kLogFloor = 1e-15;

// Per-player view of the stage game used by all solvers: opponent joint
// actions enumerated once, with base flat indices and own-action stride.
struct PlayerView {
  int player = 0;
  int own_count = 0;
  int own_stride = 1;
  std::vector<int> opp_base;                   // flat index with own action 0
  std::vector<std::vector<int>> opp_digits;    // opponent action digits per base
};

PlayerView make_view(const StagePayoff& g, int player) {
  PlayerView v;
  v.player = player;
  v.own_count = g.action_counts[player];
  for (int j = player + 1; j < g.n; ++j) v.own_stride *= g.action_counts[j];
  const int jc = g.joint_count();
  std::vector<int> digits(g.n);
  for (int j = 0; j < jc; ++j) {
    int rem = j;
    for (int i = g.n - 1; i >= 0; --i) {
      digits[i] = rem % g.action_counts[i];
      rem /= g.action_counts[i];
    }
    if (digits[player] != 0) continue;
    v.opp_base.push_back(j);
    std::vector<int> opp;
    for (int i = 0; i < g.n; ++i)
      if (i != player) opp.push_back(digits[i]);
    v.opp_digits.push_back(std::move(opp));
  }
  return v;
}

// Gradient of the risk-adjusted (entropy-free) payoff term for one player,
// plus the term's value. For tau > 0 the gradient weights the opponent joints
// by the soft-min adversary; for tau = 0 by the opponents' product measure.
struct RiskGradient {
  std::vector<double> grad;  // d f / d pi_i(a)
  double value = 0.0;        // f(pi)
};

RiskGradient risk_gradient(const StagePayoff& g, const PlayerView& v,
                           const MixedProfile& profile, const SolverConfig& cfg) {
  const int player = v.player;
  const double tau = cfg.tau[player];
  const auto& tensor = g.tensors[player];
  const std::size_t nb = v.opp_base.size();

  std::vector<double> q(nb), upi(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    double prob = 1.0;
    int d = 0;
    for (int i = 0; i < g.n; ++i) {
      if (i == player) continue;
      prob *= profile.dists[i][v.opp_digits[b][d++]];
    }
    q[b] = prob;
    double u = 0.0;
    const int base = v.opp_base[b];
    for (int a = 0; a < v.own_count; ++a)
      u += profile.dists[player][a] * tensor[base + a * v.own_stride];
    upi[b] = u;
  }

  RiskGradient out;
  out.grad.assign(v.own_count, 0.0);
  std::vector<double> w(nb);
  if (tau <= 0.0) {
    w = q;
    double val = 0.0;
    for (std::size_t b = 0; b < nb; ++b) val += q[b] * upi[b];
    out.value = val;
  } else {
    // Soft-min adversary weights, stabilized at the max exponent.
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < nb; ++b)
      if (q[b] > 0.0) m = std::max(m, -tau * upi[b]);
    double z = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
      w[b] = q[b] > 0.0 ? q[b] * std::exp(-tau * upi[b] - m) : 0.0;
      z += w[b];
    }
    for (auto& x : w) x /= z;
    out.value = -(m + std::log(z)) / tau;
  }
  const int base_count = static_cast<int>(nb);
  for (int b = 0; b < base_count; ++b) {
    if (w[b] == 0.0) continue;
    const int base = v.opp_base[b];
    for (int a = 0; a < v.own_count; ++a)
      out.grad[a] += w[b] * tensor[base + a * v.own_stride];
  }
  return out;
}

double objective(const RiskGradient& rg, std::span<const double> own, double eps) {
  return rg.value + entropy(own) / eps;
}

double fixed_point_residual(std::span<const double> own,
                            std::span<const double> grad, double eps) {
  std::vector<double> scores(grad.size());
  for (std::size_t a = 0; a < grad.size(); ++a) scores[a] = eps * grad[a];
  const auto target = softmax(scores);
  double r = 0.0;
  for (std::size_t a = 0; a < grad.size(); ++a) r += std::abs(own[a] - target[a]);
  return r;
}

BestResponseResult best_response_impl(const StagePayoff& g, const PlayerView& v,
                                      const MixedProfile& opponents,
                                      const SolverConfig& cfg, double tol,
                                      const std::vector<double>* warm) {
  const int player = v.player;
  const double eps = cfg.epsilon[player];
  const double tau = cfg.tau[player];
  BestResponseResult res;

  if (v.own_count == 1) {
    res.dist = {1.0};
    res.converged = true;
    return res;
  }

  MixedProfile work = opponents;
  if (tau <= 0.0) {
    // Expected payoffs do not depend on the own strategy: exact logit map.
    work.dists[player].assign(v.own_count, 1.0 / v.own_count);
    auto rg = risk_gradient(g, v, work, cfg);
    std::vector<double> scores(v.own_count);
    for (int a = 0; a < v.own_count; ++a) scores[a] = eps * rg.grad[a];
    res.dist = softmax(scores);
    res.iterations = 1;
    res.converged = true;
    return res;
  }

  std::vector<double> pi =
      (warm && warm->size() == std::size_t(v.own_count))
          ? *warm
          : std::vector<double>(v.own_count, 1.0 / v.own_count);
  const double umax = std::max(g.max_abs(), 1e-12);
  const double eta0 = std::min(1.0 / (eps * umax * (1.0 + tau)), 1e12);

  work.dists[player] = pi;
  auto rg = risk_gradient(g, v, work, cfg);
  double g_cur = objective(rg, pi, eps);
  for (int it = 0; it < kMaxInnerSteps; ++it) {
    res.iterations = it + 1;
    res.residual = fixed_point_residual(pi, rg.grad, eps);
    if (res.residual <= tol) {
      res.converged = true;
      break;
    }
    std::vector<double> full_grad(v.own_count);
    for (int a = 0; a < v.own_count; ++a) {
      const double la = std::log(std::max(pi[a], kLogFloor));
      full_grad[a] = rg.grad[a] - (la + 1.0) / eps;
    }
    double eta = eta0;
    for (int bt = 0; bt < 60; ++bt) {
      std::vector<double> logits(v.own_count);
      for (int a = 0; a < v.own_count; ++a)
        logits[a] = std::log(std::max(pi[a], kLogFloor)) + eta * full_grad[a];
      auto cand = softmax(logits);
      work.dists[player] = cand;
      auto rg_cand = risk_gradient(g, v, work, cfg);
      const double g_cand = objective(rg_cand, cand, eps);
      if (g_cand >= g_cur - 1e-14) {
        pi = std::move(cand);
        rg = std::move(rg_cand);
        g_cur = g_cand;
        break;
      }
      eta *= 0.5;
    }
  }
  res.dist = std::move(pi);
  return res;
}

ExploitabilityReport exploitability_with(const StagePayoff& g,
                                         const std::vector<PlayerView>& views,
                                         const MixedProfile& profile,
                                         const SolverConfig& cfg, double br_tol,
                                         std::vector<std::vector<double>>* warm,
                                         std::vector<std::vector<double>>* br_out,
                                         double* residual_out = nullptr) {
  ExploitabilityReport rep;
  rep.per_player.assign(g.n, 0.0);
  double residual = 0.0;
  for (int i = 0; i < g.n; ++i) {
    if (g.action_counts[i] == 1) {
      if (br_out) (*br_out)[i] = {1.0};
      continue;
    }
    auto br = best_response_impl(g, views[i], profile, cfg, br_tol,
                                 warm ? &(*warm)[i] : nullptr);
    const double v_cur = policy_risk_value(g, profile, i, cfg);
    MixedProfile dev = profile;
    dev.dists[i] = br.dist;
    // Including the current strategy in the candidate set keeps the reported
    // gap nonnegative regardless of inner-solver tolerance.
    const double v_br = std::max(policy_risk_value(g, dev, i, cfg), v_cur);
    rep.per_player[i] = v_br - v_cur;
    rep.max_gap = std::max(rep.max_gap, rep.per_player[i]);
    double r = 0.0;
    for (int a = 0; a < g.action_counts[i]; ++a)
      r += std::abs(profile.dists[i][a] - br.dist[a]);
    residual = std::max(residual, r);
    if (warm) (*warm)[i] = br.dist;
    if (br_out) (*br_out)[i] = std::move(br.dist);
  }
  if (residual_out) *residual_out = residual;
  return rep;
}

std::pair<MixedProfile, SolveDiagnostics> solve_fixed_point(
    const StagePayoff& g, const std::vector<PlayerView>& views,
    const SolverConfig& cfg, MixedProfile pi) {
  const double br_tol = std::min(cfg.tol * 0.1, 1e-9);
  std::vector<std::vector<double>> warm(g.n), br(g.n);
  SolveDiagnostics diag;
  MixedProfile best = pi;
  double best_gap = std::numeric_limits<double>::infinity();

  for (int t = 0; t < cfg.max_iters; ++t) {
    double residual = 0.0;
    auto rep = exploitability_with(g, views, pi, cfg, br_tol, &warm, &br, &residual);
    diag.iterations = t + 1;
    diag.gap_trace.push_back(rep.max_gap);
    if (rep.max_gap < best_gap) {
      best_gap = rep.max_gap;
      best = pi;
    }
    if (rep.max_gap <= cfg.tol && residual <= cfg.tol) {
      diag.certified = true;
      diag.exploitability = rep.max_gap;
      return {pi, diag};
    }
    for (int i = 0; i < g.n; ++i) {
      auto& d = pi.dists[i];
      for (std::size_t a = 0; a < d.size(); ++a)
        d[a] = (1.0 - cfg.damping) * d[a] + cfg.damping * br[i][a];
    }
  }
  diag.exploitability = best_gap;
  return {best, diag};
}

std::pair<MixedProfile, SolveDiagnostics> solve_mirror_prox(
    const StagePayoff& g, const std::vector<PlayerView>& views,
    const SolverConfig& cfg, MixedProfile pi) {
  const double br_tol = std::min(cfg.tol * 0.1, 1e-9);
  double eps_min = cfg.epsilon[0], tau_max = cfg.tau[0];
  for (int i = 0; i < g.n; ++i) {
    eps_min = std::min(eps_min, cfg.epsilon[i]);
    tau_max = std::max(tau_max, cfg.tau[i]);
  }
  const double umax = std::max(g.max_abs(), 1e-12);
  const double eta = 1.0 / (2.0 * (umax * (1.0 + tau_max) + 1.0 / eps_min));

  auto grad_step = [&](const MixedProfile& at, const MixedProfile& from) {
    MixedProfile next = from;
    for (int i = 0; i < g.n; ++i) {
      if (g.action_counts[i] == 1) continue;
      auto rg = risk_gradient(g, views[i], at, cfg);
      std::vector<double> logits(g.action_counts[i]);
      for (int a = 0; a < g.action_counts[i]; ++a) {
        const double la = std::log(std::max(from.dists[i][a], kLogFloor));
        logits[a] = la + eta * (rg.grad[a] - (la + 1.0) / cfg.epsilon[i]);
      }
      next.dists[i] = softmax(logits);
    }
    return next;
  };

  SolveDiagnostics diag;
  std::vector<std::vector<double>> warm(g.n);
  MixedProfile best = pi;
  double best_gap = std::numeric_limits<double>::infinity();
  for (int t = 0; t < cfg.max_iters; ++t) {
    double residual = 0.0;
    auto rep = exploitability_with(g, views, pi, cfg, br_tol, &warm, nullptr, &residual);
    diag.iterations = t + 1;
    diag.gap_trace.push_back(rep.max_gap);
    if (rep.max_gap < best_gap) {
      best_gap = rep.max_gap;
      best = pi;
    }
    if (rep.max_gap <= cfg.tol && residual <= cfg.tol) {
      diag.certified = true;
      diag.exploitability = rep.max_gap;
      return {pi, diag};
    }
    MixedProfile half = grad_step(pi, pi);   // extrapolation
    pi = grad_step(half, pi);                // update with gradients at half
  }
  diag.exploitability = best_gap;
  return {best, diag};
}

// Hedge on the lifted game: multiplicative weights over the linearized
// concave per-player objectives, with the risk adversaries entering through
// their closed-form soft-min weights, at the fixed rate sqrt(8 log|A| / T).
// The averaged profile is returned; the certificate is the empirical play's
// mean per-round gap, which bounds the coarse-correlated gap of the realized
// play and, through the marginal collapse, the averaged profile's gap.
std::pair<MixedProfile, SolveDiagnostics> solve_hedge_lifted(
    const StagePayoff& g, const std::vector<PlayerView>& views,
    const SolverConfig& cfg, MixedProfile pi) {
  const double br_tol = std::min(cfg.tol * 0.1, 1e-9);
  const int T = cfg.max_iters;
  std::vector<std::vector<double>> cum(g.n), avg(g.n);
  for (int i = 0; i < g.n; ++i) {
    cum[i].assign(g.action_counts[i], 0.0);
    avg[i].assign(g.action_counts[i], 0.0);
  }

  SolveDiagnostics diag;
  const int trace_every = std::max(1, T / 20);
  std::vector<std::vector<double>> warm(g.n);
  double gap_sum = 0.0;

  for (int t = 1; t <= T; ++t) {
    for (int i = 0; i < g.n; ++i)
      for (int a = 0; a < g.action_counts[i]; ++a)
        avg[i][a] += pi.dists[i][a];

    auto rep = exploitability_with(g, views, pi, cfg, br_tol, &warm, nullptr);
    gap_sum += rep.max_gap;
    if (t % trace_every == 0 || t == T) diag.gap_trace.push_back(gap_sum / t);

    std::vector<std::vector<double>> gains(g.n);
    for (int i = 0; i < g.n; ++i) {
      if (g.action_counts[i] == 1) {
        gains[i] = {0.0};
        continue;
      }
      auto rg = risk_gradient(g, views[i], pi, cfg);
      gains[i].resize(g.action_counts[i]);
      for (int a = 0; a < g.action_counts[i]; ++a) {
        const double la = std::log(std::max(pi.dists[i][a], kLogFloor));
        gains[i][a] = rg.grad[a] - (la + 1.0) / cfg.epsilon[i];
      }
    }
    for (int i = 0; i < g.n; ++i) {
      if (g.action_counts[i] == 1) continue;
      const double eta =
          std::sqrt(8.0 * std::log(static_cast<double>(g.action_counts[i])) /
                    static_cast<double>(T));
      std::vector<double> logits(g.action_counts[i]);
      for (int a = 0; a < g.action_counts[i]; ++a) {
        cum[i][a] += gains[i][a];
        logits[a] = eta * cum[i][a];
      }
      pi.dists[i] = softmax(logits);
    }
  }

  MixedProfile out = pi;
  for (int i = 0; i < g.n; ++i)
    for (int a = 0; a < g.action_counts[i]; ++a)
      out.dists[i][a] = avg[i][a] / T;
  diag.iterations = T;
  diag.exploitability = gap_sum / T;
  diag.certified = diag.exploitability <= cfg.tol;
  return {out, diag};
}

}  // namespace

double policy_risk_value(const StagePayoff& payoff, const MixedProfile& profile,
                         int player, const SolverConfig& cfg) {
  payoff.validate();
  cfg.validate(payoff.n);
  profile.validate();
  auto view = make_view(payoff, player);
  auto rg = risk_gradient(payoff, view, profile, cfg);
  return objective(rg, profile.dists[player], cfg.epsilon[player]);
}

BestResponseResult smoothed_best_response_detail(const StagePayoff& payoff,
                                                 const MixedProfile& opponents,
                                                 int player,
                                                 const SolverConfig& cfg) {
  payoff.validate();
  cfg.validate(payoff.n);
  auto view = make_view(payoff, player);
  return best_response_impl(payoff, view, opponents, cfg, cfg.tol, nullptr);
}

std::vector<double> smoothed_best_response(const StagePayoff& payoff,
                                           const MixedProfile& opponents,
                                           int player, const SolverConfig& cfg) {
  auto res = smoothed_best_response_detail(payoff, opponents, player, cfg);
  if (!res.converged)
    throw std::runtime_error(
        "smoothed_best_response: no convergence, residual " +
        std::to_string(res.residual));
  return res.dist;
}

ExploitabilityReport exploitability(const StagePayoff& payoff,
                                    const MixedProfile& profile,
                                    const SolverConfig& cfg) {
  payoff.validate();
  cfg.validate(payoff.n);
  profile.validate();
  std::vector<PlayerView> views;
  views.reserve(payoff.n);
  for (int i = 0; i < payoff.n; ++i) views.push_back(make_view(payoff, i));
  return exploitability_with(payoff, views, profile, cfg,
                             std::min(cfg.tol * 0.1, 1e-10), nullptr, nullptr);
}

std::pair<MixedProfile, SolveDiagnostics> rqre_solve(const StagePayoff& payoff,
                                                     const SolverConfig& cfg,
                                                     const MixedProfile* init) {
  payoff.validate();
  cfg.validate(payoff.n);
  std::vector<PlayerView> views;
  views.reserve(payoff.n);
  for (int i = 0; i < payoff.n; ++i) views.push_back(make_view(payoff, i));
  MixedProfile pi = init ? *init : MixedProfile::uniform(payoff.action_counts);
  pi.validate();
  switch (cfg.method) {
    case SolveMethod::FixedPoint:
      return solve_fixed_point(payoff, views, cfg, std::move(pi));
    case SolveMethod::MirrorAscent:
      return solve_mirror_prox(payoff, views, cfg, std::move(pi));
    case SolveMethod::HedgeLifted:
      return solve_hedge_lifted(payoff, views, cfg, std::move(pi));
  }
  throw std::logic_error("rqre_solve: unknown method");
}

double lipschitz_probe(const StagePayoff& payoff, const SolverConfig& cfg,
                       int num_perturbations, double magnitude,
                       std::uint64_t seed) {
  if (!(magnitude > 0.0)) throw std::invalid_argument("lipschitz_probe: magnitude must be > 0");
  auto [base, diag] = rqre_solve(payoff, cfg);
  Rng rng(seed);
  double max_ratio = 0.0;
  for (int k = 0; k < num_perturbations; ++k) {
    StagePayoff pert = payoff;
    double max_abs = 0.0;
    for (auto& tensor : pert.tensors)
      for (auto& u : tensor) {
        const double d = rng.uniform(-1.0, 1.0);
        u += d;
        max_abs = std::max(max_abs, std::abs(d));
      }
    // Rescale the perturbation so its sup norm is exactly `magnitude`.
    const double scale = magnitude / max_abs;
    for (int i = 0; i < pert.n; ++i)
      for (std::size_t j = 0; j < pert.tensors[i].size(); ++j) {
        const double d = pert.tensors[i][j] - payoff.tensors[i][j];
        pert.tensors[i][j] = payoff.tensors[i][j] + d * scale;
      }
    auto [moved, diag2] = rqre_solve(pert, cfg, &base);
    max_ratio = std::max(max_ratio, MixedProfile::l1_distance(base, moved) / magnitude);
  }
  return max_ratio;
}

std::vector<InstabilityRow> nash_instability_demo(
    std::span<const double> eps_pert_values, const SolverConfig* rqre_cfg) {
  SolverConfig cfg = rqre_cfg
                         ? *rqre_cfg
                         : SolverConfig::make(2, 1.0, 0.0, SolveMethod::FixedPoint,
                                              5000, 1e-10);
  std::vector<InstabilityRow> rows;
  for (double ep : eps_pert_values) {
    if (!(ep > 0.0)) throw std::invalid_argument("nash_instability_demo: eps_pert must be > 0");
    InstabilityRow row;
    row.eps_pert = ep;
    row.alpha_gap = 2.0 * ep;
    // Dominance-based selection flips between the two pure profiles across
    // alpha = 1; each player's policy moves by l1 distance 2.
    row.nash_jump_l1 = 2.0;
    row.implied_nash_lipschitz = row.nash_jump_l1 / row.alpha_gap;
    auto lo = rqre_solve(StagePayoff::coordination(1.0 - ep), cfg).first;
    auto hi = rqre_solve(StagePayoff::coordination(1.0 + ep), cfg).first;
    row.rqre_change_l1 = MixedProfile::l1_distance(lo, hi);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace rqre
