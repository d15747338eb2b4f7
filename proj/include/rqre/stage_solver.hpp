#pragma once

#include <cstdint>
#include <utility>

#include "rqre/stage_game.hpp"

namespace rqre {

struct SolveDiagnostics {
  int iterations = 0;
  double exploitability = 0.0;
  bool certified = false;
  std::vector<double> gap_trace;
};

struct BestResponseResult {
  std::vector<double> dist;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Risk-adjusted regularized value of `player` under the joint profile:
// the entropic soft-min over opponent actions of the player's mixed payoff,
// plus (1/epsilon) times the Shannon entropy of the own strategy. tau = 0 is
// the risk-neutral expected payoff plus the same entropy term.
double policy_risk_value(const StagePayoff& payoff, const MixedProfile& profile,
                         int player, const SolverConfig& cfg);

// Unique maximizer of the strongly concave per-player objective against the
// fixed opponents. tau = 0 has the closed-form logit response; tau > 0 runs
// mirror ascent with backtracking. Throws on non-convergence with the final
// residual in the message; the _detail variant reports instead of throwing.
std::vector<double> smoothed_best_response(const StagePayoff& payoff,
                                           const MixedProfile& opponents,
                                           int player, const SolverConfig& cfg);
BestResponseResult smoothed_best_response_detail(const StagePayoff& payoff,
                                                 const MixedProfile& opponents,
                                                 int player,
                                                 const SolverConfig& cfg);

struct ExploitabilityReport {
  std::vector<double> per_player;
  double max_gap = 0.0;
};

// Per-player unilateral improvement from a smoothed best response, and the
// max over players. Zero exactly at the equilibrium.
ExploitabilityReport exploitability(const StagePayoff& payoff,
                                    const MixedProfile& profile,
                                    const SolverConfig& cfg);

// Solve the stage equilibrium with the configured backend. Returns the best
// iterate with diagnostics; `certified` iff the final exploitability is at or
// below cfg.tol. Never throws on non-convergence. `init` defaults to the
// uniform profile.
std::pair<MixedProfile, SolveDiagnostics> rqre_solve(
    const StagePayoff& payoff, const SolverConfig& cfg,
    const MixedProfile* init = nullptr);

// Max observed ratio ||pi(Q) - pi(Q~)||_1 / ||Q - Q~||_inf over random payoff
// perturbations of the given sup-norm magnitude.
double lipschitz_probe(const StagePayoff& payoff, const SolverConfig& cfg,
                       int num_perturbations, double magnitude,
                       std::uint64_t seed = 7);

// One row per perturbation size on the coordination family: the selection
// jump of the dominance-based Nash rule across alpha = 1 versus the smooth
// equilibrium's movement.
struct InstabilityRow {
  double eps_pert = 0.0;
  double alpha_gap = 0.0;
  double nash_jump_l1 = 0.0;
  double implied_nash_lipschitz = 0.0;
  double rqre_change_l1 = 0.0;
};

std::vector<InstabilityRow> nash_instability_demo(
    std::span<const double> eps_pert_values,
    const SolverConfig* rqre_cfg = nullptr);

}  // namespace rqre
