#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace rqre {

// A finitely supported real-valued random variable: outcome values plus
// reference probabilities. All risk measures in this module act on LOSSES;
// callers that hold utilities negate before calling.
struct FiniteDistribution {
  std::vector<double> outcomes;
  std::vector<double> weights;

  void validate() const;
  static FiniteDistribution uniform(std::vector<double> outcomes);
};

enum class RiskKind { RiskNeutral, Entropic, CVaR, FiniteDual };

// One candidate measure of a finite dual set: probabilities over the outcome
// index space plus its penalty value.
struct DualCandidate {
  std::vector<double> weights;
  double penalty = 0.0;
};

struct RiskSpec {
  RiskKind kind = RiskKind::RiskNeutral;
  double tau = 0.0;    // Entropic only, > 0
  double alpha = 0.0;  // CVaR only, in (0,1)
  std::vector<DualCandidate> dual_set;

  void validate() const;

  static RiskSpec risk_neutral() { return {}; }
  static RiskSpec entropic(double tau) {
    RiskSpec s;
    s.kind = RiskKind::Entropic;
    s.tau = tau;
    return s;
  }
  static RiskSpec cvar(double alpha) {
    RiskSpec s;
    s.kind = RiskKind::CVaR;
    s.alpha = alpha;
    return s;
  }
  static RiskSpec finite_dual(std::vector<DualCandidate> set) {
    RiskSpec s;
    s.kind = RiskKind::FiniteDual;
    s.dual_set = std::move(set);
    return s;
  }
};

// (1/tau) * log E[exp(tau * Z)], stabilized by shifting out the max exponent.
double entropic_risk(const FiniteDistribution& dist, double tau);

// Entropic risk of the empirical distribution of the samples.
double empirical_entropic(std::span<const double> samples, double tau);

// Mean of the top (1 - alpha) probability mass of the sorted samples, with
// fractional inclusion of the boundary order statistic.
double empirical_cvar(std::span<const double> samples, double alpha);

// Same tail-mass definition on a weighted distribution.
double weighted_cvar(const FiniteDistribution& dist, double alpha);

// max_j { E_{p_j}[loss] - penalty_j } over the candidate set. Every candidate
// must be supported on the loss vector's index space.
double finite_dual_risk(std::span<const double> loss,
                        const std::vector<DualCandidate>& dual_set);

// Dispatch on spec.kind. For FiniteDual the outcome values are read as the
// loss vector over the dual set's outcome space; the reference weights are
// not used (penalties are already baked into the candidates).
double risk_value(const FiniteDistribution& dist, const RiskSpec& spec);

// One-step environment risk of a continuation vector under an empirical
// next-state kernel. RiskNeutral: plain expectation. Entropic: closed-form
// log-sum-exp. CVaR: weighted tail mean. FiniteDual: the environment-side
// discretization min_j { E_{p_j}[V] + penalty_j }.
double env_risk_estimate(std::span<const double> continuation,
                         std::span<const double> kernel_weights,
                         const RiskSpec& spec);

struct AxiomReport {
  bool convexity = false;
  bool monotonicity = false;
  bool translation = false;
  int probes = 0;
  bool all() const { return convexity && monotonicity && translation; }
};

// Randomized checks of convexity, monotonicity (nondecreasing on losses) and
// translation invariance at tolerance 1e-9.
AxiomReport risk_axiom_suite(const RiskSpec& spec, int probes = 1000,
                             std::uint64_t seed = 20260810);

}  // namespace rqre
