#include "rqre/risk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "rqre/rng.hpp"

namespace rqre {

namespace {

constexpr double kWeightTol = 1e-12;

void check_weights(std::span<const double> w, std::size_t n,
                   const char* what) {
  if (w.size() != n) throw std::invalid_argument(std::string(what) + ": length mismatch");
  double sum = 0.0;
  for (double x : w) {
    if (!(x >= 0.0)) throw std::invalid_argument(std::string(what) + ": negative weight");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument(std::string(what) + ": weights do not sum to 1");
}

// log( sum_j w_j * exp(x_j) ) with the max exponent shifted out.
double log_sum_exp(std::span<const double> x, std::span<const double> w) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < x.size(); ++j)
    if (w[j] > 0.0 && x[j] > m) m = x[j];
  if (!std::isfinite(m)) throw std::invalid_argument("log_sum_exp: empty support");
  double acc = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j)
    if (w[j] > 0.0) acc += w[j] * std::exp(x[j] - m);
  return m + std::log(acc);
}

}  // namespace

void FiniteDistribution::validate() const {
  if (outcomes.empty()) throw std::invalid_argument("FiniteDistribution: empty");
  if (outcomes.size() != weights.size())
    throw std::invalid_argument("FiniteDistribution: outcome/weight length mismatch");
  for (double z : outcomes)
    if (!std::isfinite(z)) throw std::invalid_argument("FiniteDistribution: non-finite outcome");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("FiniteDistribution: negative weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > kWeightTol * std::max<double>(1.0, outcomes.size()))
    throw std::invalid_argument("FiniteDistribution: weights do not sum to 1");
}

FiniteDistribution FiniteDistribution::uniform(std::vector<double> outcomes) {
  FiniteDistribution d;
  const std::size_t n = outcomes.size();
  if (n == 0) throw std::invalid_argument("uniform: empty outcome list");
  d.outcomes = std::move(outcomes);
  d.weights.assign(n, 1.0 / static_cast<double>(n));
  return d;
}

void RiskSpec::validate() const {
  switch (kind) {
    case RiskKind::RiskNeutral:
      break;
    case RiskKind::Entropic:
      if (!(tau > 0.0)) throw std::invalid_argument("RiskSpec: entropic tau must be > 0");
      break;
    case RiskKind::CVaR:
      if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("RiskSpec: cvar alpha must be in (0,1)");
      break;
    case RiskKind::FiniteDual:
      if (dual_set.empty()) throw std::invalid_argument("RiskSpec: empty dual set");
      for (const auto& c : dual_set) check_weights(c.weights, c.weights.size(), "dual candidate");
      break;
  }
}

double entropic_risk(const FiniteDistribution& dist, double tau) {
  dist.validate();
  if (!(tau > 0.0)) throw std::invalid_argument("entropic_risk: tau must be > 0");
  std::vector<double> scaled(dist.outcomes.size());
  for (std::size_t j = 0; j < scaled.size(); ++j) scaled[j] = tau * dist.outcomes[j];
  return log_sum_exp(scaled, dist.weights) / tau;
}

double empirical_entropic(std::span<const double> samples, double tau) {
  if (samples.empty()) throw std::invalid_argument("empirical_entropic: no samples");
  FiniteDistribution d;
  d.outcomes.assign(samples.begin(), samples.end());
  d.weights.assign(samples.size(), 1.0 / static_cast<double>(samples.size()));
  return entropic_risk(d, tau);
}

double weighted_cvar(const FiniteDistribution& dist, double alpha) {
  dist.validate();
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("weighted_cvar: alpha must be in (0,1)");
  std::vector<std::size_t> order(dist.outcomes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dist.outcomes[a] > dist.outcomes[b];
  });
  double need = 1.0 - alpha;
  double acc = 0.0;
  for (std::size_t idx : order) {
    if (need <= 0.0) break;
    const double take = std::min(need, dist.weights[idx]);
    acc += take * dist.outcomes[idx];
    need -= take;
  }
  return acc / (1.0 - alpha);
}

double empirical_cvar(std::span<const double> samples, double alpha) {
  if (samples.empty()) throw std::invalid_argument("empirical_cvar: no samples");
  FiniteDistribution d;
  d.outcomes.assign(samples.begin(), samples.end());
  d.weights.assign(samples.size(), 1.0 / static_cast<double>(samples.size()));
  return weighted_cvar(d, alpha);
}

double finite_dual_risk(std::span<const double> loss,
                        const std::vector<DualCandidate>& dual_set) {
  if (dual_set.empty()) throw std::invalid_argument("finite_dual_risk: empty dual set");
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& cand : dual_set) {
    if (cand.weights.size() != loss.size())
      throw std::invalid_argument("finite_dual_risk: candidate support mismatch");
    double e = 0.0;
    for (std::size_t j = 0; j < loss.size(); ++j) e += cand.weights[j] * loss[j];
    best = std::max(best, e - cand.penalty);
  }
  return best;
}

double risk_value(const FiniteDistribution& dist, const RiskSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case RiskKind::RiskNeutral: {
      dist.validate();
      double e = 0.0;
      for (std::size_t j = 0; j < dist.outcomes.size(); ++j)
        e += dist.weights[j] * dist.outcomes[j];
      return e;
    }
    case RiskKind::Entropic:
      return entropic_risk(dist, spec.tau);
    case RiskKind::CVaR:
      return weighted_cvar(dist, spec.alpha);
    case RiskKind::FiniteDual:
      return finite_dual_risk(dist.outcomes, spec.dual_set);
  }
  throw std::logic_error("risk_value: unknown kind");
}

double env_risk_estimate(std::span<const double> continuation,
                         std::span<const double> kernel_weights,
                         const RiskSpec& spec) {
  if (continuation.empty()) throw std::invalid_argument("env_risk_estimate: empty kernel support");
  if (continuation.size() != kernel_weights.size())
    throw std::invalid_argument("env_risk_estimate: continuation/kernel length mismatch");
  spec.validate();
  switch (spec.kind) {
    case RiskKind::RiskNeutral: {
      double e = 0.0;
      for (std::size_t j = 0; j < continuation.size(); ++j)
        e += kernel_weights[j] * continuation[j];
      return e;
    }
    case RiskKind::Entropic: {
      std::vector<double> scaled(continuation.size());
      for (std::size_t j = 0; j < scaled.size(); ++j) scaled[j] = spec.tau * continuation[j];
      return log_sum_exp(scaled, kernel_weights) / spec.tau;
    }
    case RiskKind::CVaR: {
      FiniteDistribution d;
      d.outcomes.assign(continuation.begin(), continuation.end());
      d.weights.assign(kernel_weights.begin(), kernel_weights.end());
      return weighted_cvar(d, spec.alpha);
    }
    case RiskKind::FiniteDual: {
      // Environment side uses the inf + penalty representation.
      double best = std::numeric_limits<double>::infinity();
      for (const auto& cand : spec.dual_set) {
        if (cand.weights.size() != continuation.size())
          throw std::invalid_argument("env_risk_estimate: candidate support mismatch");
        double e = 0.0;
        for (std::size_t j = 0; j < continuation.size(); ++j)
          e += cand.weights[j] * continuation[j];
        best = std::min(best, e + cand.penalty);
      }
      return best;
    }
  }
  throw std::logic_error("env_risk_estimate: unknown kind");
}

AxiomReport risk_axiom_suite(const RiskSpec& spec, int probes, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  constexpr double kTol = 1e-9;
  AxiomReport report;
  report.probes = probes;
  report.convexity = report.monotonicity = report.translation = true;

  for (int p = 0; p < probes; ++p) {
    // Outcome space size: fixed by the dual set for FiniteDual, random otherwise.
    std::size_t m = spec.kind == RiskKind::FiniteDual
                        ? spec.dual_set.front().weights.size()
                        : 2 + rng.below(7);
    std::vector<double> ref(m);
    double s = 0.0;
    for (auto& w : ref) {
      w = 0.05 + rng.u01();
      s += w;
    }
    for (auto& w : ref) w /= s;

    std::vector<double> za(m), zb(m);
    for (std::size_t j = 0; j < m; ++j) {
      za[j] = rng.uniform(-5.0, 5.0);
      zb[j] = rng.uniform(-5.0, 5.0);
    }
    auto rho = [&](const std::vector<double>& z) {
      FiniteDistribution d;
      d.outcomes = z;
      d.weights = ref;
      return risk_value(d, spec);
    };

    // Convexity: mix the random variables pointwise on the shared space.
    const double lam = rng.u01();
    std::vector<double> mix(m);
    for (std::size_t j = 0; j < m; ++j) mix[j] = lam * za[j] + (1.0 - lam) * zb[j];
    if (rho(mix) > lam * rho(za) + (1.0 - lam) * rho(zb) + kTol) report.convexity = false;

    // Monotonicity on losses: Z <= Z' pointwise implies rho(Z) <= rho(Z').
    std::vector<double> dominated(m);
    for (std::size_t j = 0; j < m; ++j) dominated[j] = za[j] + std::abs(zb[j]);
    if (rho(za) > rho(dominated) + kTol) report.monotonicity = false;

    // Translation invariance: rho(Z + c) = rho(Z) + c.
    const double c = rng.uniform(-3.0, 3.0);
    std::vector<double> shifted(m);
    for (std::size_t j = 0; j < m; ++j) shifted[j] = za[j] + c;
    if (std::abs(rho(shifted) - (rho(za) + c)) > kTol) report.translation = false;
  }
  return report;
}

}  // namespace rqre
