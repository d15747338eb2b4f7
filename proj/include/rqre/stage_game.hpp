#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace rqre {

// One normal-form stage game: per-player utility tensors over joint actions.
// Joint actions index row-major with player 0 slowest.
struct StagePayoff {
  int n = 0;
  std::vector<int> action_counts;
  std::vector<std::vector<double>> tensors;  // [player][joint index]

  int joint_count() const {
    int c = 1;
    for (int a : action_counts) c *= a;
    return c;
  }

  int joint_index(std::span<const int> actions) const {
    int idx = 0;
    for (int i = 0; i < n; ++i) idx = idx * action_counts[i] + actions[i];
    return idx;
  }

  double utility(int player, std::span<const int> actions) const {
    return tensors[player][joint_index(actions)];
  }

  double max_abs() const {
    double m = 0.0;
    for (const auto& t : tensors)
      for (double u : t) m = std::max(m, std::abs(u));
    return m;
  }

  void validate() const {
    if (n <= 0 || static_cast<int>(action_counts.size()) != n ||
        static_cast<int>(tensors.size()) != n)
      throw std::invalid_argument("StagePayoff: inconsistent player count");
    const int jc = joint_count();
    for (const auto& t : tensors) {
      if (static_cast<int>(t.size()) != jc)
        throw std::invalid_argument("StagePayoff: tensor size mismatch");
      for (double u : t)
        if (!std::isfinite(u)) throw std::invalid_argument("StagePayoff: non-finite utility");
    }
  }

  static StagePayoff zeros(int n, std::vector<int> counts) {
    StagePayoff p;
    p.n = n;
    p.action_counts = std::move(counts);
    p.tensors.assign(n, std::vector<double>(p.joint_count(), 0.0));
    return p;
  }

  // Classic two-player Stag Hunt. Action 0 = stag, action 1 = hare;
  // (stag,stag) -> (4,4), (hare,hare) -> (2,2), mismatch gives the
  // stag-holder 0 and the hare-holder 2.
  static StagePayoff stag_hunt() {
    StagePayoff p = zeros(2, {2, 2});
    p.tensors[0] = {4, 0, 2, 2};
    p.tensors[1] = {4, 2, 0, 2};
    return p;
  }

  // Symmetric coordination family: both players earn 1 on (0,0), alpha on
  // (1,1), 0 on mismatch.
  static StagePayoff coordination(double alpha) {
    StagePayoff p = zeros(2, {2, 2});
    p.tensors[0] = {1, 0, 0, alpha};
    p.tensors[1] = {1, 0, 0, alpha};
    return p;
  }
};

// Per-player mixed strategies.
struct MixedProfile {
  std::vector<std::vector<double>> dists;

  static MixedProfile uniform(std::span<const int> action_counts) {
    MixedProfile p;
    p.dists.reserve(action_counts.size());
    for (int a : action_counts)
      p.dists.emplace_back(a, 1.0 / static_cast<double>(a));
    return p;
  }

  void validate() const {
    for (const auto& d : dists) {
      double s = 0.0;
      for (double x : d) {
        if (!(x >= 0.0)) throw std::invalid_argument("MixedProfile: negative probability");
        s += x;
      }
      if (std::abs(s - 1.0) > 1e-10)
        throw std::invalid_argument("MixedProfile: distribution does not sum to 1");
    }
  }

  // Max over players of the per-player l1 distance.
  static double l1_distance(const MixedProfile& a, const MixedProfile& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.dists.size(); ++i) {
      double d = 0.0;
      for (std::size_t k = 0; k < a.dists[i].size(); ++k)
        d += std::abs(a.dists[i][k] - b.dists[i][k]);
      m = std::max(m, d);
    }
    return m;
  }
};

enum class SolveMethod { FixedPoint, MirrorAscent, HedgeLifted };

struct SolverConfig {
  std::vector<double> epsilon;  // bounded-rationality precision, per player
  std::vector<double> tau;      // policy-risk aversion, per player (0 = risk-neutral)
  SolveMethod method = SolveMethod::FixedPoint;
  int max_iters = 100;
  double tol = 1e-6;
  double damping = 0.5;

  static SolverConfig make(int n, double eps, double tau_all,
                           SolveMethod m = SolveMethod::FixedPoint,
                           int iters = 100, double tolerance = 1e-6,
                           double damp = 0.5) {
    SolverConfig c;
    c.epsilon.assign(n, eps);
    c.tau.assign(n, tau_all);
    c.method = m;
    c.max_iters = iters;
    c.tol = tolerance;
    c.damping = damp;
    return c;
  }

  void validate(int n) const {
    if (static_cast<int>(epsilon.size()) != n || static_cast<int>(tau.size()) != n)
      throw std::invalid_argument("SolverConfig: per-player parameter length mismatch");
    for (double e : epsilon)
      if (!(e > 0.0)) throw std::invalid_argument("SolverConfig: epsilon must be > 0");
    for (double t : tau)
      if (!(t >= 0.0)) throw std::invalid_argument("SolverConfig: tau must be >= 0");
    if (!(tol > 0.0)) throw std::invalid_argument("SolverConfig: tol must be > 0");
    if (!(damping > 0.0 && damping <= 1.0))
      throw std::invalid_argument("SolverConfig: damping must be in (0,1]");
    if (max_iters <= 0) throw std::invalid_argument("SolverConfig: max_iters must be > 0");
  }
};

// Shannon entropy, 0 log 0 = 0.
inline double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0.0) h -= x * std::log(x);
  return h;
}

// Numerically stable softmax of a score vector.
inline std::vector<double> softmax(std::span<const double> scores) {
  double m = scores[0];
  for (double s : scores) m = std::max(m, s);
  std::vector<double> out(scores.size());
  double z = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(scores[i] - m);
    z += out[i];
  }
  for (auto& x : out) x /= z;
  return out;
}

}  // namespace rqre
