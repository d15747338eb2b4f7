#include <cmath>
#include <stdexcept>

#include "rqre/env.hpp"

namespace rqre {

namespace {

// Normalized vector of exponentials raised to 1/concentration: concentration
// near 0 approaches a point mass, 1 is a flat random simplex draw.
std::vector<double> simplex_draw(Rng& rng, int n, double concentration) {
  std::vector<double> w(n);
  double s = 0.0;
  for (auto& x : w) {
    const double e = -std::log(std::max(rng.u01(), 1e-300));
    x = std::pow(e, 1.0 / concentration);
    s += x;
  }
  for (auto& x : w) x /= s;
  return w;
}

class SyntheticLinearGameImpl final : public SyntheticLinearGame {
 public:
  explicit SyntheticLinearGameImpl(const SyntheticConfig& cfg) : cfg_(cfg) {
    if (cfg.dim <= 0 || cfg.players <= 0 || cfg.horizon <= 0 || cfg.num_states <= 0)
      throw std::invalid_argument("synthetic game: bad dimensions");
    if (static_cast<int>(cfg.action_counts.size()) != cfg.players)
      throw std::invalid_argument("synthetic game: action counts mismatch");
    spec_.n = cfg.players;
    spec_.action_counts = cfg.action_counts;
    spec_.horizon = cfg.horizon;
    spec_.feature_dim = cfg.dim;
    spec_.reward_min = 0.0;
    spec_.reward_max = 1.0;
    spec_.generative = true;

    Rng rng(cfg.seed);
    const int jc = joint_count();
    // Features are simplex vectors over anchor coordinates, so transition
    // rows mixed from stochastic anchor rows are themselves distributions
    // and rewards <phi, theta> stay inside [0,1].
    phi_.assign(cfg.horizon, std::vector<std::vector<double>>(
                                 std::size_t(cfg.num_states) * jc));
    for (int h = 0; h < cfg.horizon; ++h)
      for (int x = 0; x < cfg.num_states; ++x)
        for (int j = 0; j < jc; ++j)
          phi_[h][std::size_t(x) * jc + j] = simplex_draw(rng, cfg.dim, 0.5);

    anchors_.assign(cfg.horizon, {});
    for (int h = 0; h < cfg.horizon; ++h) {
      anchors_[h].resize(cfg.dim);
      for (int a = 0; a < cfg.dim; ++a)
        anchors_[h][a] = simplex_draw(rng, cfg.num_states, cfg.kernel_concentration);
    }

    theta_.assign(cfg.horizon, std::vector<std::vector<double>>(cfg.players));
    for (int h = 0; h < cfg.horizon; ++h)
      for (int i = 0; i < cfg.players; ++i) {
        theta_[h][i].resize(cfg.dim);
        for (auto& t : theta_[h][i]) t = rng.u01();
      }
  }

  const EnvSpec& spec() const override { return spec_; }

  // Uniform initial distribution: every state is reachable at every stage.
  State initial_state(Rng& rng) const override {
    return {double(rng.below(cfg_.num_states))};
  }

  StepResult step(const State& s, int h, std::span<const int> joint, Rng& rng) const override {
    StepResult out;
    out.rewards = true_rewards(s, h, joint);
    const auto probs = transition_row(state_index(s), h, joint);
    const int next = rng.categorical(probs);
    out.next = {double(next)};
    out.done = h >= cfg_.horizon;
    return out;
  }

  void features(const State& s, std::span<const int> joint, int h, double* out) const override {
    const auto& phi = phi_at(state_index(s), h, joint);
    for (int k = 0; k < cfg_.dim; ++k) out[k] = phi[k];
  }

  std::vector<std::pair<State, double>> kernel(const State& s, int h,
                                               std::span<const int> joint) const override {
    if (h >= cfg_.horizon) return {};
    const auto probs = transition_row(state_index(s), h, joint);
    std::vector<std::pair<State, double>> out;
    out.reserve(probs.size());
    for (int x = 0; x < cfg_.num_states; ++x)
      if (probs[x] > 0.0) out.emplace_back(State{double(x)}, probs[x]);
    return out;
  }

  std::vector<double> true_rewards(const State& s, int h,
                                   std::span<const int> joint) const override {
    const auto& phi = phi_at(state_index(s), h, joint);
    std::vector<double> r(cfg_.players, 0.0);
    for (int i = 0; i < cfg_.players; ++i)
      for (int k = 0; k < cfg_.dim; ++k) r[i] += phi[k] * theta_[h - 1][i][k];
    return r;
  }

  std::vector<State> enumerate_states(int) const override {
    std::vector<State> out;
    out.reserve(cfg_.num_states);
    for (int x = 0; x < cfg_.num_states; ++x) out.push_back({double(x)});
    return out;
  }

  const std::vector<std::vector<double>>& reward_vectors(int h) const override {
    return theta_[h - 1];
  }

  std::vector<double> anchor_mix(int next_state, int h) const override {
    std::vector<double> mu(cfg_.dim);
    for (int a = 0; a < cfg_.dim; ++a) mu[a] = anchors_[h - 1][a][next_state];
    return mu;
  }

 private:
  int joint_count() const {
    int c = 1;
    for (int a : cfg_.action_counts) c *= a;
    return c;
  }
  static int state_index(const State& s) { return int(s[0]); }

  const std::vector<double>& phi_at(int x, int h, std::span<const int> joint) const {
    int j = 0;
    for (int i = 0; i < cfg_.players; ++i) j = j * cfg_.action_counts[i] + joint[i];
    return phi_[h - 1][std::size_t(x) * joint_count() + j];
  }

  std::vector<double> transition_row(int x, int h, std::span<const int> joint) const {
    const auto& phi = phi_at(x, h, joint);
    std::vector<double> probs(cfg_.num_states, 0.0);
    for (int a = 0; a < cfg_.dim; ++a) {
      const double w = phi[a];
      if (w == 0.0) continue;
      const auto& row = anchors_[h - 1][a];
      for (int xp = 0; xp < cfg_.num_states; ++xp) probs[xp] += w * row[xp];
    }
    return probs;
  }

  SyntheticConfig cfg_;
  EnvSpec spec_;
  // phi_[h-1][x * jc + j] is the feature of (x, joint j) at stage h.
  std::vector<std::vector<std::vector<double>>> phi_;
  // anchors_[h-1][coord] is a distribution over next states.
  std::vector<std::vector<std::vector<double>>> anchors_;
  // theta_[h-1][player] are the reward vectors.
  std::vector<std::vector<std::vector<double>>> theta_;
};

}  // namespace

std::unique_ptr<SyntheticLinearGame> make_synthetic_linear_mg(const SyntheticConfig& cfg) {
  return std::make_unique<SyntheticLinearGameImpl>(cfg);
}

}  // namespace rqre
