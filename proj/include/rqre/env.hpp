#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "rqre/rng.hpp"
#include "rqre/stage_game.hpp"

namespace rqre {

// Environments encode states as flat double vectors with exactly reproducible
// entries, so snapshots hash and compare bitwise.
using State = std::vector<double>;

struct StateHash {
  std::size_t operator()(const State& s) const {
    std::uint64_t h = 1469598103934665603ULL;
    for (double d : s) {
      std::uint64_t bits;
      static_assert(sizeof(bits) == sizeof(d));
      __builtin_memcpy(&bits, &d, sizeof(bits));
      h ^= bits;
      h *= 1099511628211ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

struct EnvSpec {
  int n = 0;
  std::vector<int> action_counts;
  int horizon = 0;
  int feature_dim = 0;
  double reward_min = 0.0;
  double reward_max = 0.0;
  bool generative = false;
};

// Interaction outcome codes reported by environments that resolve discrete
// coordination events; 0 means no event this step.
enum StepEvent : int {
  kEventNone = 0,
  kEventStagStag = 1,
  kEventHareHare = 2,
  kEventMixed = 3,
};

struct StepResult {
  std::vector<double> rewards;
  State next;
  bool done = false;
  int event = kEventNone;
};

// Stateless transition sampler: all trajectory state lives in the State
// snapshots, so rollouts, replays and generative resampling share one code
// path. Stages h are 1-based.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual State initial_state(Rng& rng) const = 0;
  virtual StepResult step(const State& s, int h, std::span<const int> joint,
                          Rng& rng) const = 0;
  virtual void features(const State& s, std::span<const int> joint, int h,
                        double* out) const = 0;

  // Exact next-state distribution; only for generative environments.
  virtual std::vector<std::pair<State, double>> kernel(const State& s, int h,
                                                       std::span<const int> joint) const;
  // Exact rewards; only for generative environments.
  virtual std::vector<double> true_rewards(const State& s, int h,
                                           std::span<const int> joint) const;
  // All states reachable at stage h; only for generative environments.
  virtual std::vector<State> enumerate_states(int h) const;

  // Raw payoff tensors for single-stage matrix environments, else nullptr.
  virtual const StagePayoff* exact_payoffs() const { return nullptr; }

  int joint_count() const {
    int c = 1;
    for (int a : spec().action_counts) c *= a;
    return c;
  }
  void decode_joint(int index, std::span<int> out) const {
    const auto& counts = spec().action_counts;
    for (int i = spec().n - 1; i >= 0; --i) {
      out[i] = index % counts[i];
      index /= counts[i];
    }
  }
};

// One-shot normal-form game: single state, horizon 1, one-hot joint-action
// features. Rewards are the raw utilities.
std::unique_ptr<Environment> make_matrix_game(StagePayoff payoff);

struct GridConfig {
  int horizon = 75;
  std::uint64_t feature_probe_seed = 99;  // normalization certificate stream
};

// Two-agent 9x9 stag hunt grid: four stag resources in the corners, four
// hares near the spawn columns, six actions per agent (four moves, stay,
// interact). Interactions resolve the classic payoff matrix and respawn both
// agents.
std::unique_ptr<Environment> make_dynamic_stag_hunt(const GridConfig& cfg = {});

struct SyntheticConfig {
  int dim = 8;
  int players = 2;
  int horizon = 2;
  std::vector<int> action_counts = {2, 2};
  int num_states = 6;
  std::uint64_t seed = 1;
  // Dirichlet-style concentration of the kernel anchor rows; smaller values
  // give near-deterministic transitions.
  double kernel_concentration = 0.1;
};

// Exactly linear Markov game on a small finite state set: features are
// probability vectors over anchor coordinates, transitions are feature-mixed
// anchor rows, rewards are linear in the features with values in [0,1].
class SyntheticLinearGame;
std::unique_ptr<SyntheticLinearGame> make_synthetic_linear_mg(const SyntheticConfig& cfg);

class SyntheticLinearGame : public Environment {
 public:
  ~SyntheticLinearGame() override = default;
  // Ground truth for audits and oracles.
  virtual const std::vector<std::vector<double>>& reward_vectors(int h) const = 0;  // theta[i]
  virtual std::vector<double> anchor_mix(int next_state, int h) const = 0;          // mu_h(x')
};

}  // namespace rqre
