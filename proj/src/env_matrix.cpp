#include <algorithm>
#include <stdexcept>

#include "rqre/env.hpp"

namespace rqre {

std::vector<std::pair<State, double>> Environment::kernel(const State&, int,
                                                          std::span<const int>) const {
  throw std::runtime_error("kernel: environment is not generative");
}

std::vector<double> Environment::true_rewards(const State&, int,
                                              std::span<const int>) const {
  throw std::runtime_error("true_rewards: environment is not generative");
}

std::vector<State> Environment::enumerate_states(int) const {
  throw std::runtime_error("enumerate_states: environment is not generative");
}

namespace {

class MatrixGameEnv final : public Environment {
 public:
  explicit MatrixGameEnv(StagePayoff payoff) : payoff_(std::move(payoff)) {
    payoff_.validate();
    spec_.n = payoff_.n;
    spec_.action_counts = payoff_.action_counts;
    spec_.horizon = 1;
    spec_.feature_dim = payoff_.joint_count();
    double lo = 0.0, hi = 0.0;
    for (const auto& t : payoff_.tensors)
      for (double u : t) {
        lo = std::min(lo, u);
        hi = std::max(hi, u);
      }
    spec_.reward_min = lo;
    spec_.reward_max = hi;
    spec_.generative = true;
  }

  const EnvSpec& spec() const override { return spec_; }

  State initial_state(Rng&) const override { return {0.0}; }

  StepResult step(const State&, int, std::span<const int> joint, Rng&) const override {
    StepResult r;
    r.rewards.resize(payoff_.n);
    for (int i = 0; i < payoff_.n; ++i) r.rewards[i] = payoff_.utility(i, joint);
    r.next = {1.0};
    r.done = true;
    return r;
  }

  void features(const State&, std::span<const int> joint, int, double* out) const override {
    std::fill(out, out + spec_.feature_dim, 0.0);
    out[payoff_.joint_index(joint)] = 1.0;
  }

  std::vector<std::pair<State, double>> kernel(const State&, int,
                                               std::span<const int>) const override {
    return {};  // terminal after the single stage
  }

  std::vector<double> true_rewards(const State&, int,
                                   std::span<const int> joint) const override {
    std::vector<double> r(payoff_.n);
    for (int i = 0; i < payoff_.n; ++i) r[i] = payoff_.utility(i, joint);
    return r;
  }

  std::vector<State> enumerate_states(int) const override { return {State{0.0}}; }

  const StagePayoff* exact_payoffs() const override { return &payoff_; }

 private:
  StagePayoff payoff_;
  EnvSpec spec_;
};

}  // namespace

std::unique_ptr<Environment> make_matrix_game(StagePayoff payoff) {
  return std::make_unique<MatrixGameEnv>(std::move(payoff));
}

}  // namespace rqre
