#pragma once

#include <Eigen/Dense>
#include <deque>
#include <functional>
#include <iosfwd>
#include <optional>
#include <unordered_map>

#include "rqre/env.hpp"
#include "rqre/linear_fa.hpp"
#include "rqre/risk.hpp"
#include "rqre/stage_solver.hpp"

namespace rqre {

struct Transition {
  State state;
  std::vector<int> joint;
  std::vector<double> rewards_scaled;
  State next;
  long episode = 0;
};

struct TrainConfig {
  long episodes = 1000;
  int horizon = 1;
  SolverConfig solver;
  OviHyper hyper;  // b_clip <= 0 requests the derived cap
  int buffer_capacity = 1000;
  int update_frequency = 20;
  RiskSpec env_risk;
  int env_risk_samples = 1;
  std::uint64_t seed = 42;
  double reward_scale = 1.0;
  long checkpoint_every = 0;
  double entropy_span = 0.0;  // max_i log|A_i| / eps_i, set by finalize()

  // Validate against the environment and derive b_clip when requested.
  void finalize(const EnvSpec& spec);
};

// Per-stage optimistic caps. Scaled rewards lie in [0,1] and each remaining
// stage contributes at most 1 + entropy_span to the value, so tighter
// stage-wise caps than the global B keep the backup recursion consistent:
// an all-cap Q tensor always dominates reward plus the capped continuation.
inline double stage_v_cap(double b_clip, int horizon, int h, double span) {
  return std::min(b_clip, (horizon - h + 1) * (1.0 + span));
}
inline double stage_q_cap(double b_clip, int horizon, int h, double span) {
  return std::min(b_clip, 1.0 + (horizon - h) * (1.0 + span));
}

struct TrainLogRow {
  long episode = 0;
  double team_return = 0.0;
  double ma100 = 0.0;
  double mean_bonus = 0.0;
  double solver_iters = 0.0;
  double exploitability = 0.0;  // NaN when not computable
  int stag_stag = 0;
  int hare_hare = 0;
  int mixed = 0;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  static const char* csv_header();
  void write_csv(std::ostream& os) const;
};

struct TrainedAgents {
  int d = 0, n = 0, H = 0;
  double lambda = 1.0;
  double beta = 0.1;
  double b_clip = 1.0;
  double entropy_span = 0.0;
  double reward_scale = 1.0;
  SolverConfig solver;
  bool trained = false;
  std::vector<std::vector<Eigen::VectorXd>> w;  // [h-1][player]
  std::vector<Eigen::MatrixXd> gram;            // [h-1] regression design

  double q_cap(int h) const { return stage_q_cap(b_clip, H, h, entropy_span); }
  double v_cap(int h) const { return stage_v_cap(b_clip, H, h, entropy_span); }
};

// Batched Q-tensor evaluation from trained weights: values clipped to
// [0, b_clip], optionally adding the elliptical bonus (training-time
// estimates carry it, evaluation-time estimates drop it).
class QEvaluator {
 public:
  QEvaluator(const TrainedAgents& agents, const Environment& env, bool with_bonus);

  // Per-player flat tensors over joint actions at (x, h).
  std::vector<std::vector<double>> tensors(const State& x, int h) const;

 private:
  const TrainedAgents& agents_;
  const Environment& env_;
  bool with_bonus_;
  std::vector<Eigen::MatrixXd> wmat_;  // [h-1] d x n
  std::vector<Eigen::MatrixXd> minv_;  // [h-1] d x d, only when with_bonus_
};

// Regression targets for one stage slice: rewards at the terminal stage,
// reward plus the environment-risk estimate of the continuation elsewhere.
// `next_value` returns per-player values of a next state; `generative_env`
// enables multi-sample risk estimation when cfg.env_risk_samples > 1.
std::vector<std::vector<double>> compute_targets(
    std::span<const Transition> batch, int stage, const TrainConfig& cfg,
    const std::function<std::vector<double>(const State&)>& next_value,
    const Environment* generative_env);

struct TrainHooks {
  std::function<void(const TrainLogRow&)> on_episode;
  std::function<bool(long completed_episodes)> halt;  // return true to pause
};

class OviRunner {
 public:
  OviRunner(const Environment& env, TrainConfig cfg);

  // Run episodes until cfg.episodes or the halt hook fires.
  void run(const TrainHooks& hooks = {});

  long episode() const { return episode_; }
  bool finished() const { return episode_ >= cfg_.episodes; }
  const TrainLog& log() const { return log_; }
  const TrainConfig& config() const { return cfg_; }
  TrainedAgents agents() const;
  std::vector<EllipticalAudit> elliptical_reports() const;
  long uncertified_solves() const { return uncertified_; }
  std::vector<std::size_t> buffer_sizes() const {
    std::vector<std::size_t> out;
    for (const auto& st : stages_) out.push_back(st.buffer.size());
    return out;
  }

  void save_checkpoint(std::ostream& os) const;
  void load_checkpoint(std::istream& is);

 private:
  void backward_pass();
  // Cached stage policy plus the iteration count of the solve backing it.
  const std::pair<MixedProfile, double>& policy_at(const State& x, int h);
  std::vector<std::vector<double>> stage_tensors(const State& x, int h) const;

  const Environment& env_;
  TrainConfig cfg_;
  Rng rng_;
  long episode_ = 0;
  bool trained_ = false;
  long uncertified_ = 0;

  struct StageData {
    std::deque<Transition> buffer;
    EllipticalAccumulator audit;
    Eigen::MatrixXd gram;      // regression design at the last refit
    Eigen::MatrixXd minv;      // its inverse
    std::vector<Eigen::VectorXd> w;
    std::unordered_map<State, MixedProfile, StateHash> policy_cache;
    double last_solver_iters = 0.0;
  };
  std::vector<StageData> stages_;
  std::deque<double> return_window_;
  double return_window_sum_ = 0.0;
  TrainLog log_;
};

// Convenience wrapper: run the full training loop.
std::pair<TrainedAgents, TrainLog> train(const Environment& env, TrainConfig cfg,
                                         const TrainHooks& hooks = {});

struct OptimismReport {
  double fraction = 0.0;
  int probes = 0;
  double tolerance = 0.0;
};

// Fraction of random (x, a, h, i) probes where the trained optimistic
// estimate (with bonus) is at least the exact one-step risk-sensitive backup
// of the agents' own continuation values under the true kernel. Requires a
// generative environment.
OptimismReport optimism_audit(const TrainedAgents& agents, const Environment& env,
                              const TrainConfig& cfg, int probes,
                              std::uint64_t seed = 3, double tolerance = 1e-6);

}  // namespace rqre
