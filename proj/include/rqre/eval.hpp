#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <unordered_map>

#include "rqre/ovi.hpp"

namespace rqre {

struct EvalConfig {
  int rollouts = 200;
  std::vector<double> deltas = {0.0, 0.1, 0.2, 0.3, 0.5};
  int deviation_action = 0;  // fixed action the perturbed partner falls back to
  std::uint64_t seed = 0;
};

// A decision maker for one seat: produces the joint stage profile it believes
// in; the rollout engine samples this seat's marginal from it.
class StagePolicy {
 public:
  virtual ~StagePolicy() = default;
  virtual const MixedProfile& profile(const Environment& env, const State& x, int h) = 0;
};

// Solves the stage game induced by the trained Q estimates at each visited
// state. Evaluation drops the exploration bonus by default.
class TrainedPolicy final : public StagePolicy {
 public:
  TrainedPolicy(const TrainedAgents& agents, const Environment& env,
                bool with_bonus = false);
  const MixedProfile& profile(const Environment& env, const State& x, int h) override;

 private:
  const TrainedAgents& agents_;
  QEvaluator eval_;
  std::vector<std::unordered_map<State, MixedProfile, StateHash>> cache_;
};

class FixedPolicy final : public StagePolicy {
 public:
  explicit FixedPolicy(MixedProfile p) : profile_(std::move(p)) {}
  const MixedProfile& profile(const Environment&, const State&, int) override {
    return profile_;
  }

 private:
  MixedProfile profile_;
};

struct ReturnStats {
  double mean = 0.0;
  double std_error = 0.0;
  std::vector<double> per_player;
  int rollouts = 0;
};

// Mean team return over independent stochastic rollouts of the profile.
ReturnStats self_play(StagePolicy& agents, const Environment& env,
                      const EvalConfig& cfg);

struct RetentionPoint {
  double delta = 0.0;
  double team_return = 0.0;
  double std_error = 0.0;
  double retention = 0.0;
  bool retention_defined = false;
};

// Partner action replaced by the fixed deviation action with probability
// delta; reports R(delta) and R(delta)/R(0) per grid point.
std::vector<RetentionPoint> perturbed_partner(StagePolicy& ego, StagePolicy& partner,
                                              const Environment& env,
                                              const EvalConfig& cfg);

struct CrossPlayCell {
  std::string pairing;
  // Seat order (a, b) and the reversed order.
  double reward_a_first = 0.0, reward_b_first = 0.0;
  double reward_a_second = 0.0, reward_b_second = 0.0;
  double se_first = 0.0, se_second = 0.0;
};

struct NamedPolicy {
  std::string name;
  StagePolicy* policy = nullptr;
};

std::vector<CrossPlayCell> cross_play(std::span<const std::pair<NamedPolicy, NamedPolicy>> pairings,
                                      const Environment& env, const EvalConfig& cfg);

struct OutcomeFractions {
  double stag_stag = 0.0;
  double hare_hare = 0.0;
  double mixed = 0.0;
  long interactions = 0;
  bool any = false;
};

// Fractions of resolved interaction outcomes across rollouts; only
// environments that report interaction events qualify.
OutcomeFractions outcome_fractions(StagePolicy& a, StagePolicy& b,
                                   const Environment& env, const EvalConfig& cfg);

// Max-player gap of the bonus-free evaluated policy against the environment's
// exact payoff tensor (in the trained reward scaling).
double true_tensor_exploitability(const TrainedAgents& agents,
                                  const Environment& matrix_env,
                                  const SolverConfig& solver);

struct ReportRow {
  std::string condition;
  double delta = 0.0;
  std::string pairing;
  std::string metric;
  double value = 0.0;
  double std_error = 0.0;
  int rollouts = 0;
  std::uint64_t seed = 0;
};

// Tidy CSV: one metric per row, schema versioned in a leading comment line.
void write_report_csv(std::ostream& os, std::span<const ReportRow> rows);

}  // namespace rqre
