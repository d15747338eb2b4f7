#pragma once

#include <map>
#include <memory>
#include <stdexcept>
#include <string>

#include "rqre/eval.hpp"
#include "rqre/ovi.hpp"

namespace rqre {

inline constexpr const char* kCodeVersion = "0.1.0";

struct ConfigError : std::runtime_error {
  ConfigError(std::string field_, const std::string& message)
      : std::runtime_error(message), field(std::move(field_)) {}
  std::string field;
};

struct EnvChoice {
  std::string kind;  // matrix_stag_hunt | coordination | matrix_file |
                     // grid_stag_hunt | synthetic
  std::string payoff_file;
  double alpha = 1.0;
  SyntheticConfig synthetic;
};

struct SweepAxes {
  std::vector<double> tau;
  std::vector<double> epsilon;
};

// One parsed and validated run configuration: a single file fully determines
// a run. Unknown keys are rejected at parse time.
struct RunConfig {
  std::string out_dir = "runs/out";
  std::uint64_t seed = 42;

  EnvChoice env;

  long episodes = 0;
  int horizon = 0;
  int buffer_capacity = 1000;
  int update_frequency = 20;
  double reward_scale = 1.0;
  long checkpoint_every = 500;
  int env_risk_samples = 1;

  double epsilon = 1.0;
  double tau = 0.0;
  SolveMethod method = SolveMethod::FixedPoint;
  int max_iters = 100;
  double tol = 1e-6;
  double damping = 0.5;

  double beta = 0.1;
  double lambda = 1.0;
  double b_clip = 0.0;  // <= 0 derives the cap

  RiskSpec env_risk;

  EvalConfig eval;

  SweepAxes sweep;

  // Canonical "section.key=value" lines of everything that was set; the
  // run's identity for manifests and resumption checks.
  std::string canonical_text;
  std::uint64_t config_hash() const;

  std::unique_ptr<Environment> make_env() const;
  TrainConfig train_config(const EnvSpec& spec) const;

  // Copy with swept parameters substituted.
  RunConfig with_cell(double cell_tau, double cell_epsilon) const;
};

RunConfig parse_run_config_text(const std::string& text);
RunConfig parse_run_config_file(const std::string& path);

// Plain-text payoff file: `players n`, `actions a1 ... an`, then per-player
// blocks of prod(a_i) reals in row-major joint order.
StagePayoff parse_payoff_text(const std::string& text);
StagePayoff parse_payoff_file(const std::string& path);

std::uint64_t fnv1a64(const std::string& s);

}  // namespace rqre
