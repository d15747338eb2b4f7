#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

namespace rqre {

struct OviHyper {
  double beta = 0.1;
  double b_clip = 1.0;
  double lambda = 1.0;

  // Value cap B = max_i H * (1 + log|A_i| / eps_i).
  static double derive_b_clip(int horizon, std::span<const int> action_counts,
                              std::span<const double> epsilon);
};

// Ridge regression state for one stage: the regularized Gram matrix, the
// per-player feature-weighted target sums, and the absorbed-transition count.
class RidgeDesign {
 public:
  RidgeDesign(int dim, double lambda, int players);

  // Absorb one transition: gram += phi phi^T, target sums += phi * y_i.
  // Requires ||phi||_2 <= 1 + 1e-9.
  void update(const Eigen::VectorXd& phi, std::span<const double> targets);

  // Solve gram * w = target_sum(player) with an SPD factorization.
  Eigen::VectorXd weights(int player) const;

  // beta * sqrt(phi^T gram^{-1} phi).
  double bonus(const Eigen::VectorXd& phi, double beta) const;

  // min(w^T phi + bonus, b_clip), floored at 0.
  double q_estimate(int player, const Eigen::VectorXd& phi,
                    const OviHyper& hyper) const;

  // Explicit inverse snapshot for batched evaluation paths.
  Eigen::MatrixXd inverse() const;

  const Eigen::MatrixXd& gram() const { return gram_; }
  const Eigen::VectorXd& target_sum(int player) const { return targets_[player]; }
  long count() const { return count_; }
  int dim() const { return dim_; }
  double lambda() const { return lambda_; }
  int players() const { return static_cast<int>(targets_.size()); }

  void set_target_sum(int player, Eigen::VectorXd b) { targets_[player] = std::move(b); }

 private:
  int dim_;
  double lambda_;
  Eigen::MatrixXd gram_;
  std::vector<Eigen::VectorXd> targets_;
  long count_ = 0;
};

struct EllipticalAudit {
  double cumulative = 0.0;
  double bound = 0.0;
  long steps = 0;
  bool pass() const { return cumulative <= bound; }
};

// Replay a feature trace in order against a fresh lambda*I design and report
// the cumulative potential sum_k phi^T Lambda_k^{-1} phi against the bound
// 2 d log(1 + K / lambda).
EllipticalAudit elliptical_potential_audit(int dim, double lambda,
                                           std::span<const Eigen::VectorXd> trace);

// Online form of the same audit, maintained incrementally during training via
// Sherman-Morrison updates of the inverse.
class EllipticalAccumulator {
 public:
  EllipticalAccumulator() = default;
  EllipticalAccumulator(int dim, double lambda);

  // Returns phi^T Lambda_before^{-1} phi for the absorbed feature.
  double absorb(const Eigen::VectorXd& phi);
  EllipticalAudit report() const;

  double cumulative() const { return cumulative_; }
  long steps() const { return steps_; }
  void restore(double cumulative, long steps, Eigen::MatrixXd inverse);
  const Eigen::MatrixXd& inverse() const { return inv_; }

 private:
  int dim_ = 0;
  double lambda_ = 1.0;
  Eigen::MatrixXd inv_;
  double cumulative_ = 0.0;
  long steps_ = 0;
};

}  // namespace rqre
