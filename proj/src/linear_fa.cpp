#include "rqre/linear_fa.hpp"

#include <cmath>
#include <stdexcept>

namespace rqre {

double OviHyper::derive_b_clip(int horizon, std::span<const int> action_counts,
                               std::span<const double> epsilon) {
  if (horizon <= 0) throw std::invalid_argument("derive_b_clip: horizon must be > 0");
  double b = 0.0;
  for (std::size_t i = 0; i < action_counts.size(); ++i) {
    const double bi =
        horizon * (1.0 + std::log(static_cast<double>(action_counts[i])) / epsilon[i]);
    b = std::max(b, bi);
  }
  return b;
}

RidgeDesign::RidgeDesign(int dim, double lambda, int players)
    : dim_(dim), lambda_(lambda) {
  if (dim <= 0 || players <= 0 || !(lambda > 0.0))
    throw std::invalid_argument("RidgeDesign: bad construction parameters");
  gram_ = lambda * Eigen::MatrixXd::Identity(dim, dim);
  targets_.assign(players, Eigen::VectorXd::Zero(dim));
}

void RidgeDesign::update(const Eigen::VectorXd& phi, std::span<const double> targets) {
  if (phi.size() != dim_) throw std::invalid_argument("RidgeDesign::update: dimension mismatch");
  if (targets.size() != targets_.size())
    throw std::invalid_argument("RidgeDesign::update: target count mismatch");
  if (phi.norm() > 1.0 + 1e-9)
    throw std::invalid_argument("RidgeDesign::update: feature norm exceeds 1");
  gram_.selfadjointView<Eigen::Lower>().rankUpdate(phi, 1.0);
  gram_.triangularView<Eigen::StrictlyUpper>() =
      gram_.triangularView<Eigen::StrictlyLower>().transpose();
  for (std::size_t i = 0; i < targets_.size(); ++i) targets_[i] += phi * targets[i];
  ++count_;
}

Eigen::VectorXd RidgeDesign::weights(int player) const {
  return gram_.ldlt().solve(targets_[player]);
}

double RidgeDesign::bonus(const Eigen::VectorXd& phi, double beta) const {
  const Eigen::VectorXd x = gram_.ldlt().solve(phi);
  const double quad = std::max(phi.dot(x), 0.0);
  return beta * std::sqrt(quad);
}

double RidgeDesign::q_estimate(int player, const Eigen::VectorXd& phi,
                               const OviHyper& hyper) const {
  const double v = weights(player).dot(phi) + bonus(phi, hyper.beta);
  return std::min(std::max(v, 0.0), hyper.b_clip);
}

Eigen::MatrixXd RidgeDesign::inverse() const {
  return gram_.ldlt().solve(Eigen::MatrixXd::Identity(dim_, dim_));
}

EllipticalAudit elliptical_potential_audit(int dim, double lambda,
                                           std::span<const Eigen::VectorXd> trace) {
  EllipticalAccumulator acc(dim, lambda);
  for (const auto& phi : trace) acc.absorb(phi);
  return acc.report();
}

EllipticalAccumulator::EllipticalAccumulator(int dim, double lambda)
    : dim_(dim), lambda_(lambda) {
  inv_ = Eigen::MatrixXd::Identity(dim, dim) / lambda;
}

double EllipticalAccumulator::absorb(const Eigen::VectorXd& phi) {
  if (phi.size() != dim_)
    throw std::invalid_argument("EllipticalAccumulator: dimension mismatch");
  const Eigen::VectorXd v = inv_ * phi;
  const double quad = std::max(phi.dot(v), 0.0);
  cumulative_ += quad;
  ++steps_;
  inv_.noalias() -= (v * v.transpose()) / (1.0 + quad);
  return quad;
}

EllipticalAudit EllipticalAccumulator::report() const {
  EllipticalAudit a;
  a.cumulative = cumulative_;
  a.steps = steps_;
  a.bound = 2.0 * dim_ * std::log(1.0 + static_cast<double>(steps_) / lambda_);
  return a;
}

void EllipticalAccumulator::restore(double cumulative, long steps,
                                    Eigen::MatrixXd inverse) {
  cumulative_ = cumulative;
  steps_ = steps;
  inv_ = std::move(inverse);
}

}  // namespace rqre
