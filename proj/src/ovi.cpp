#include "rqre/ovi.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace rqre {

namespace {

constexpr std::uint64_t kCheckpointMagic = 0x545050434552'5131ULL;  // versioned tag

double clampv(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

void put_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void put_i64(std::ostream& os, std::int64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void put_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), 8); }
std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
std::int64_t get_i64(std::istream& is) {
  std::int64_t v;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
double get_f64(std::istream& is) {
  double v;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
void put_vec(std::ostream& os, const std::vector<double>& v) {
  put_u64(os, v.size());
  for (double x : v) put_f64(os, x);
}
std::vector<double> get_vec(std::istream& is) {
  std::vector<double> v(get_u64(is));
  for (auto& x : v) x = get_f64(is);
  return v;
}
void put_mat(std::ostream& os, const Eigen::MatrixXd& m) {
  put_u64(os, m.rows());
  put_u64(os, m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) put_f64(os, m(i, j));
}
Eigen::MatrixXd get_mat(std::istream& is) {
  const auto rows = get_u64(is), cols = get_u64(is);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = get_f64(is);
  return m;
}

std::string fmt_double(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void TrainConfig::finalize(const EnvSpec& spec) {
  if (episodes <= 0) throw std::invalid_argument("TrainConfig: episodes must be > 0");
  if (horizon != spec.horizon)
    throw std::invalid_argument("TrainConfig: horizon does not match the environment");
  if (buffer_capacity <= 0 || update_frequency <= 0)
    throw std::invalid_argument("TrainConfig: buffer/update cadence must be > 0");
  if (!(reward_scale > 0.0)) throw std::invalid_argument("TrainConfig: reward_scale must be > 0");
  if (spec.reward_max / reward_scale > 1.0 + 1e-9)
    throw std::invalid_argument("TrainConfig: reward_scale does not map rewards into [0,1]");
  if (env_risk_samples <= 0)
    throw std::invalid_argument("TrainConfig: env_risk_samples must be > 0");
  solver.validate(spec.n);
  env_risk.validate();
  if (hyper.b_clip <= 0.0)
    hyper.b_clip = OviHyper::derive_b_clip(spec.horizon, spec.action_counts, solver.epsilon);
  if (!(hyper.lambda > 0.0)) throw std::invalid_argument("TrainConfig: lambda must be > 0");
  if (hyper.beta < 0.0) throw std::invalid_argument("TrainConfig: beta must be >= 0");
  entropy_span = 0.0;
  for (int i = 0; i < spec.n; ++i)
    entropy_span = std::max(
        entropy_span, std::log(double(spec.action_counts[i])) / solver.epsilon[i]);
}

const char* TrainLog::csv_header() {
  return "episode,team_return,ma100,mean_bonus,solver_iters,exploitability,"
         "stag_stag,hare_hare,mixed";
}

void TrainLog::write_csv(std::ostream& os) const {
  os << csv_header() << "\n";
  for (const auto& r : rows) {
    os << r.episode << ',' << fmt_double(r.team_return) << ',' << fmt_double(r.ma100)
       << ',' << fmt_double(r.mean_bonus) << ',' << fmt_double(r.solver_iters) << ','
       << fmt_double(r.exploitability) << ',' << r.stag_stag << ',' << r.hare_hare
       << ',' << r.mixed << "\n";
  }
}

QEvaluator::QEvaluator(const TrainedAgents& agents, const Environment& env,
                       bool with_bonus)
    : agents_(agents), env_(env), with_bonus_(with_bonus) {
  if (!agents_.trained) return;
  wmat_.reserve(agents_.H);
  for (int h = 0; h < agents_.H; ++h) {
    Eigen::MatrixXd W(agents_.d, agents_.n);
    for (int i = 0; i < agents_.n; ++i) W.col(i) = agents_.w[h][i];
    wmat_.push_back(std::move(W));
    if (with_bonus_)
      minv_.push_back(agents_.gram[h].ldlt().solve(
          Eigen::MatrixXd::Identity(agents_.d, agents_.d)));
  }
}

std::vector<std::vector<double>> QEvaluator::tensors(const State& x, int h) const {
  const int jc = env_.joint_count();
  const int n = env_.spec().n;
  const double cap = agents_.q_cap(h);
  std::vector<std::vector<double>> out(n, std::vector<double>(jc, cap));
  if (!agents_.trained) return out;

  Eigen::MatrixXd phi(jc, agents_.d);
  std::vector<int> joint(n);
  std::vector<double> row(agents_.d);
  for (int j = 0; j < jc; ++j) {
    env_.decode_joint(j, joint);
    env_.features(x, joint, h, row.data());
    for (int k = 0; k < agents_.d; ++k) phi(j, k) = row[k];
  }
  Eigen::MatrixXd vals = phi * wmat_[h - 1];
  Eigen::VectorXd b2;
  if (with_bonus_)
    b2 = (phi * minv_[h - 1]).cwiseProduct(phi).rowwise().sum();
  for (int j = 0; j < jc; ++j) {
    const double bonus =
        with_bonus_ ? agents_.beta * std::sqrt(std::max(b2(j), 0.0)) : 0.0;
    for (int i = 0; i < n; ++i)
      out[i][j] = clampv(vals(j, i) + bonus, 0.0, cap);
  }
  return out;
}

std::vector<std::vector<double>> compute_targets(
    std::span<const Transition> batch, int stage, const TrainConfig& cfg,
    const std::function<std::vector<double>(const State&)>& next_value,
    const Environment* generative_env) {
  const std::size_t m = batch.size();
  const int n = static_cast<int>(cfg.solver.epsilon.size());
  std::vector<std::vector<double>> out(n, std::vector<double>(m, 0.0));
  const bool resample = cfg.env_risk_samples > 1 && generative_env != nullptr &&
                        generative_env->spec().generative &&
                        cfg.env_risk.kind != RiskKind::FiniteDual;

  for (std::size_t t = 0; t < m; ++t) {
    const Transition& tr = batch[t];
    if (stage >= cfg.horizon) {
      for (int i = 0; i < n; ++i) out[i][t] = tr.rewards_scaled[i];
      continue;
    }
    if (resample) {
      const auto dist = generative_env->kernel(tr.state, stage, tr.joint);
      if (dist.empty()) throw std::runtime_error("compute_targets: missing next-state kernel");
      std::vector<double> probs(dist.size());
      for (std::size_t j = 0; j < dist.size(); ++j) probs[j] = dist[j].second;
      Rng rng(Rng::derive(cfg.seed ^ 0x5eed5eedULL,
                          std::uint64_t(tr.episode) * 1000003ULL + stage * 7919ULL + t));
      std::vector<std::vector<double>> samples(n);
      for (int s = 0; s < cfg.env_risk_samples; ++s) {
        const auto& xn = dist[rng.categorical(probs)].first;
        const auto v = next_value(xn);
        for (int i = 0; i < n; ++i) samples[i].push_back(v[i]);
      }
      for (int i = 0; i < n; ++i) {
        double rho;
        switch (cfg.env_risk.kind) {
          case RiskKind::RiskNeutral: {
            double s = 0.0;
            for (double v : samples[i]) s += v;
            rho = s / samples[i].size();
            break;
          }
          case RiskKind::Entropic:
            rho = empirical_entropic(samples[i], cfg.env_risk.tau);
            break;
          case RiskKind::CVaR:
            rho = empirical_cvar(samples[i], cfg.env_risk.alpha);
            break;
          default:
            throw std::logic_error("compute_targets: unreachable risk kind");
        }
        out[i][t] = tr.rewards_scaled[i] + rho;
      }
    } else {
      // Single observed next state: every estimator degenerates to the
      // realized continuation value.
      const auto v = next_value(tr.next);
      if (static_cast<int>(v.size()) != n)
        throw std::runtime_error("compute_targets: missing next-state value");
      for (int i = 0; i < n; ++i) out[i][t] = tr.rewards_scaled[i] + v[i];
    }
  }
  return out;
}

OviRunner::OviRunner(const Environment& env, TrainConfig cfg)
    : env_(env), cfg_(std::move(cfg)), rng_(0) {
  cfg_.finalize(env_.spec());
  rng_ = Rng(cfg_.seed);
  const int d = env_.spec().feature_dim;
  stages_.resize(cfg_.horizon);
  for (auto& st : stages_) st.audit = EllipticalAccumulator(d, cfg_.hyper.lambda);
}

std::vector<std::vector<double>> OviRunner::stage_tensors(const State& x, int h) const {
  const int jc = env_.joint_count();
  const int n = env_.spec().n;
  const int d = env_.spec().feature_dim;
  const auto& st = stages_[h - 1];
  const double cap =
      stage_q_cap(cfg_.hyper.b_clip, cfg_.horizon, h, cfg_.entropy_span);
  std::vector<std::vector<double>> out(n, std::vector<double>(jc, cap));
  if (st.w.empty()) return out;

  Eigen::MatrixXd phi(jc, d);
  std::vector<int> joint(n);
  std::vector<double> row(d);
  for (int j = 0; j < jc; ++j) {
    env_.decode_joint(j, joint);
    env_.features(x, joint, h, row.data());
    for (int k = 0; k < d; ++k) phi(j, k) = row[k];
  }
  Eigen::MatrixXd W(d, n);
  for (int i = 0; i < n; ++i) W.col(i) = st.w[i];
  Eigen::MatrixXd vals = phi * W;
  Eigen::VectorXd b2 = (phi * st.minv).cwiseProduct(phi).rowwise().sum();
  for (int j = 0; j < jc; ++j) {
    const double bonus = cfg_.hyper.beta * std::sqrt(std::max(b2(j), 0.0));
    for (int i = 0; i < n; ++i)
      out[i][j] = clampv(vals(j, i) + bonus, 0.0, cap);
  }
  return out;
}

const MixedProfile& OviRunner::policy_at(const State& x, int h) {
  auto& st = stages_[h - 1];
  auto it = st.policy_cache.find(x);
  if (it != st.policy_cache.end()) return it->second;
  MixedProfile pi = MixedProfile::uniform(env_.spec().action_counts);
  st.last_solver_iters = 0.0;
  if (!st.w.empty()) {
    StagePayoff payoff;
    payoff.n = env_.spec().n;
    payoff.action_counts = env_.spec().action_counts;
    payoff.tensors = stage_tensors(x, h);
    auto [solved, diag] = rqre_solve(payoff, cfg_.solver);
    pi = std::move(solved);
    st.last_solver_iters = diag.iterations;
    if (!diag.certified) ++uncertified_;
  }
  return st.policy_cache.emplace(x, std::move(pi)).first->second;
}

void OviRunner::backward_pass() {
  const auto& spec = env_.spec();
  const int n = spec.n;
  const int d = spec.feature_dim;
  const int jc = env_.joint_count();

  for (int h = cfg_.horizon; h >= 1; --h) {
    auto& st = stages_[h - 1];
    const std::size_t m = st.buffer.size();
    if (m == 0) continue;

    // Continuation values of the distinct next states, evaluated in bulk
    // against the just-refreshed stage h+1 estimator. Multi-sample risk
    // estimation draws arbitrary kernel states, so the generative path
    // evaluates the whole next-stage state set.
    std::unordered_map<State, std::vector<double>, StateHash> vcache;
    if (h < cfg_.horizon) {
      std::vector<const State*> distinct;
      std::vector<State> enumerated;
      distinct.reserve(m);
      if (cfg_.env_risk_samples > 1 && spec.generative) {
        enumerated = env_.enumerate_states(h + 1);
        for (const auto& xs : enumerated)
          if (vcache.emplace(xs, std::vector<double>{}).second) {}
        for (const auto& xs : enumerated) distinct.push_back(&xs);
      }
      for (const auto& tr : st.buffer)
        if (vcache.emplace(tr.next, std::vector<double>{}).second)
          distinct.push_back(&tr.next);

      const auto& nx = stages_[h];
      Eigen::MatrixXd W(d, n), Minv;
      const bool have_next = !nx.w.empty();
      if (have_next) {
        for (int i = 0; i < n; ++i) W.col(i) = nx.w[i];
        Minv = nx.minv;
      }
      const double q_cap =
          stage_q_cap(cfg_.hyper.b_clip, cfg_.horizon, h + 1, cfg_.entropy_span);
      const double v_cap =
          stage_v_cap(cfg_.hyper.b_clip, cfg_.horizon, h + 1, cfg_.entropy_span);
      constexpr std::size_t kChunk = 128;
      std::vector<int> joint(n);
      std::vector<double> row(d);
      StagePayoff payoff;
      payoff.n = n;
      payoff.action_counts = spec.action_counts;
      payoff.tensors.assign(n, std::vector<double>(jc));
      for (std::size_t c0 = 0; c0 < distinct.size(); c0 += kChunk) {
        const std::size_t cn = std::min(kChunk, distinct.size() - c0);
        Eigen::MatrixXd phi(cn * jc, d);
        for (std::size_t s = 0; s < cn; ++s)
          for (int j = 0; j < jc; ++j) {
            env_.decode_joint(j, joint);
            env_.features(*distinct[c0 + s], joint, h + 1, row.data());
            for (int k = 0; k < d; ++k) phi(s * jc + j, k) = row[k];
          }
        Eigen::MatrixXd vals;
        Eigen::VectorXd b2;
        if (have_next) {
          vals = phi * W;
          b2 = (phi * Minv).cwiseProduct(phi).rowwise().sum();
        }
        for (std::size_t s = 0; s < cn; ++s) {
          for (int j = 0; j < jc; ++j) {
            for (int i = 0; i < n; ++i) {
              double qi = q_cap;
              if (have_next) {
                const double bonus =
                    cfg_.hyper.beta * std::sqrt(std::max(b2(s * jc + j), 0.0));
                qi = clampv(vals(s * jc + j, i) + bonus, 0.0, q_cap);
              }
              payoff.tensors[i][j] = qi;
            }
          }
          MixedProfile pi = MixedProfile::uniform(spec.action_counts);
          if (have_next) {
            auto [solved, diag] = rqre_solve(payoff, cfg_.solver);
            pi = std::move(solved);
            if (!diag.certified) ++uncertified_;
          }
          auto& vals_out = vcache[*distinct[c0 + s]];
          vals_out.resize(n);
          for (int i = 0; i < n; ++i)
            vals_out[i] =
                clampv(policy_risk_value(payoff, pi, i, cfg_.solver), 0.0, v_cap);
        }
      }
    }

    std::vector<Transition> batch(st.buffer.begin(), st.buffer.end());
    auto next_value = [&](const State& xn) -> std::vector<double> {
      auto it = vcache.find(xn);
      if (it == vcache.end())
        throw std::runtime_error("backward_pass: next-state value missing");
      return it->second;
    };
    auto targets = compute_targets(batch, h, cfg_, next_value, &env_);

    Eigen::MatrixXd phi(m, d);
    std::vector<double> row(d);
    for (std::size_t t = 0; t < m; ++t) {
      env_.features(batch[t].state, batch[t].joint, h, row.data());
      for (int k = 0; k < d; ++k) phi(t, k) = row[k];
    }
    Eigen::MatrixXd gram = cfg_.hyper.lambda * Eigen::MatrixXd::Identity(d, d);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(phi.transpose(), 1.0);
    gram.triangularView<Eigen::StrictlyUpper>() =
        gram.triangularView<Eigen::StrictlyLower>().transpose();
    auto ldlt = gram.ldlt();
    st.w.assign(n, Eigen::VectorXd());
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd y(m);
      for (std::size_t t = 0; t < m; ++t) y(t) = targets[i][t];
      st.w[i] = ldlt.solve(phi.transpose() * y);
    }
    st.gram = std::move(gram);
    st.minv = ldlt.solve(Eigen::MatrixXd::Identity(d, d));
  }
  trained_ = true;
  for (auto& st : stages_) st.policy_cache.clear();
}

void OviRunner::run(const TrainHooks& hooks) {
  const auto& spec = env_.spec();
  const int n = spec.n;
  std::vector<int> joint(n);
  Eigen::VectorXd phi(spec.feature_dim);

  while (episode_ < cfg_.episodes) {
    if (hooks.halt && hooks.halt(episode_)) return;
    if (episode_ > 0 && episode_ % cfg_.update_frequency == 0) backward_pass();

    State x = env_.initial_state(rng_);
    const State start = x;
    double team = 0.0, bonus_sum = 0.0, iter_sum = 0.0;
    int steps = 0, fresh = 0;
    TrainLogRow row;
    for (int h = 1; h <= cfg_.horizon; ++h) {
      auto& st = stages_[h - 1];
      const bool was_cached = st.policy_cache.count(x) > 0;
      const MixedProfile& pi = policy_at(x, h);
      if (!was_cached && !st.w.empty()) {
        iter_sum += st.last_solver_iters;
        ++fresh;
      }
      for (int i = 0; i < n; ++i) joint[i] = rng_.categorical(pi.dists[i]);
      StepResult sr = env_.step(x, h, joint, rng_);
      env_.features(x, joint, h, phi.data());
      const double quad = st.audit.absorb(phi);
      bonus_sum += cfg_.hyper.beta * std::sqrt(std::max(quad, 0.0));
      ++steps;

      Transition tr;
      tr.state = std::move(x);
      tr.joint.assign(joint.begin(), joint.end());
      tr.rewards_scaled.resize(n);
      for (int i = 0; i < n; ++i) {
        tr.rewards_scaled[i] = sr.rewards[i] / cfg_.reward_scale;
        team += sr.rewards[i];
      }
      tr.next = sr.next;
      tr.episode = episode_ + 1;
      st.buffer.push_back(std::move(tr));
      if (static_cast<int>(st.buffer.size()) > cfg_.buffer_capacity)
        st.buffer.pop_front();

      if (sr.event == kEventStagStag) ++row.stag_stag;
      else if (sr.event == kEventHareHare) ++row.hare_hare;
      else if (sr.event == kEventMixed) ++row.mixed;

      x = std::move(sr.next);
      if (sr.done) break;
    }
    ++episode_;

    return_window_.push_back(team);
    return_window_sum_ += team;
    if (return_window_.size() > 100) {
      return_window_sum_ -= return_window_.front();
      return_window_.pop_front();
    }

    row.episode = episode_;
    row.team_return = team;
    row.ma100 = return_window_sum_ / return_window_.size();
    row.mean_bonus = steps > 0 ? bonus_sum / steps : 0.0;
    row.solver_iters = fresh > 0 ? iter_sum / fresh : 0.0;
    row.exploitability = std::numeric_limits<double>::quiet_NaN();
    if (const StagePayoff* truth = env_.exact_payoffs();
        truth != nullptr && cfg_.horizon == 1) {
      StagePayoff scaled = *truth;
      for (auto& t : scaled.tensors)
        for (auto& u : t) u /= cfg_.reward_scale;
      row.exploitability =
          exploitability(scaled, policy_at(start, 1), cfg_.solver).max_gap;
    }
    log_.rows.push_back(row);
    if (hooks.on_episode) hooks.on_episode(row);
  }
}

TrainedAgents OviRunner::agents() const {
  TrainedAgents a;
  const auto& spec = env_.spec();
  a.d = spec.feature_dim;
  a.n = spec.n;
  a.H = cfg_.horizon;
  a.lambda = cfg_.hyper.lambda;
  a.beta = cfg_.hyper.beta;
  a.b_clip = cfg_.hyper.b_clip;
  a.entropy_span = cfg_.entropy_span;
  a.reward_scale = cfg_.reward_scale;
  a.solver = cfg_.solver;
  a.trained = trained_;
  a.w.resize(cfg_.horizon);
  a.gram.resize(cfg_.horizon);
  for (int h = 0; h < cfg_.horizon; ++h) {
    if (stages_[h].w.empty()) {
      a.trained = false;
      a.w[h].assign(spec.n, Eigen::VectorXd::Zero(spec.feature_dim));
      a.gram[h] = cfg_.hyper.lambda *
                  Eigen::MatrixXd::Identity(spec.feature_dim, spec.feature_dim);
    } else {
      a.w[h] = stages_[h].w;
      a.gram[h] = stages_[h].gram;
    }
  }
  return a;
}

std::vector<EllipticalAudit> OviRunner::elliptical_reports() const {
  std::vector<EllipticalAudit> out;
  out.reserve(stages_.size());
  for (const auto& st : stages_) out.push_back(st.audit.report());
  return out;
}

void OviRunner::save_checkpoint(std::ostream& os) const {
  const auto& spec = env_.spec();
  put_u64(os, kCheckpointMagic);
  put_u64(os, spec.feature_dim);
  put_u64(os, spec.n);
  put_u64(os, cfg_.horizon);
  put_f64(os, cfg_.hyper.lambda);
  put_f64(os, cfg_.hyper.b_clip);
  put_f64(os, cfg_.hyper.beta);
  put_i64(os, episode_);
  put_u64(os, trained_ ? 1 : 0);
  put_u64(os, uncertified_);
  for (auto s : rng_.state()) put_u64(os, s);
  for (const auto& st : stages_) {
    put_u64(os, st.w.size());
    for (const auto& w : st.w) {
      std::vector<double> v(w.data(), w.data() + w.size());
      put_vec(os, v);
    }
    if (!st.w.empty()) {
      put_mat(os, st.gram);
      put_mat(os, st.minv);
    }
    put_f64(os, st.audit.cumulative());
    put_i64(os, st.audit.steps());
    put_mat(os, st.audit.inverse());
    put_u64(os, st.buffer.size());
    for (const auto& tr : st.buffer) {
      put_vec(os, tr.state);
      put_u64(os, tr.joint.size());
      for (int a : tr.joint) put_i64(os, a);
      put_vec(os, tr.rewards_scaled);
      put_vec(os, tr.next);
      put_i64(os, tr.episode);
    }
  }
  put_u64(os, return_window_.size());
  for (double v : return_window_) put_f64(os, v);
  put_u64(os, log_.rows.size());
  for (const auto& r : log_.rows) {
    put_i64(os, r.episode);
    put_f64(os, r.team_return);
    put_f64(os, r.ma100);
    put_f64(os, r.mean_bonus);
    put_f64(os, r.solver_iters);
    put_f64(os, r.exploitability);
    put_i64(os, r.stag_stag);
    put_i64(os, r.hare_hare);
    put_i64(os, r.mixed);
  }
}

void OviRunner::load_checkpoint(std::istream& is) {
  if (get_u64(is) != kCheckpointMagic)
    throw std::runtime_error("checkpoint: bad magic/version");
  const auto d = get_u64(is), n = get_u64(is), H = get_u64(is);
  const auto& spec = env_.spec();
  if (d != std::uint64_t(spec.feature_dim) || n != std::uint64_t(spec.n) ||
      H != std::uint64_t(cfg_.horizon))
    throw std::runtime_error("checkpoint: shape mismatch with configuration");
  const double lambda = get_f64(is), b_clip = get_f64(is), beta = get_f64(is);
  if (std::abs(lambda - cfg_.hyper.lambda) > 1e-12 ||
      std::abs(b_clip - cfg_.hyper.b_clip) > 1e-9 ||
      std::abs(beta - cfg_.hyper.beta) > 1e-12)
    throw std::runtime_error("checkpoint: hyperparameter mismatch");
  episode_ = get_i64(is);
  trained_ = get_u64(is) != 0;
  uncertified_ = get_u64(is);
  std::array<std::uint64_t, 4> rs;
  for (auto& s : rs) s = get_u64(is);
  rng_.set_state(rs);
  for (auto& st : stages_) {
    const auto nw = get_u64(is);
    st.w.clear();
    for (std::uint64_t i = 0; i < nw; ++i) {
      auto v = get_vec(is);
      st.w.emplace_back(Eigen::Map<Eigen::VectorXd>(v.data(), v.size()));
    }
    if (nw > 0) {
      st.gram = get_mat(is);
      st.minv = get_mat(is);
    }
    const double cum = get_f64(is);
    const long steps = get_i64(is);
    st.audit = EllipticalAccumulator(spec.feature_dim, cfg_.hyper.lambda);
    st.audit.restore(cum, steps, get_mat(is));
    const auto bn = get_u64(is);
    st.buffer.clear();
    for (std::uint64_t t = 0; t < bn; ++t) {
      Transition tr;
      tr.state = get_vec(is);
      const auto jn = get_u64(is);
      tr.joint.resize(jn);
      for (auto& a : tr.joint) a = static_cast<int>(get_i64(is));
      tr.rewards_scaled = get_vec(is);
      tr.next = get_vec(is);
      tr.episode = get_i64(is);
      st.buffer.push_back(std::move(tr));
    }
    st.policy_cache.clear();
  }
  return_window_.clear();
  return_window_sum_ = 0.0;
  const auto wn = get_u64(is);
  for (std::uint64_t i = 0; i < wn; ++i) {
    return_window_.push_back(get_f64(is));
    return_window_sum_ += return_window_.back();
  }
  log_.rows.clear();
  const auto rn = get_u64(is);
  for (std::uint64_t i = 0; i < rn; ++i) {
    TrainLogRow r;
    r.episode = get_i64(is);
    r.team_return = get_f64(is);
    r.ma100 = get_f64(is);
    r.mean_bonus = get_f64(is);
    r.solver_iters = get_f64(is);
    r.exploitability = get_f64(is);
    r.stag_stag = static_cast<int>(get_i64(is));
    r.hare_hare = static_cast<int>(get_i64(is));
    r.mixed = static_cast<int>(get_i64(is));
    log_.rows.push_back(r);
  }
  if (!is) throw std::runtime_error("checkpoint: truncated stream");
}

std::pair<TrainedAgents, TrainLog> train(const Environment& env, TrainConfig cfg,
                                         const TrainHooks& hooks) {
  OviRunner runner(env, std::move(cfg));
  runner.run(hooks);
  return {runner.agents(), runner.log()};
}

OptimismReport optimism_audit(const TrainedAgents& agents, const Environment& env,
                              const TrainConfig& cfg, int probes,
                              std::uint64_t seed, double tolerance) {
  if (!env.spec().generative)
    throw std::invalid_argument("optimism_audit: environment must be generative");
  QEvaluator eval(agents, env, /*with_bonus=*/true);
  const int n = env.spec().n;
  const int jc = env.joint_count();
  Rng rng(seed);

  // Cache of the agents' own continuation values per (stage, state).
  std::vector<std::unordered_map<State, std::vector<double>, StateHash>> vcache(
      agents.H + 1);
  auto value_at = [&](const State& x, int h) -> const std::vector<double>& {
    auto& cache = vcache[h];
    auto it = cache.find(x);
    if (it != cache.end()) return it->second;
    auto tensors = eval.tensors(x, h);
    StagePayoff payoff;
    payoff.n = n;
    payoff.action_counts = env.spec().action_counts;
    payoff.tensors = std::move(tensors);
    auto [pi, diag] = rqre_solve(payoff, agents.solver);
    std::vector<double> vals(n);
    for (int i = 0; i < n; ++i)
      vals[i] = clampv(policy_risk_value(payoff, pi, i, agents.solver), 0.0,
                       agents.v_cap(h));
    return cache.emplace(x, std::move(vals)).first->second;
  };

  int hit = 0;
  std::vector<int> joint(n);
  for (int p = 0; p < probes; ++p) {
    const int h = 1 + static_cast<int>(rng.below(agents.H));
    const auto states = env.enumerate_states(h);
    const State& x = states[rng.below(states.size())];
    const int j = static_cast<int>(rng.below(jc));
    env.decode_joint(j, joint);
    const int i = static_cast<int>(rng.below(n));

    const double q_est = eval.tensors(x, h)[i][j];
    const double r = env.true_rewards(x, h, joint)[i] / agents.reward_scale;
    double backup = r;
    if (h < agents.H) {
      const auto dist = env.kernel(x, h, joint);
      std::vector<double> values(dist.size()), weights(dist.size());
      for (std::size_t k = 0; k < dist.size(); ++k) {
        values[k] = value_at(dist[k].first, h + 1)[i];
        weights[k] = dist[k].second;
      }
      backup += env_risk_estimate(values, weights, cfg.env_risk);
    }
    if (q_est + tolerance >= backup) ++hit;
  }
  OptimismReport rep;
  rep.fraction = static_cast<double>(hit) / probes;
  rep.probes = probes;
  rep.tolerance = tolerance;
  return rep;
}

}  // namespace rqre
