#include "rqre/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rqre/run_io.hpp"

namespace rqre {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

// Known schema: section -> keys.
const std::map<std::string, std::vector<std::string>>& schema() {
  static const std::map<std::string, std::vector<std::string>> s = {
      {"run", {"out_dir", "seed"}},
      {"env",
       {"kind", "payoff_file", "alpha", "dim", "states", "players", "actions",
        "env_seed", "kernel_concentration"}},
      {"train",
       {"episodes", "horizon", "buffer_capacity", "update_frequency",
        "reward_scale", "checkpoint_every", "env_risk_samples"}},
      {"solver", {"epsilon", "tau", "method", "max_iters", "tol", "damping"}},
      {"hyper", {"beta", "lambda", "b_clip"}},
      {"risk", {"kind", "tau", "alpha", "dual_set_path"}},
      {"eval", {"rollouts", "deltas", "deviation_action"}},
      {"sweep", {"tau", "epsilon"}},
  };
  return s;
}

struct ParsedFile {
  std::map<std::string, std::string> entries;  // "section.key" -> value

  bool has(const std::string& k) const { return entries.count(k) > 0; }
  std::string get(const std::string& k, const std::string& dflt) const {
    auto it = entries.find(k);
    return it == entries.end() ? dflt : it->second;
  }
  std::string require(const std::string& k) const {
    auto it = entries.find(k);
    if (it == entries.end()) throw ConfigError(k, "missing required field `" + k + "`");
    return it->second;
  }
};

double to_double(const std::string& k, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(k, "field `" + k + "`: not a number: " + v);
  }
}

long to_long(const std::string& k, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long n = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError(k, "field `" + k + "`: not an integer: " + v);
  }
}

std::vector<double> to_list(const std::string& k, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(to_double(k, tok));
  }
  if (out.empty()) throw ConfigError(k, "field `" + k + "`: empty list");
  return out;
}

ParsedFile parse_ini(const std::string& text) {
  ParsedFile out;
  std::stringstream ss(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(lineno), "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (schema().count(section) == 0)
        throw ConfigError(section, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno),
                        "expected key = value at line " + std::to_string(lineno));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty())
      throw ConfigError(key, "key `" + key + "` outside any section");
    const auto& keys = schema().at(section);
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw ConfigError(section + "." + key,
                        "unknown key `" + key + "` in section [" + section + "]");
    out.entries[section + "." + key] = value;
  }
  return out;
}

SolveMethod parse_method(const std::string& v) {
  if (v == "fixed_point") return SolveMethod::FixedPoint;
  if (v == "mirror_ascent") return SolveMethod::MirrorAscent;
  if (v == "hedge_lifted") return SolveMethod::HedgeLifted;
  throw ConfigError("solver.method", "unknown solver method: " + v);
}

RiskSpec parse_risk(const ParsedFile& pf) {
  const std::string kind = pf.get("risk.kind", "risk_neutral");
  if (kind == "risk_neutral") return RiskSpec::risk_neutral();
  if (kind == "entropic")
    return RiskSpec::entropic(to_double("risk.tau", pf.require("risk.tau")));
  if (kind == "cvar")
    return RiskSpec::cvar(to_double("risk.alpha", pf.require("risk.alpha")));
  if (kind == "finite_dual") {
    const std::string path = pf.require("risk.dual_set_path");
    std::vector<DualCandidate> set;
    std::stringstream ss(read_text_file(path));
    std::string line;
    while (std::getline(ss, line)) {
      line = trim(line);
      if (line.empty() || line[0] == '#') continue;
      std::stringstream ls(line);
      DualCandidate c;
      ls >> c.penalty;
      double w;
      while (ls >> w) c.weights.push_back(w);
      if (c.weights.empty())
        throw ConfigError("risk.dual_set_path", "dual set line without weights");
      set.push_back(std::move(c));
    }
    if (set.empty()) throw ConfigError("risk.dual_set_path", "empty dual set file");
    return RiskSpec::finite_dual(std::move(set));
  }
  throw ConfigError("risk.kind", "unknown risk kind: " + kind);
}

}  // namespace

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t RunConfig::config_hash() const { return fnv1a64(canonical_text); }

RunConfig parse_run_config_text(const std::string& text) {
  const ParsedFile pf = parse_ini(text);
  RunConfig c;
  c.out_dir = pf.get("run.out_dir", c.out_dir);
  c.seed = static_cast<std::uint64_t>(to_long("run.seed", pf.get("run.seed", "42")));

  c.env.kind = pf.require("env.kind");
  c.env.payoff_file = pf.get("env.payoff_file", "");
  c.env.alpha = to_double("env.alpha", pf.get("env.alpha", "1"));

  c.episodes = to_long("train.episodes", pf.require("train.episodes"));
  c.horizon = static_cast<int>(to_long("train.horizon", pf.require("train.horizon")));
  c.buffer_capacity = static_cast<int>(
      to_long("train.buffer_capacity", pf.get("train.buffer_capacity", "1000")));
  c.update_frequency = static_cast<int>(
      to_long("train.update_frequency", pf.get("train.update_frequency", "20")));
  c.reward_scale = to_double("train.reward_scale", pf.get("train.reward_scale", "1"));
  c.checkpoint_every = to_long("train.checkpoint_every",
                               pf.get("train.checkpoint_every", "500"));
  c.env_risk_samples = static_cast<int>(
      to_long("train.env_risk_samples", pf.get("train.env_risk_samples", "1")));

  c.epsilon = to_double("solver.epsilon", pf.get("solver.epsilon", "1"));
  c.tau = to_double("solver.tau", pf.get("solver.tau", "0"));
  c.method = parse_method(pf.get("solver.method", "fixed_point"));
  c.max_iters = static_cast<int>(
      to_long("solver.max_iters", pf.get("solver.max_iters", "100")));
  c.tol = to_double("solver.tol", pf.get("solver.tol", "1e-6"));
  c.damping = to_double("solver.damping", pf.get("solver.damping", "0.5"));

  c.beta = to_double("hyper.beta", pf.get("hyper.beta", "0.1"));
  c.lambda = to_double("hyper.lambda", pf.get("hyper.lambda", "1"));
  const std::string bclip = pf.get("hyper.b_clip", "auto");
  c.b_clip = bclip == "auto" ? 0.0 : to_double("hyper.b_clip", bclip);

  c.env_risk = parse_risk(pf);

  c.eval.rollouts = static_cast<int>(
      to_long("eval.rollouts", pf.get("eval.rollouts", "200")));
  if (pf.has("eval.deltas"))
    c.eval.deltas = to_list("eval.deltas", pf.entries.at("eval.deltas"));
  c.eval.deviation_action = static_cast<int>(
      to_long("eval.deviation_action", pf.get("eval.deviation_action", "0")));
  c.eval.seed = c.seed;

  if (pf.has("sweep.tau")) c.sweep.tau = to_list("sweep.tau", pf.entries.at("sweep.tau"));
  if (pf.has("sweep.epsilon"))
    c.sweep.epsilon = to_list("sweep.epsilon", pf.entries.at("sweep.epsilon"));

  // Synthetic-environment block.
  c.env.synthetic.dim = static_cast<int>(to_long("env.dim", pf.get("env.dim", "8")));
  c.env.synthetic.num_states =
      static_cast<int>(to_long("env.states", pf.get("env.states", "6")));
  c.env.synthetic.players =
      static_cast<int>(to_long("env.players", pf.get("env.players", "2")));
  if (pf.has("env.actions")) {
    c.env.synthetic.action_counts.clear();
    for (double a : to_list("env.actions", pf.entries.at("env.actions")))
      c.env.synthetic.action_counts.push_back(static_cast<int>(a));
  }
  c.env.synthetic.seed =
      static_cast<std::uint64_t>(to_long("env.env_seed", pf.get("env.env_seed", "1")));
  c.env.synthetic.kernel_concentration = to_double(
      "env.kernel_concentration", pf.get("env.kernel_concentration", "0.1"));
  c.env.synthetic.horizon = c.horizon;

  std::string canon;
  for (const auto& [k, v] : pf.entries) canon += k + "=" + v + "\n";
  c.canonical_text = canon;

  if (c.episodes <= 0) throw ConfigError("train.episodes", "episodes must be > 0");
  if (c.horizon <= 0) throw ConfigError("train.horizon", "horizon must be > 0");
  return c;
}

RunConfig parse_run_config_file(const std::string& path) {
  return parse_run_config_text(read_text_file(path));
}

std::unique_ptr<Environment> RunConfig::make_env() const {
  if (env.kind == "matrix_stag_hunt") {
    if (horizon != 1) throw ConfigError("train.horizon", "matrix games have horizon 1");
    return make_matrix_game(StagePayoff::stag_hunt());
  }
  if (env.kind == "coordination") {
    if (horizon != 1) throw ConfigError("train.horizon", "matrix games have horizon 1");
    return make_matrix_game(StagePayoff::coordination(env.alpha));
  }
  if (env.kind == "matrix_file") {
    if (env.payoff_file.empty())
      throw ConfigError("env.payoff_file", "matrix_file requires payoff_file");
    if (horizon != 1) throw ConfigError("train.horizon", "matrix games have horizon 1");
    return make_matrix_game(parse_payoff_file(env.payoff_file));
  }
  if (env.kind == "grid_stag_hunt") {
    GridConfig g;
    g.horizon = horizon;
    return make_dynamic_stag_hunt(g);
  }
  if (env.kind == "synthetic") {
    SyntheticConfig s = env.synthetic;
    s.horizon = horizon;
    return make_synthetic_linear_mg(s);
  }
  throw ConfigError("env.kind", "unknown environment kind: " + env.kind);
}

TrainConfig RunConfig::train_config(const EnvSpec& spec) const {
  TrainConfig t;
  t.episodes = episodes;
  t.horizon = horizon;
  t.solver = SolverConfig::make(spec.n, epsilon, tau, method, max_iters, tol, damping);
  t.hyper.beta = beta;
  t.hyper.lambda = lambda;
  t.hyper.b_clip = b_clip;
  t.buffer_capacity = buffer_capacity;
  t.update_frequency = update_frequency;
  t.env_risk = env_risk;
  t.env_risk_samples = env_risk_samples;
  t.seed = seed;
  t.reward_scale = reward_scale;
  t.checkpoint_every = checkpoint_every;
  t.finalize(spec);
  return t;
}

RunConfig RunConfig::with_cell(double cell_tau, double cell_epsilon) const {
  RunConfig c = *this;
  c.tau = cell_tau;
  c.epsilon = cell_epsilon;
  char buf[96];
  std::snprintf(buf, sizeof buf, "cell.tau=%.10g\ncell.epsilon=%.10g\n", cell_tau,
                cell_epsilon);
  c.canonical_text += buf;
  return c;
}

StagePayoff parse_payoff_text(const std::string& text) {
  std::stringstream ss(text);
  std::string word;
  ss >> word;
  if (word != "players") throw std::runtime_error("payoff file: expected `players n`");
  int n = 0;
  ss >> n;
  if (n <= 0) throw std::runtime_error("payoff file: bad player count");
  ss >> word;
  if (word != "actions") throw std::runtime_error("payoff file: expected `actions ...`");
  std::vector<int> counts(n);
  for (auto& a : counts) {
    ss >> a;
    if (a <= 0) throw std::runtime_error("payoff file: bad action count");
  }
  StagePayoff p = StagePayoff::zeros(n, counts);
  for (int i = 0; i < n; ++i)
    for (auto& u : p.tensors[i])
      if (!(ss >> u)) throw std::runtime_error("payoff file: not enough utilities");
  double extra;
  if (ss >> extra) throw std::runtime_error("payoff file: trailing data");
  p.validate();
  return p;
}

StagePayoff parse_payoff_file(const std::string& path) {
  return parse_payoff_text(read_text_file(path));
}

}  // namespace rqre
