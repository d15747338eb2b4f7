#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "rqre/config.hpp"
#include "rqre/eval.hpp"
#include "rqre/run_io.hpp"

namespace fs = std::filesystem;
using namespace rqre;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitAudit = 4;

RunConfig load_config(const std::string& path) {
  RunConfig cfg = parse_run_config_file(path);
  if (const char* s = std::getenv("RQRE_SEED")) {
    cfg.seed = std::stoull(s);
    cfg.eval.seed = cfg.seed;
    cfg.canonical_text += "env.RQRE_SEED=" + std::string(s) + "\n";
  }
  return cfg;
}

std::string fmt_hash(std::uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Train one run directory to completion (or until halt_after episodes).
// Returns false when halted before cfg.episodes.
bool train_run(const RunConfig& cfg, const std::string& out_dir, bool force,
               long halt_after) {
  fs::create_directories(out_dir);
  const std::string done_marker = out_dir + "/DONE";
  if (fs::exists(done_marker) && !force) {
    std::cout << "run already complete: " << out_dir << "\n";
    return true;
  }
  if (force) {
    fs::remove(done_marker);
    fs::remove(out_dir + "/checkpoint.bin");
  }
  write_text_file(out_dir + "/config.cfg", cfg.canonical_text);

  auto env = cfg.make_env();
  TrainConfig tc = cfg.train_config(env->spec());
  OviRunner runner(*env, tc);

  const std::string ckpt_path = out_dir + "/checkpoint.bin";
  if (fs::exists(ckpt_path)) {
    std::ifstream in(ckpt_path, std::ios::binary);
    runner.load_checkpoint(in);
    std::cout << "resuming " << out_dir << " from episode " << runner.episode()
              << "\n";
  }

  const std::string csv_path = out_dir + "/train.csv";
  {
    // Rewrite rows already done so resumed output matches an uninterrupted run.
    std::ostringstream ss;
    runner.log().write_csv(ss);
    write_text_file(csv_path, ss.str());
  }
  std::ofstream csv(csv_path, std::ios::app);

  auto save_ckpt = [&]() {
    std::ostringstream ss(std::ios::binary);
    runner.save_checkpoint(ss);
    atomic_write_file(ckpt_path, ss.str());
    write_manifest(out_dir + "/manifest.txt",
                   {{"config_hash", fmt_hash(cfg.config_hash())},
                    {"episode", std::to_string(runner.episode())},
                    {"code_version", kCodeVersion}});
  };

  TrainHooks hooks;
  long next_ckpt = tc.checkpoint_every > 0
                       ? (runner.episode() / tc.checkpoint_every + 1) * tc.checkpoint_every
                       : -1;
  hooks.on_episode = [&](const TrainLogRow& row) {
    std::ostringstream line;
    TrainLog one;
    one.rows.push_back(row);
    std::ostringstream tmp;
    one.write_csv(tmp);
    const std::string s = tmp.str();
    csv << s.substr(s.find('\n') + 1);
    if (next_ckpt > 0 && row.episode >= next_ckpt) {
      csv.flush();
      save_ckpt();
      next_ckpt += tc.checkpoint_every;
    }
  };
  if (halt_after > 0)
    hooks.halt = [&](long ep) { return ep >= halt_after; };

  runner.run(hooks);
  csv.flush();
  save_ckpt();
  if (runner.uncertified_solves() > 0)
    std::cout << "note: " << runner.uncertified_solves()
              << " stage solves returned best non-certified iterates\n";
  if (runner.finished()) {
    write_text_file(done_marker, "done\n");
    std::cout << "train complete: " << out_dir << " (" << runner.episode()
              << " episodes)\n";
    return true;
  }
  std::cout << "train halted: " << out_dir << " at episode " << runner.episode()
            << "\n";
  return false;
}

TrainedAgents load_agents(const RunConfig& cfg, const Environment& env,
                          const std::string& ckpt_path) {
  TrainConfig tc = cfg.train_config(env.spec());
  OviRunner runner(env, tc);
  std::ifstream in(ckpt_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + ckpt_path);
  runner.load_checkpoint(in);
  return runner.agents();
}

int cmd_train(const std::string& cfg_path, const std::string& out_override,
              bool force, long halt_after) {
  RunConfig cfg = load_config(cfg_path);
  const std::string out = out_override.empty() ? cfg.out_dir : out_override;
  train_run(cfg, out, force, halt_after);
  return kExitOk;
}

int cmd_sweep(const std::string& cfg_path, const std::string& out_override,
              bool force, long halt_cells) {
  RunConfig base = load_config(cfg_path);
  if (base.sweep.tau.empty() || base.sweep.epsilon.empty())
    throw ConfigError("sweep", "sweep requires non-empty tau and epsilon axes");
  const std::string out = out_override.empty() ? base.out_dir : out_override;
  fs::create_directories(out);

  long completed_now = 0;
  std::vector<std::string> cell_dirs;
  for (double t : base.sweep.tau)
    for (double e : base.sweep.epsilon) {
      char name[96];
      std::snprintf(name, sizeof name, "cell_tau%.10g_eps%.10g", t, e);
      const std::string cell_dir = out + "/" + name;
      cell_dirs.push_back(cell_dir);
      if (fs::exists(cell_dir + "/DONE") && !force) continue;
      if (halt_cells > 0 && completed_now >= halt_cells) {
        std::cout << "sweep halted after " << completed_now << " cells\n";
        return kExitOk;
      }
      RunConfig cell = base.with_cell(t, e);
      train_run(cell, cell_dir, force, 0);
      ++completed_now;
    }

  // Merge per-cell summaries once every cell is complete.
  std::string summary =
      "tau,epsilon,episodes,final_ma100,last200_stag_stag,last200_hare_hare,"
      "last200_mixed,final_exploitability\n";
  std::size_t idx = 0;
  for (double t : base.sweep.tau)
    for (double e : base.sweep.epsilon) {
      const std::string cell_dir = cell_dirs[idx++];
      const std::string csv = read_text_file(cell_dir + "/train.csv");
      std::stringstream ss(csv);
      std::string line, last;
      std::vector<std::string> tail;
      std::getline(ss, line);  // header
      long ss_sum = 0, hh_sum = 0, mx_sum = 0, rows = 0;
      std::string final_ma, final_expl;
      std::vector<std::string> all_rows;
      while (std::getline(ss, line))
        if (!line.empty()) all_rows.push_back(line);
      const std::size_t from = all_rows.size() > 200 ? all_rows.size() - 200 : 0;
      for (std::size_t r = from; r < all_rows.size(); ++r) {
        std::stringstream ls(all_rows[r]);
        std::string f;
        std::vector<std::string> fields;
        while (std::getline(ls, f, ',')) fields.push_back(f);
        ss_sum += std::stol(fields[6]);
        hh_sum += std::stol(fields[7]);
        mx_sum += std::stol(fields[8]);
        ++rows;
        final_ma = fields[2];
        final_expl = fields[5];
      }
      const long total = ss_sum + hh_sum + mx_sum;
      char buf[256];
      auto frac = [&](long c) { return total > 0 ? double(c) / total : 0.0; };
      std::snprintf(buf, sizeof buf, "%.10g,%.10g,%zu,%s,%.10g,%.10g,%.10g,%s\n", t,
                    e, all_rows.size(), final_ma.c_str(), frac(ss_sum), frac(hh_sum),
                    frac(mx_sum), final_expl.c_str());
      summary += buf;
    }
  atomic_write_file(out + "/summary.csv", summary);
  std::cout << "sweep complete: " << out << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& cfg_path, const std::string& ckpt,
             const std::string& partner_ckpt, const std::string& out_override) {
  RunConfig cfg = load_config(cfg_path);
  auto env = cfg.make_env();
  TrainedAgents ego = load_agents(cfg, *env, ckpt);
  const std::string out_dir =
      out_override.empty() ? fs::path(ckpt).parent_path().string() : out_override;
  fs::create_directories(out_dir.empty() ? "." : out_dir);

  std::vector<ReportRow> rows;
  const std::uint64_t seed = cfg.eval.seed;
  TrainedPolicy ego_policy(ego, *env);

  auto sp = self_play(ego_policy, *env, cfg.eval);
  rows.push_back({"self_play", 0.0, "ego|ego", "team_return", sp.mean, sp.std_error,
                  sp.rollouts, seed});

  TrainedAgents partner_agents;
  std::unique_ptr<TrainedPolicy> partner_policy;
  std::string pairing = "ego|ego";
  if (!partner_ckpt.empty()) {
    partner_agents = load_agents(cfg, *env, partner_ckpt);
    partner_policy = std::make_unique<TrainedPolicy>(partner_agents, *env);
    pairing = "ego|partner";
  }
  StagePolicy& partner = partner_policy ? *partner_policy : ego_policy;

  for (const auto& pt : perturbed_partner(ego_policy, partner, *env, cfg.eval)) {
    rows.push_back({"perturbed_partner", pt.delta, pairing, "team_return",
                    pt.team_return, pt.std_error, cfg.eval.rollouts, seed});
    if (pt.retention_defined)
      rows.push_back({"perturbed_partner", pt.delta, pairing, "retention",
                      pt.retention, 0.0, cfg.eval.rollouts, seed});
  }

  if (partner_policy) {
    NamedPolicy a{"ego", &ego_policy}, b{"partner", partner_policy.get()};
    std::vector<std::pair<NamedPolicy, NamedPolicy>> pairs{{a, b}};
    for (const auto& cell : cross_play(pairs, *env, cfg.eval)) {
      rows.push_back({"cross_play", 0.0, cell.pairing, "ego_reward_seat0",
                      cell.reward_a_first, cell.se_first, cfg.eval.rollouts, seed});
      rows.push_back({"cross_play", 0.0, cell.pairing, "partner_reward_seat1",
                      cell.reward_b_first, cell.se_first, cfg.eval.rollouts, seed});
      rows.push_back({"cross_play", 0.0, cell.pairing, "ego_reward_seat1",
                      cell.reward_a_second, cell.se_second, cfg.eval.rollouts, seed});
      rows.push_back({"cross_play", 0.0, cell.pairing, "partner_reward_seat0",
                      cell.reward_b_second, cell.se_second, cfg.eval.rollouts, seed});
    }
  }

  if (cfg.env.kind == "grid_stag_hunt") {
    auto f = outcome_fractions(ego_policy, partner, *env, cfg.eval);
    if (f.any) {
      rows.push_back({"outcomes", 0.0, pairing, "stag_stag", f.stag_stag, 0.0,
                      cfg.eval.rollouts, seed});
      rows.push_back({"outcomes", 0.0, pairing, "hare_hare", f.hare_hare, 0.0,
                      cfg.eval.rollouts, seed});
      rows.push_back({"outcomes", 0.0, pairing, "mixed", f.mixed, 0.0,
                      cfg.eval.rollouts, seed});
    }
  }
  if (env->exact_payoffs() != nullptr && env->spec().horizon == 1) {
    const double gap = true_tensor_exploitability(ego, *env, ego.solver);
    rows.push_back({"exploitability", 0.0, "ego", "true_tensor_gap", gap, 0.0, 1, seed});
  }

  std::ostringstream ss;
  write_report_csv(ss, rows);
  const std::string path = out_dir + "/eval.csv";
  atomic_write_file(path, ss.str());
  std::cout << "eval written: " << path << "\n";
  return kExitOk;
}

int cmd_solve(const std::string& payoff_path, double eps, double tau,
              const std::string& method, double tol, int iters) {
  StagePayoff payoff = parse_payoff_file(payoff_path);
  SolveMethod m = SolveMethod::FixedPoint;
  if (method == "mirror_ascent") m = SolveMethod::MirrorAscent;
  else if (method == "hedge_lifted") m = SolveMethod::HedgeLifted;
  else if (method != "fixed_point") throw ConfigError("method", "unknown method " + method);
  SolverConfig cfg = SolverConfig::make(payoff.n, eps, tau, m, iters, tol);
  auto [profile, diag] = rqre_solve(payoff, cfg);
  auto rep = exploitability(payoff, profile, cfg);

  std::cout << "section,player,action,value\n";
  char buf[64];
  for (int i = 0; i < payoff.n; ++i)
    for (std::size_t a = 0; a < profile.dists[i].size(); ++a) {
      std::snprintf(buf, sizeof buf, "%.10g", profile.dists[i][a]);
      std::cout << "profile," << i << ',' << a << ',' << buf << "\n";
    }
  for (int i = 0; i < payoff.n; ++i) {
    std::snprintf(buf, sizeof buf, "%.10g", rep.per_player[i]);
    std::cout << "exploitability," << i << ",," << buf << "\n";
  }
  std::snprintf(buf, sizeof buf, "%.10g", rep.max_gap);
  std::cout << "exploitability,max,," << buf << "\n";
  for (std::size_t t = 0; t < diag.gap_trace.size(); ++t) {
    std::snprintf(buf, sizeof buf, "%.10g", diag.gap_trace[t]);
    std::cout << "trace," << t + 1 << ",," << buf << "\n";
  }
  std::cout << (diag.certified ? "status,,,certified\n" : "status,,,not_certified\n");
  return kExitOk;
}

int cmd_demo_instability() {
  const std::vector<double> eps = {0.1, 0.01, 0.001};
  auto rows = nash_instability_demo(eps);
  std::cout << "eps_pert,alpha_gap,nash_jump_l1,implied_nash_lipschitz,rqre_change_l1\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g,%.10g,%.10g\n", r.eps_pert,
                  r.alpha_gap, r.nash_jump_l1, r.implied_nash_lipschitz,
                  r.rqre_change_l1);
    std::cout << buf;
  }
  return kExitOk;
}

int cmd_audit(const std::string& run_dir) {
  const std::string cfg_path = run_dir + "/config.cfg";
  const std::string ckpt_path = run_dir + "/checkpoint.bin";
  if (!fs::exists(cfg_path) || !fs::exists(ckpt_path))
    throw std::runtime_error("audit: run directory lacks config.cfg/checkpoint.bin");

  RunConfig cfg = parse_run_config_text(read_text_file(cfg_path));
  auto env = cfg.make_env();
  TrainConfig tc = cfg.train_config(env->spec());
  OviRunner runner(*env, tc);
  std::ifstream in(ckpt_path, std::ios::binary);
  runner.load_checkpoint(in);

  bool ok = true;
  TrainedAgents agents = runner.agents();
  for (int h = 0; h < agents.H; ++h) {
    const auto& g = agents.gram[h];
    const double asym = (g - g.transpose()).cwiseAbs().maxCoeff();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g, Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues().minCoeff();
    const bool pass = asym <= 1e-12 && lmin >= agents.lambda - 1e-9;
    std::cout << (pass ? "PASS" : "FAIL") << " design stage " << h + 1
              << ": symmetric=" << asym << " lambda_min=" << lmin << "\n";
    ok = ok && pass;
  }
  for (std::size_t h = 0; h < runner.elliptical_reports().size(); ++h) {
    const auto rep = runner.elliptical_reports()[h];
    const bool pass = rep.pass();
    std::cout << (pass ? "PASS" : "FAIL") << " elliptical potential stage " << h + 1
              << ": cumulative=" << rep.cumulative << " bound=" << rep.bound << "\n";
    ok = ok && pass;
  }
  if (cfg.env.kind == "synthetic") {
    auto rep = optimism_audit(agents, *env, tc, 1000);
    const bool pass = rep.fraction >= 0.95;
    std::cout << (pass ? "PASS" : "FAIL") << " optimism: fraction=" << rep.fraction
              << " over " << rep.probes << " probes\n";
    ok = ok && pass;
  }
  if (!ok) {
    std::cout << "audit failed\n";
    return kExitAudit;
  }
  std::cout << "audit passed\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Risk-sensitive quantal response equilibrium learning"};
  app.require_subcommand(1);

  std::string cfg_path, out_dir, ckpt, partner, payoff_path, run_dir;
  std::string method = "fixed_point";
  bool force = false;
  long halt_after = 0, halt_cells = 0;
  double eps = 1.0, tau = 0.0, tol = 1e-6;
  int iters = 100;

  auto* train = app.add_subcommand("train", "run the training loop");
  train->add_option("config", cfg_path)->required();
  train->add_option("--out", out_dir);
  train->add_flag("--force", force);
  train->add_option("--halt-after", halt_after)->description("pause after N episodes");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("config", cfg_path)->required();
  eval->add_option("--checkpoint", ckpt)->required();
  eval->add_option("--partner", partner);
  eval->add_option("--out", out_dir);

  auto* sweep = app.add_subcommand("sweep", "train every (tau, epsilon) cell");
  sweep->add_option("config", cfg_path)->required();
  sweep->add_option("--out", out_dir);
  sweep->add_flag("--force", force);
  sweep->add_option("--halt-cells", halt_cells);

  auto* solve = app.add_subcommand("solve", "solve one stage game from a payoff file");
  solve->add_option("payoff", payoff_path)->required();
  solve->add_option("--eps", eps);
  solve->add_option("--tau", tau);
  solve->add_option("--method", method);
  solve->add_option("--tol", tol);
  solve->add_option("--iters", iters);

  app.add_subcommand("demo-instability", "selection-jump table on the coordination family");

  auto* audit = app.add_subcommand("audit", "verify design/elliptical/optimism invariants");
  audit->add_option("run_dir", run_dir)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(cfg_path, out_dir, force, halt_after);
    if (eval->parsed()) return cmd_eval(cfg_path, ckpt, partner, out_dir);
    if (sweep->parsed()) return cmd_sweep(cfg_path, out_dir, force, halt_cells);
    if (solve->parsed()) return cmd_solve(payoff_path, eps, tau, method, tol, iters);
    if (app.get_subcommand("demo-instability")->parsed()) return cmd_demo_instability();
    if (audit->parsed()) return cmd_audit(run_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error [" << e.field << "]: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
