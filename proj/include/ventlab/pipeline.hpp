#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "ventlab/io.hpp"

namespace ventlab {

using Path = std::filesystem::path;

// One plant variation: resistance and compliance override the base lung.
struct Setting {
  double r = 5.0;
  double c = 20.0;
};

inline void to_json(Json& j, const Setting& s) { j = Json{{"r", s.r}, {"c", s.c}}; }

inline void from_json(const Json& j, Setting& s) {
  require_keys(j, {"r", "c"}, "setting");
  j.at("r").get_to(s.r);
  j.at("c").get_to(s.c);
}

inline std::string setting_name(const Setting& s) {
  return "R" + format_double(s.r) + "C" + format_double(s.c);
}

// Everything a full run needs; every field has a working default and json
// configs patch individual fields. The CLI seed, not the config, drives all
// randomness so one seed reproduces a run bit for bit.
struct RunConfig {
  TimeGrid grid;
  LungParams lung;
  std::vector<Setting> settings = {{5.0, 20.0},  {5.0, 50.0},  {20.0, 20.0},
                                   {20.0, 50.0}, {50.0, 20.0}, {50.0, 50.0}};
  std::vector<double> suite_pips = default_suite_pips();
  int rise_steps = 5;
  ExploreConfig explore;
  int collect_breaths = 500;
  int h_c = 10;
  int h_p = 10;
  double train_frac = 0.8;
  SimTrainOpts sim_train;
  int sim_eval_seqs = 200;
  PolicyTrainOpts policy_train;
  std::vector<double> lambda_sweep = {0.05, 0.1, 0.2, 0.5};
  GridSpec pid_grid;
  BenchOpts bench;

  std::vector<TargetWaveform> suite() const {
    return benchmark_suite(lung.peep, grid, rise_steps, suite_pips);
  }

  LungParams lung_for(const Setting& s) const {
    LungParams lp = lung;
    lp.r = s.r;
    lp.c = s.c;
    return lp;
  }

  void validate() const {
    grid.validate();
    lung.validate();
    if (settings.empty()) throw ConfigError("RunConfig: no plant settings");
    for (const Setting& s : settings) lung_for(s).validate();
    if (suite_pips.empty()) throw ConfigError("RunConfig: no suite pressures");
    for (const TargetWaveform& w : suite()) w.validate();
    explore.validate(grid);
    if (collect_breaths < 2) throw ConfigError("RunConfig: collect_breaths must be >= 2");
    if (h_c < 1 || h_p < 1) throw ConfigError("RunConfig: history lengths must be >= 1");
    if (!(train_frac > 0.0 && train_frac < 1.0))
      throw ConfigError("RunConfig: train_frac must be in (0, 1)");
    if (sim_train.epochs < 1 || sim_train.batch < 1 || !(sim_train.lr > 0.0))
      throw ConfigError("RunConfig: bad simulator training options");
    if (sim_eval_seqs < 1) throw ConfigError("RunConfig: sim_eval_seqs must be >= 1");
    policy_train.validate();
    if (lambda_sweep.empty()) throw ConfigError("RunConfig: empty lambda sweep");
    for (double l : lambda_sweep)
      if (!(l >= 0.0)) throw ConfigError("RunConfig: lambda values must be >= 0");
    pid_grid.validate();
    if (pid_grid.window < grid.insp_steps)
      throw ConfigError("RunConfig: pid window must cover the inspiratory phase");
    if (explore.base_pid.window < grid.insp_steps)
      throw ConfigError("RunConfig: exploration pid window must cover the inspiratory phase");
    bench.validate();
  }
};

inline void to_json(Json& j, const RunConfig& c) {
  j = Json{{"grid", c.grid},
           {"lung", c.lung},
           {"settings", c.settings},
           {"suite_pips", c.suite_pips},
           {"rise_steps", c.rise_steps},
           {"explore", c.explore},
           {"collect_breaths", c.collect_breaths},
           {"h_c", c.h_c},
           {"h_p", c.h_p},
           {"train_frac", c.train_frac},
           {"sim_train", c.sim_train},
           {"sim_eval_seqs", c.sim_eval_seqs},
           {"policy_train", c.policy_train},
           {"lambda_sweep", c.lambda_sweep},
           {"pid_grid", c.pid_grid},
           {"bench", c.bench}};
}

inline void from_json(const Json& j, RunConfig& c) {
  require_keys(j,
               {"grid", "lung", "settings", "suite_pips", "rise_steps", "explore",
                "collect_breaths", "h_c", "h_p", "train_frac", "sim_train", "sim_eval_seqs",
                "policy_train", "lambda_sweep", "pid_grid", "bench"},
               "run config");
  c.grid = j.value("grid", c.grid);
  c.lung = j.value("lung", c.lung);
  c.settings = j.value("settings", c.settings);
  c.suite_pips = j.value("suite_pips", c.suite_pips);
  c.rise_steps = j.value("rise_steps", c.rise_steps);
  c.explore = j.value("explore", c.explore);
  c.collect_breaths = j.value("collect_breaths", c.collect_breaths);
  c.h_c = j.value("h_c", c.h_c);
  c.h_p = j.value("h_p", c.h_p);
  c.train_frac = j.value("train_frac", c.train_frac);
  c.sim_train = j.value("sim_train", c.sim_train);
  c.sim_eval_seqs = j.value("sim_eval_seqs", c.sim_eval_seqs);
  c.policy_train = j.value("policy_train", c.policy_train);
  c.lambda_sweep = j.value("lambda_sweep", c.lambda_sweep);
  c.pid_grid = j.value("pid_grid", c.pid_grid);
  c.bench = j.value("bench", c.bench);
}

inline RunConfig load_run_config(const Path& path) {
  const Json j = load_json_file(path);
  RunConfig cfg;
  try {
    cfg = j.get<RunConfig>();
  } catch (const Json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  cfg.validate();
  return cfg;
}

// ---- artifact locations

inline Path setting_dir(const Path& out, const Setting& s) {
  return out / "settings" / setting_name(s);
}

inline Path robust_dir(const Path& out) { return out / "robust"; }

inline void require_artifact(const Path& p, const char* stage) {
  if (!std::filesystem::exists(p))
    throw ConfigError("missing " + p.string() + " (run the " + stage + " stage first)");
}

inline Json load_report(const Path& p, const char* kind, const char* stage) {
  require_artifact(p, stage);
  const Json j = load_json_file(p);
  if (j.value("kind", std::string()) != kind)
    throw ConfigError(p.string() + ": expected a '" + std::string(kind) + "' report");
  return j;
}

inline Json report_head(const char* kind) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = kind;
  return j;
}

// ---- stages
//
// Every stage is a pure function of (config, seed, artifacts already in the
// out directory); each derives its own rng streams from the run seed, so
// stages can be rerun individually and a whole run is reproducible.

inline Json stage_grid_pid(const RunConfig& cfg, uint64_t seed, const Path& out) {
  cfg.validate();
  const auto suite = cfg.suite();
  Json summary = Json::object();
  for (const Setting& s : cfg.settings) {
    BenchOpts opts = cfg.bench;
    opts.seed = derive_seed(seed, "grid-" + setting_name(s));
    const GridResult res = grid_search_pid(cfg.pid_grid, cfg.lung_for(s), suite, cfg.grid, opts);
    Json j = report_head("grid");
    j["winner"] = res.best;
    j["winner_score"] = res.best_score;
    j["cells"] = res.leaderboard.size();
    j["leaderboard"] = res.leaderboard;
    write_text_file(setting_dir(out, s) / "grid.json", dump_json(j));
    summary[setting_name(s)] =
        Json{{"winner", res.best}, {"overall", res.best_score.overall}};
  }
  return summary;
}

// The exploration pid follows the grid winner once the grid stage has run;
// before that the configured default applies.
inline std::pair<PidCoeffs, std::string> resolve_base_pid(const RunConfig& cfg, const Path& out,
                                                          const Setting& s) {
  const Path p = setting_dir(out, s) / "grid.json";
  if (std::filesystem::exists(p)) {
    const Json j = load_report(p, "grid", "grid-pid");
    PidCoeffs pid = j.at("winner").get<PidCoeffs>();
    pid.validate();
    return {pid, "grid"};
  }
  return {cfg.explore.base_pid, "config"};
}

inline Json stage_collect(const RunConfig& cfg, uint64_t seed, const Path& out) {
  cfg.validate();
  const auto suite = cfg.suite();
  Json summary = Json::object();
  for (const Setting& s : cfg.settings) {
    const auto [base, source] = resolve_base_pid(cfg, out, s);
    ExploreConfig ec = cfg.explore;
    ec.base_pid = base;
    Lung lung(cfg.lung_for(s));
    Rng rng = derive_rng(seed, "collect-" + setting_name(s));
    const CollectResult col = collect(lung, ec, suite, cfg.collect_breaths, cfg.grid, rng);
    write_text_file(setting_dir(out, s) / "collect.csv", trace_csv(col.traces));
    Json j = report_head("collect");
    j["base_pid"] = ec.base_pid;
    j["base_pid_source"] = source;
    j["breaths"] = cfg.collect_breaths;
    j["boundary_breaths"] = col.n_boundary;
    j["triangular_breaths"] = col.n_triangular;
    write_text_file(setting_dir(out, s) / "collect.json", dump_json(j));
    summary[setting_name(s)] = j;
  }
  return summary;
}

inline Json stage_train_sim(const RunConfig& cfg, uint64_t seed, const Path& out) {
  cfg.validate();
  Json summary = Json::object();
  for (const Setting& s : cfg.settings) {
    const Path csv = setting_dir(out, s) / "collect.csv";
    require_artifact(csv, "collect");
    const Rollout traces = parse_trace_csv(read_text_file(csv));
    const TimeGrid& g = traces.pressures.grid;
    if (g.dt != cfg.grid.dt || g.steps_per_breath != cfg.grid.steps_per_breath ||
        g.insp_steps != cfg.grid.insp_steps)
      throw ConfigError(csv.string() + ": time grid does not match the run config");
    const auto episodes = split_breath(traces.pressures, traces.controls, cfg.grid);
    const RegressionSet set = build_windows(episodes, cfg.h_c, cfg.h_p, true);
    Rng srng = derive_rng(seed, "sim-split-" + setting_name(s));
    const auto [train, val] = split_train_val(set, cfg.train_frac, srng, true);
    SimTrainOpts opts = cfg.sim_train;
    opts.seed = derive_seed(seed, "sim-train-" + setting_name(s));
    const SimTrainResult res = train_sim(train, val, opts, cfg.lung.peep);
    save_sim_checkpoint(setting_dir(out, s) / "sim.json", res.model);
    write_text_file(setting_dir(out, s) / "sim_curves.csv",
                    curve_csv(res.train_curve, res.val_curve));
    summary[setting_name(s)] = Json{{"best_epoch", res.best_epoch},
                                    {"val_mse", res.val_curve[res.best_epoch]},
                                    {"train_windows", train.windows.size()},
                                    {"val_windows", val.windows.size()}};
  }
  return summary;
}

inline Json stage_eval_sim(const RunConfig& cfg, uint64_t seed, const Path& out) {
  cfg.validate();
  const auto suite = cfg.suite();
  Json summary = Json::object();
  for (const Setting& s : cfg.settings) {
    const Path simfile = setting_dir(out, s) / "sim.json";
    require_artifact(simfile, "train-sim");
    const SimModel model = load_sim_checkpoint(simfile);
    const LungParams lp = cfg.lung_for(s);

    // the held-out control distribution replays the collection policy
    const Json cj = load_report(setting_dir(out, s) / "collect.json", "collect", "collect");
    ExploreConfig ec = cfg.explore;
    ec.base_pid = cj.at("base_pid").get<PidCoeffs>();

    LungPlant oracle(lp, cfg.grid, true);
    SimPlant learned(model);
    auto dist = perturbed_pid_distribution(lp, ec, suite, cfg.grid);
    Rng rng = derive_rng(seed, "eval-sim-" + setting_name(s));
    const double total =
        open_loop_distance(oracle, learned, dist, cfg.sim_eval_seqs, cfg.grid.insp_steps, rng);
    Json j = report_head("sim-eval");
    j["sequences"] = cfg.sim_eval_seqs;
    j["horizon"] = cfg.grid.insp_steps;
    j["total_gap"] = total;
    j["per_step_gap"] = total / cfg.grid.insp_steps;
    write_text_file(setting_dir(out, s) / "sim_eval.json", dump_json(j));
    summary[setting_name(s)] = Json{{"per_step_gap", total / cfg.grid.insp_steps}};
  }
  return summary;
}

// Mean grid score across settings per coefficient triple, smallest wins,
// ties to the lexicographically first triple. Needs every setting's full
// leaderboard from the grid stage.
inline std::pair<PidCoeffs, double> best_overall_pid(const RunConfig& cfg, const Path& out) {
  std::map<std::tuple<double, double, double>, std::pair<double, size_t>> acc;
  int window = 0;
  for (const Setting& s : cfg.settings) {
    const Json j = load_report(setting_dir(out, s) / "grid.json", "grid", "grid-pid");
    for (const Json& e : j.at("leaderboard")) {
      const PidCoeffs pid = e.at("pid").get<PidCoeffs>();
      window = pid.window;
      auto& slot = acc[{pid.alpha, pid.beta, pid.gamma}];
      slot.first += e.at("overall").get<double>();
      slot.second += 1;
    }
  }
  bool found = false;
  std::tuple<double, double, double> best_key;
  double best_mean = 0.0;
  for (const auto& [key, slot] : acc) {
    if (slot.second != cfg.settings.size()) continue;  // not scored everywhere
    const double mean = slot.first / cfg.settings.size();
    if (!found || mean < best_mean) {
      found = true;
      best_key = key;
      best_mean = mean;
    }
  }
  if (!found) throw ConfigError("best_overall_pid: no coefficient triple covers every setting");
  PidCoeffs pid{std::get<0>(best_key), std::get<1>(best_key), std::get<2>(best_key), window};
  return {pid, best_mean};
}

namespace detail {

struct SweepOutcome {
  Policy policy;
  Json sweep;
  std::vector<double> train_curve, val_curve;
};

// Trains one residual policy per lambda with a shared seed and keeps the
// one with the best validation tracking loss.
inline SweepOutcome lambda_sweep_train(const RunConfig& cfg, const TrainObjective& obj,
                                       const PidCoeffs& base, uint64_t seed,
                                       const char* seed_label) {
  SweepOutcome out;
  Json entries = Json::array();
  bool have_best = false;
  double best_val = 0.0;
  for (double lambda : cfg.lambda_sweep) {
    PolicyTrainOpts opts = cfg.policy_train;
    opts.lambda = lambda;
    opts.seed = derive_seed(seed, seed_label);
    const PolicyTrainResult res = train_policy(obj, base, opts);
    entries.push_back(Json{{"lambda", lambda},
                           {"best_val", res.best_val},
                           {"best_epoch", res.best_epoch}});
    if (!have_best || res.best_val < best_val) {
      have_best = true;
      best_val = res.best_val;
      out.policy = res.policy;
      out.train_curve = res.train_curve;
      out.val_curve = res.val_curve;
    }
  }
  out.sweep = report_head("sweep");
  out.sweep["baseline_pid"] = base;
  out.sweep["entries"] = entries;
  out.sweep["chosen_lambda"] = out.policy.lambda;
  out.sweep["chosen_val"] = best_val;
  return out;
}

}  // namespace detail

inline Json stage_train_ctrl(const RunConfig& cfg, uint64_t seed, const Path& out) {
  cfg.validate();
  const auto suite = cfg.suite();
  Json summary = Json::object();

  std::vector<SimModel> sims;
  for (const Setting& s : cfg.settings) {
    const Path simfile = setting_dir(out, s) / "sim.json";
    require_artifact(simfile, "train-sim");
    sims.push_back(load_sim_checkpoint(simfile));
  }

  for (size_t si = 0; si < cfg.settings.size(); ++si) {
    const Setting& s = cfg.settings[si];
    const auto [base, source] = resolve_base_pid(cfg, out, s);
    TrainObjective obj;
    obj.sims = {sims[si]};
    obj.waveforms = suite;
    const std::string label = "ctrl-" + setting_name(s);
    auto res = detail::lambda_sweep_train(cfg, obj, base, seed, label.c_str());
    res.sweep["baseline_pid_source"] = source;
    save_policy_checkpoint(setting_dir(out, s) / "policy.json", res.policy);
    write_text_file(setting_dir(out, s) / "sweep.json", dump_json(res.sweep));
    write_text_file(setting_dir(out, s) / "policy_curves.csv",
                    curve_csv(res.train_curve, res.val_curve));
    summary[setting_name(s)] = Json{{"chosen_lambda", res.policy.lambda},
                                    {"chosen_val", res.sweep["chosen_val"]}};
  }

  // one policy trained against every setting's simulator at once
  const auto [robust_base, robust_base_mean] = best_overall_pid(cfg, out);
  TrainObjective obj;
  obj.sims = sims;
  obj.waveforms = suite;
  auto res = detail::lambda_sweep_train(cfg, obj, robust_base, seed, "ctrl-robust");
  res.sweep["baseline_pid_source"] = "grid mean across settings";
  res.sweep["baseline_mean_score"] = robust_base_mean;
  save_policy_checkpoint(robust_dir(out) / "policy.json", res.policy);
  write_text_file(robust_dir(out) / "sweep.json", dump_json(res.sweep));
  write_text_file(robust_dir(out) / "policy_curves.csv",
                  curve_csv(res.train_curve, res.val_curve));
  summary["robust"] = Json{{"chosen_lambda", res.policy.lambda},
                           {"chosen_val", res.sweep["chosen_val"]}};
  return summary;
}

inline Policy strip_correction(const Policy& p) {
  Policy base = p;
  base.correction.reset();
  base.lambda = 0.0;
  return base;
}

inline Json stage_score(const RunConfig& cfg, uint64_t seed, const Path& out) {
  cfg.validate();
  const auto suite = cfg.suite();
  Json board = report_head("scoreboard");
  Json rows = Json::array();
  int wins = 0;

  for (const Setting& s : cfg.settings) {
    const Path pfile = setting_dir(out, s) / "policy.json";
    require_artifact(pfile, "train-ctrl");
    const Policy residual = load_policy_checkpoint(pfile);
    const Policy baseline = strip_correction(residual);
    BenchOpts opts = cfg.bench;
    opts.seed = derive_seed(seed, "score-" + setting_name(s));
    const LungParams lp = cfg.lung_for(s);
    const Score sp = score(baseline, lp, suite, cfg.grid, opts);
    const Score sr = score(residual, lp, suite, cfg.grid, opts);
    const double margin = sp.overall - sr.overall;
    Json j = report_head("score");
    j["pid_coeffs"] = residual.pid;
    j["lambda"] = residual.lambda;
    j["pid"] = sp;
    j["residual"] = sr;
    j["margin"] = margin;
    write_text_file(setting_dir(out, s) / "score.json", dump_json(j));
    rows.push_back(Json{{"setting", s},
                        {"name", setting_name(s)},
                        {"pid_overall", sp.overall},
                        {"residual_overall", sr.overall},
                        {"margin", margin},
                        {"improved", margin > 0.0}});
    if (margin > 0.0) ++wins;
  }

  const Path rfile = robust_dir(out) / "policy.json";
  require_artifact(rfile, "train-ctrl");
  const Policy robust = load_policy_checkpoint(rfile);
  const Policy robust_base = strip_correction(robust);
  Json robust_rows = Json::array();
  double mean_margin = 0.0;
  for (const Setting& s : cfg.settings) {
    BenchOpts opts = cfg.bench;
    opts.seed = derive_seed(seed, "score-robust-" + setting_name(s));
    const LungParams lp = cfg.lung_for(s);
    const Score sp = score(robust_base, lp, suite, cfg.grid, opts);
    const Score sr = score(robust, lp, suite, cfg.grid, opts);
    robust_rows.push_back(Json{{"name", setting_name(s)},
                               {"pid_overall", sp.overall},
                               {"residual_overall", sr.overall},
                               {"margin", sp.overall - sr.overall}});
    mean_margin += (sp.overall - sr.overall);
  }
  mean_margin /= cfg.settings.size();
  Json rj = report_head("score");
  rj["pid_coeffs"] = robust.pid;
  rj["lambda"] = robust.lambda;
  rj["per_setting"] = robust_rows;
  rj["mean_margin"] = mean_margin;
  write_text_file(robust_dir(out) / "score.json", dump_json(rj));

  board["settings"] = rows;
  board["wins"] = wins;
  board["n_settings"] = cfg.settings.size();
  board["robust"] = Json{{"per_setting", robust_rows},
                         {"mean_margin", mean_margin},
                         {"improved", mean_margin > 0.0}};
  write_text_file(out / "scoreboard.json", dump_json(board));
  return board;
}

inline Json stage_compare(const RunConfig& cfg, uint64_t seed, const Path& out) {
  cfg.validate();
  const auto suite = cfg.suite();
  const Json board = load_report(out / "scoreboard.json", "scoreboard", "score");
  const size_t example_wi = suite.size() / 2;  // mid-suite waveform for the traces

  Json report = report_head("compare");
  Json per_setting = Json::array();
  for (size_t si = 0; si < cfg.settings.size(); ++si) {
    const Setting& s = cfg.settings[si];
    const Policy residual = load_policy_checkpoint(setting_dir(out, s) / "policy.json");
    const Policy baseline = strip_correction(residual);
    BenchOpts opts = cfg.bench;
    opts.seed = derive_seed(seed, "score-" + setting_name(s));  // same noise as the score stage
    const LungParams lp = cfg.lung_for(s);
    const BenchRun pid_run = bench_run(baseline, lp, suite, cfg.grid, opts);
    const BenchRun res_run = bench_run(residual, lp, suite, cfg.grid, opts);

    const Json& row = board.at("settings").at(si);
    const double pid_overall = row.at("pid_overall").get<double>();
    const double res_overall = row.at("residual_overall").get<double>();
    if (pid_run.score.overall != pid_overall || res_run.score.overall != res_overall)
      throw ConfigError("compare: scores drifted from the score stage for " + setting_name(s));

    std::vector<double> target, pid_p, res_p;
    for (int t = 0; t < cfg.grid.insp_steps; ++t) {
      target.push_back(suite[example_wi].at(t));
      pid_p.push_back(pid_run.runs[example_wi].rollout.pressures.values[t]);
      res_p.push_back(res_run.runs[example_wi].rollout.pressures.values[t]);
    }
    per_setting.push_back(
        Json{{"name", setting_name(s)},
             {"pid_coeffs", residual.pid},
             {"lambda", residual.lambda},
             {"pid_overall", pid_overall},
             {"residual_overall", res_overall},
             {"margin", pid_overall - res_overall},
             {"relative_improvement_pct",
              pid_overall > 0.0 ? (pid_overall - res_overall) / pid_overall * 100.0 : 0.0},
             {"example", Json{{"pip", suite[example_wi].pip},
                              {"target", target},
                              {"pid_pressure", pid_p},
                              {"residual_pressure", res_p}}}});
  }
  report["per_setting"] = per_setting;
  report["wins"] = board.at("wins");
  report["n_settings"] = board.at("n_settings");
  report["robust"] = board.at("robust");
  write_text_file(out / "compare.json", dump_json(report));
  return report;
}

inline void write_run_manifest(const RunConfig& cfg, uint64_t seed, const Path& out) {
  Json cj = report_head("run");
  cj["seed"] = seed;
  cj["config"] = cfg;
  write_text_file(out / "config.json", dump_json(cj));
}

// Whole pipeline in dependency order. The grid runs first so exploration
// collects data around the tuned baseline rather than the configured stub.
inline Json run_all(const RunConfig& cfg, uint64_t seed, const Path& out) {
  cfg.validate();
  write_run_manifest(cfg, seed, out);
  stage_grid_pid(cfg, seed, out);
  stage_collect(cfg, seed, out);
  stage_train_sim(cfg, seed, out);
  stage_eval_sim(cfg, seed, out);
  stage_train_ctrl(cfg, seed, out);
  stage_score(cfg, seed, out);
  return stage_compare(cfg, seed, out);
}

}  // namespace ventlab
