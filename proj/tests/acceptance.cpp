// Acceptance gate for the whole artifact. Runs the full pipeline twice and
// checks every headline claim and property suite, printing one line per
// criterion. Exit status is 0 only when every criterion passes.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "ventlab/pipeline.hpp"
#include "ventlab/policy_opt.hpp"

using namespace ventlab;
namespace fs = std::filesystem;

namespace {

constexpr uint64_t kSeed = 2026;
int g_failures = 0;

void report(int num, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", num, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

// Small random simulator in the same shape train_sim produces, kept tame so
// 40-step unrolls neither saturate nor explode.
SimModel random_sim(uint64_t seed) {
  SimModel sim;
  sim.h_c = 10;
  sim.h_p = 10;
  sim.boot = 5.0;
  Rng rng = derive_rng(seed, "acceptance-sim");
  sim.net = Mlp::create({22, 16, 1}, rng);
  for (double& w : sim.net.params) w *= rng.uniform(0.5, 1.0);
  sim.norm.feat_mean.assign(22, 0.0);
  sim.norm.feat_scale.assign(22, 1.0);
  for (int i = 0; i < 11; ++i) {
    sim.norm.feat_mean[i] = 50.0;
    sim.norm.feat_scale[i] = 30.0;
    sim.norm.feat_mean[11 + i] = 12.0;
    sim.norm.feat_scale[11 + i] = 8.0;
  }
  sim.norm.label_mean = 0.05;
  sim.norm.label_scale = 0.4;
  sim.norm.delta = true;
  return sim;
}

// ---- criteria 1 and 2: the full pipeline run and its scoreboard

double run_pipeline(const RunConfig& cfg, const fs::path& out) {
  fs::remove_all(out);
  fs::create_directories(out);
  const auto t0 = std::chrono::steady_clock::now();
  run_all(cfg, kSeed, out);
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void criterion_1_and_2(const fs::path& outA, double elapsed) {
  const Json board = load_json_file(outA / "scoreboard.json");
  const int wins = board.at("wins").get<int>();
  const int n = board.at("n_settings").get<int>();
  const bool in_budget = elapsed < 30.0 * 60.0;
  report(1, wins >= 5 && in_budget,
         "residual beats its grid pid winner on " + std::to_string(wins) + "/" +
             std::to_string(n) + " settings, run-all took " + fmt(elapsed) + "s (budget 1800s)");

  const double margin = board.at("robust").at("mean_margin").get<double>();
  report(2, margin > 0.0,
         "multi-setting controller beats the best overall pid by " + fmt(margin) +
             " mean score across settings");
}

// ---- criterion 3: learned simulators stay close to the noise-free plant
// on control sequences drawn from a stream no training stage ever used

void criterion_3(const RunConfig& cfg, const fs::path& outA) {
  const auto suite = cfg.suite();
  double worst = 0.0;
  std::string worst_name;
  for (const Setting& s : cfg.settings) {
    const SimModel model = load_sim_checkpoint(setting_dir(outA, s) / "sim.json");
    const Json cj = load_json_file(setting_dir(outA, s) / "collect.json");
    ExploreConfig ec = cfg.explore;
    ec.base_pid = cj.at("base_pid").get<PidCoeffs>();
    const LungParams lp = cfg.lung_for(s);

    LungPlant oracle(lp, cfg.grid, true);
    SimPlant learned(model);
    auto dist = perturbed_pid_distribution(lp, ec, suite, cfg.grid);
    Rng rng = derive_rng(kSeed, "acceptance-fidelity-" + setting_name(s));
    const double total = open_loop_distance(oracle, learned, dist, 200, 40, rng);
    const double per_step = total / 40.0;
    if (per_step > worst) {
      worst = per_step;
      worst_name = setting_name(s);
    }
  }
  report(3, worst < 1.0,
         "per-step open-loop gap to the noise-free plant over 200 held-out sequences, worst " +
             fmt(worst) + " cmH2O at " + worst_name + " (bound 1.0)");
}

// ---- criterion 4: reverse-mode gradients against central differences

void criterion_4() {
  int net_bad = 0;
  Rng rng = derive_rng(kSeed, "acceptance-grad-net");
  for (int draw = 0; draw < 100; ++draw) {
    const int n_in = 3 + static_cast<int>(rng.index(6));
    std::vector<int> dims = {n_in, 4 + static_cast<int>(rng.index(9)), 1};
    if (draw % 2 == 1) dims.insert(dims.begin() + 2, 4 + static_cast<int>(rng.index(5)));
    Mlp net = Mlp::create(dims, rng);
    for (double& p : net.params) p += rng.uniform(-0.3, 0.3);
    std::vector<double> x(n_in);
    for (double& v : x) v = rng.uniform(-2.0, 2.0);

    Tape t;
    const Tape::Idx p0 = net.push_params(t);
    const Tape::Idx x0 = t.size();
    for (double v : x) t.leaf(v);
    const Tape::Idx x_end = t.size();
    const Tape::Idx y = Mlp::build(t, p0, dims, x0);
    // alternate the squared and absolute losses the pipeline trains with;
    // the absolute target sits at least 0.5 from the kink
    Tape::Idx loss;
    if (draw < 50) {
      const Tape::Idx d = t.sub(y, t.constant(t.value(y) - rng.uniform(-1.5, 1.5)));
      loss = t.mul(d, d);
    } else {
      const double off = (rng.uniform01() < 0.5 ? 1.0 : -1.0) * rng.uniform(0.5, 2.0);
      loss = t.abs(t.sub(y, t.constant(t.value(y) - off)));
    }
    t.zero_adjoints(0, x_end);
    t.backward(loss, x_end);

    auto check = [&](Tape::Idx idx) {
      const double base = t.value(idx);
      const double h = 1e-4;
      t.set_value(idx, base + h);
      t.forward(x_end);
      const double fp = t.value(loss);
      t.set_value(idx, base - h);
      t.forward(x_end);
      const double fm = t.value(loss);
      t.set_value(idx, base);
      t.forward(x_end);
      const double fd = (fp - fm) / (2.0 * h);
      if (std::fabs(t.adjoint(idx) - fd) > 1e-5 * std::max(1.0, std::fabs(fd))) ++net_bad;
    };
    for (int k = 0; k < 3; ++k)
      check(p0 + static_cast<Tape::Idx>(rng.index(net.params.size())));
    check(x0 + static_cast<Tape::Idx>(rng.index(x.size())));
  }

  // full-horizon unroll: fresh simulator, pid, lambda and net every draw.
  // Central differences at two scales screen out draws whose interval
  // straddles a clamp kink; those prove nothing about the tape.
  int unroll_bad = 0, clean = 0;
  Rng urng = derive_rng(kSeed, "acceptance-grad-unroll");
  const FeatureSpec feat;
  for (int draw = 0; draw < 20; ++draw) {
    const SimModel sim = random_sim(900 + draw);
    const PidCoeffs pid{urng.uniform(0.5, 2.0), urng.uniform(0.05, 0.3), 0.0, 40};
    const double lambda = urng.uniform(0.1, 0.4);
    TargetWaveform w;
    w.pip = urng.uniform(12.0, 35.0);
    Mlp net = Mlp::create({feat.feature_count(), 16, 1}, urng);
    for (double& p : net.params) p += urng.uniform(-0.2, 0.2);

    UnrollGraph graph(net.dims, feat, pid, lambda, sim, 40);
    graph.set_sim(sim);
    graph.set_targets(w);
    graph.set_policy(net.params);
    graph.forward();
    graph.zero_grad();
    graph.backward();
    std::vector<double> grad;
    graph.read_policy_grad(grad);

    auto fd_at = [&](size_t i, double h) {
      std::vector<double> pp = net.params;
      pp[i] += h;
      graph.set_policy(pp);
      const double lp = graph.forward();
      pp[i] -= 2 * h;
      graph.set_policy(pp);
      const double lm = graph.forward();
      return (lp - lm) / (2 * h);
    };
    for (int k = 0; k < 3; ++k) {
      const size_t i = urng.index(net.params.size());
      const double fd1 = fd_at(i, 1e-4);
      const double fd2 = fd_at(i, 1e-5);
      if (std::fabs(fd1 - fd2) > 1e-3 * std::max(1.0, std::fabs(fd1))) continue;
      ++clean;
      if (std::fabs(grad[i] - fd2) > 1e-4 * std::max(1.0, std::fabs(fd2))) ++unroll_bad;
    }
  }

  report(4, net_bad == 0 && unroll_bad == 0 && clean >= 40,
         "tape vs central differences: " + std::to_string(net_bad) +
             "/400 net checks off at 1e-5, " + std::to_string(unroll_bad) + "/" +
             std::to_string(clean) + " clean 40-step unroll checks off at 1e-4");
}

// ---- criterion 5: equal seeds reproduce every artifact byte for byte

void criterion_5(const fs::path& outA, const fs::path& outB) {
  std::vector<fs::path> rel;
  for (const auto& e : fs::recursive_directory_iterator(outA))
    if (e.is_regular_file()) rel.push_back(fs::relative(e.path(), outA));
  int mismatched = 0;
  for (const fs::path& r : rel)
    if (!fs::exists(outB / r) || read_text_file(outA / r) != read_text_file(outB / r))
      ++mismatched;
  size_t countB = 0;
  for (const auto& e : fs::recursive_directory_iterator(outB))
    if (e.is_regular_file()) ++countB;
  const bool pass = !rel.empty() && mismatched == 0 && countB == rel.size();
  report(5, pass,
         "two equal-seed run-all trees: " + std::to_string(rel.size() - mismatched) + "/" +
             std::to_string(rel.size()) + " files byte-identical");
}

// ---- criterion 6: the learned correction's authority is hard-limited

void criterion_6() {
  Rng rng = derive_rng(kSeed, "acceptance-bound");
  const FeatureSpec feat;
  int bad = 0;
  Policy pol;
  PolicyState st_res, st_base;
  double bound = 0.0;
  for (int draw = 0; draw < 100000; ++draw) {
    if (draw % 1000 == 0) {
      pol.pid = PidCoeffs{rng.uniform(0.0, 8.0), rng.uniform(0.0, 2.0), rng.uniform(0.0, 1.0), 40};
      pol.lambda = rng.uniform01() < 0.1 ? 0.0 : rng.uniform(0.0, 1.0);
      pol.feat = feat;
      pol.correction = Mlp::create({feat.feature_count(), 8, 1}, rng);
      for (double& p : pol.correction->params) p += rng.uniform(-4.0, 4.0);
      bound = pol.lambda * (kUMax / 2.0);
      st_res.reset();
      st_base.reset();
    }
    if (draw % 64 == 0) {
      st_res.reset();
      st_base.reset();
    }
    // occasional huge readings push tanh onto its exact saturation
    const double scale = rng.uniform01() < 0.05 ? 1e6 : 1.0;
    const double target = rng.uniform(-50.0, 150.0) * scale;
    const double p_obs = rng.uniform(-100.0, 200.0) * scale;
    const int t = static_cast<int>(rng.index(40));

    const double u_res = residual_control(st_res, pol, target, p_obs, t, 40);
    const double u_pid = pid_control(st_base.pid, pol.pid, target, p_obs);
    if (std::fabs(u_res - u_pid) > bound) ++bad;
  }
  report(6, bad == 0,
         "correction stayed within lambda*u_max/2 of the pid command on " +
             std::to_string(100000 - bad) + "/100000 draws");
}

// ---- criterion 7: plant sanity properties

void criterion_7() {
  LungParams quiet;
  quiet.noise_sigma = 0.0;

  // zero control holds the plant exactly at peep
  bool equilibrium = true;
  {
    Lung lung(quiet);
    LungState s = lung.reset();
    Rng rng(0);
    for (int t = 0; t < 100; ++t)
      if (lung.step(s, 0.0, 0.03, rng) != quiet.peep) equilibrium = false;
    for (int t = 0; t < 60; ++t)
      if (lung.step_expiratory(s, 0.03, rng) != quiet.peep) equilibrium = false;
  }

  // under any shared control sequence a stiffer lung takes no more volume
  bool monotone = true;
  Rng useq = derive_rng(kSeed, "acceptance-compliance");
  for (int trial = 0; trial < 50 && monotone; ++trial) {
    std::vector<double> us(40);
    for (double& u : us) u = useq.uniform(0.0, 100.0);
    double prev_vol = -1.0;
    for (double c : {20.0, 35.0, 50.0}) {
      LungParams p = quiet;
      p.c = c;
      Lung lung(p);
      LungState s = lung.reset();
      Rng rng(0);
      for (double u : us) lung.step(s, u, 0.03, rng);
      if (s.volume < prev_vol - 1e-9) monotone = false;
      prev_vol = s.volume;
    }
  }

  // a full expiratory phase settles every setting back near peep
  double worst_return = 0.0;
  const TimeGrid grid;
  for (double r : {5.0, 20.0, 50.0})
    for (double c : {20.0, 50.0}) {
      LungParams p = quiet;
      p.r = r;
      p.c = c;
      Lung lung(p);
      LungState s = lung.reset();
      Rng rng(0);
      double last = 0.0;
      for (int t = 0; t < grid.insp_steps; ++t) last = lung.step(s, 60.0, grid.dt, rng);
      for (int t = grid.insp_steps; t < grid.steps_per_breath; ++t)
        last = lung.step_expiratory(s, grid.dt, rng);
      worst_return = std::max(worst_return, std::fabs(last - p.peep));
    }

  report(7, equilibrium && monotone && worst_return <= 0.5,
         std::string("zero-control equilibrium ") + (equilibrium ? "exact" : "broken") +
             ", compliance monotonicity " + (monotone ? "held" : "violated") +
             " on 50 sequences, worst end-of-breath return " + fmt(worst_return) +
             " cmH2O from peep");
}

// ---- criterion 8: open-loop distance axioms

void criterion_8(const RunConfig& cfg, const fs::path& outA) {
  const LungParams lp = cfg.lung_for(cfg.settings.front());
  auto draw = [](int, Rng& rng) {
    std::vector<double> us(40);
    for (double& u : us) u = rng.uniform(0.0, 100.0);
    return us;
  };

  LungPlant a(lp, cfg.grid, true), b(lp, cfg.grid, true);
  Rng r0 = derive_rng(kSeed, "acceptance-axioms");
  const double self_dist = open_loop_distance(a, b, draw, 20, 40, r0);

  const SimModel model = load_sim_checkpoint(setting_dir(outA, cfg.settings.front()) / "sim.json");
  SimPlant learned(model);
  LungPlant oracle(lp, cfg.grid, true);
  Rng r1 = derive_rng(kSeed, "acceptance-axioms");
  Rng r2 = derive_rng(kSeed, "acceptance-axioms");
  SimPlant learned2(model);
  LungPlant oracle2(lp, cfg.grid, true);
  const double d12 = open_loop_distance(oracle, learned, draw, 20, 40, r1);
  const double d21 = open_loop_distance(learned2, oracle2, draw, 20, 40, r2);

  ConstPlant c1(5.0), c2(7.0);
  Rng r3 = derive_rng(kSeed, "acceptance-axioms");
  const double stub = open_loop_distance(c1, c2, [](int, Rng&) {
    return std::vector<double>(10, 0.0);
  }, 20, 10, r3);

  report(8, self_dist == 0.0 && d12 == d21 && stub == 20.0,
         "identical plants " + fmt(self_dist) + ", symmetry gap " + fmt(std::fabs(d12 - d21)) +
             ", constant stub pair " + fmt(stub) + " (want 0, 0, 20)");
}

}  // namespace

int main() {
  const RunConfig cfg;
  const fs::path root = fs::temp_directory_path() / "ventlab_acceptance";
  const fs::path outA = root / "runA";
  const fs::path outB = root / "runB";

  try {
    const double elapsed = run_pipeline(cfg, outA);
    criterion_1_and_2(outA, elapsed);
    criterion_3(cfg, outA);
    criterion_4();
    run_pipeline(cfg, outB);
    criterion_5(outA, outB);
    criterion_6();
    criterion_7();
    criterion_8(cfg, outA);
  } catch (const std::exception& e) {
    std::printf("[FAIL] acceptance run aborted: %s\n", e.what());
    return 1;
  }

  if (g_failures == 0) {
    std::printf("all 8 criteria passed\n");
    return 0;
  }
  std::printf("%d criteria failed\n", g_failures);
  return 1;
}
