// Command line front end for the ventilator pipeline stages.
#include <chrono>
#include <cstdio>
#include <string>

#include "CLI11.hpp"

#include "ventlab/pipeline.hpp"

using namespace ventlab;

namespace {

double secs_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string pid_str(const Json& p) {
  return "P=" + format_double(p.at("alpha").get<double>()) +
         " I=" + format_double(p.at("beta").get<double>()) +
         " D=" + format_double(p.at("gamma").get<double>());
}

void print_grid(const Json& s) {
  for (const auto& [name, row] : s.items())
    std::printf("  %-8s winner %s  score %.4f\n", name.c_str(),
                pid_str(row.at("winner")).c_str(), row.at("overall").get<double>());
}

void print_collect(const Json& s) {
  for (const auto& [name, row] : s.items())
    std::printf("  %-8s %d breaths (boundary %d, triangular %d), base pid from %s\n",
                name.c_str(), row.at("breaths").get<int>(),
                row.at("boundary_breaths").get<int>(), row.at("triangular_breaths").get<int>(),
                row.at("base_pid_source").get<std::string>().c_str());
}

void print_train_sim(const Json& s) {
  for (const auto& [name, row] : s.items())
    std::printf("  %-8s val mse %.5f (epoch %d, %zu train windows)\n", name.c_str(),
                row.at("val_mse").get<double>(), row.at("best_epoch").get<int>(),
                row.at("train_windows").get<size_t>());
}

void print_eval_sim(const Json& s) {
  for (const auto& [name, row] : s.items())
    std::printf("  %-8s per-step open-loop gap %.4f\n", name.c_str(),
                row.at("per_step_gap").get<double>());
}

void print_train_ctrl(const Json& s) {
  for (const auto& [name, row] : s.items())
    std::printf("  %-8s lambda %.2f  val %.4f\n", name.c_str(),
                row.at("chosen_lambda").get<double>(), row.at("chosen_val").get<double>());
}

void print_score(const Json& board) {
  for (const Json& row : board.at("settings"))
    std::printf("  %-8s pid %.4f  residual %.4f  margin %+.4f\n",
                row.at("name").get<std::string>().c_str(), row.at("pid_overall").get<double>(),
                row.at("residual_overall").get<double>(), row.at("margin").get<double>());
  std::printf("  residual beats its pid on %d of %d settings\n", board.at("wins").get<int>(),
              board.at("n_settings").get<int>());
  std::printf("  robust policy mean margin %+.4f\n",
              board.at("robust").at("mean_margin").get<double>());
}

void print_compare(const Json& rep) {
  for (const Json& row : rep.at("per_setting"))
    std::printf("  %-8s margin %+.4f (%.1f%% better than pid)\n",
                row.at("name").get<std::string>().c_str(), row.at("margin").get<double>(),
                row.at("relative_improvement_pct").get<double>());
  std::printf("  wins %d/%d, robust mean margin %+.4f\n", rep.at("wins").get<int>(),
              rep.at("n_settings").get<int>(),
              rep.at("robust").at("mean_margin").get<double>());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale ventilator control pipeline"};
  app.fallthrough();
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  uint64_t seed = 0;
  app.add_option("--config", config_path, "json run config (library defaults when omitted)");
  app.add_option("--seed", seed, "master seed for every random stream");
  app.add_option("--out", out_dir, "artifact directory");

  app.add_subcommand("grid-pid", "exhaustive pid baseline search per plant setting");
  app.add_subcommand("collect", "record exploration data around the baseline pid");
  app.add_subcommand("train-sim", "fit the learned simulator per setting");
  app.add_subcommand("eval-sim", "open-loop gap between simulator and plant");
  app.add_subcommand("train-ctrl", "train residual policies through the simulators");
  app.add_subcommand("score", "score pid and residual policies on the plant");
  app.add_subcommand("compare", "aggregate report with example traces");
  app.add_subcommand("run-all", "every stage in order");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_run_config(config_path);
    cfg.validate();
    const Path out = out_dir;

    struct Stage {
      const char* name;
      Json (*run)(const RunConfig&, uint64_t, const Path&);
      void (*print)(const Json&);
    };
    const Stage stages[] = {
        {"grid-pid", stage_grid_pid, print_grid},
        {"collect", stage_collect, print_collect},
        {"train-sim", stage_train_sim, print_train_sim},
        {"eval-sim", stage_eval_sim, print_eval_sim},
        {"train-ctrl", stage_train_ctrl, print_train_ctrl},
        {"score", stage_score, print_score},
        {"compare", stage_compare, print_compare},
    };

    const bool all = app.got_subcommand("run-all");
    if (all) write_run_manifest(cfg, seed, out);
    const auto t0 = std::chrono::steady_clock::now();
    for (const Stage& st : stages) {
      if (!all && !app.got_subcommand(st.name)) continue;
      const auto s0 = std::chrono::steady_clock::now();
      const Json summary = st.run(cfg, seed, out);
      std::printf("%s (%.1fs)\n", st.name, secs_since(s0));
      st.print(summary);
      std::fflush(stdout);
    }
    if (all) std::printf("run-all finished in %.1fs\n", secs_since(t0));
    return 0;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const Json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const NumericFault& e) {
    std::fprintf(stderr, "numeric fault: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
