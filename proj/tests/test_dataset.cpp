#include <catch2/catch_amalgamated.hpp>

#include "ventlab/dataset.hpp"
#include "ventlab/explore.hpp"

using namespace ventlab;

namespace {

std::vector<Episode> synthetic_episodes(int n, int len, uint64_t seed) {
  Rng rng(seed);
  std::vector<Episode> eps(n);
  for (auto& ep : eps) {
    double p = 5.0;
    for (int t = 0; t < len; ++t) {
      ep.controls.push_back(rng.uniform(0.0, 100.0));
      ep.pressures.push_back(p);
      p += rng.uniform(-0.5, 1.0);
    }
  }
  return eps;
}

}  // namespace

TEST_CASE("window counts with and without padding") {
  auto eps = synthetic_episodes(3, 40, 1);
  auto padded = build_windows(eps, 10, 10, true);
  REQUIRE(padded.windows.size() == 3 * 39);
  auto bare = build_windows(eps, 10, 10, false);
  REQUIRE(bare.windows.size() == 3 * 29);
  REQUIRE(padded.skipped_episodes == 0);

  for (const auto& w : padded.windows) {
    REQUIRE(w.controls.size() == 11);
    REQUIRE(w.pressures.size() == 11);
  }
}

TEST_CASE("short episodes are skipped and counted") {
  auto eps = synthetic_episodes(2, 40, 2);
  eps.push_back(Episode{});  // empty
  Episode tiny;
  tiny.controls = {1.0, 2.0, 3.0};
  tiny.pressures = {5.0, 5.1, 5.2};
  eps.push_back(tiny);  // long enough when padded, too short bare

  auto padded = build_windows(eps, 10, 10, true);
  REQUIRE(padded.skipped_episodes == 1);
  REQUIRE(padded.windows.size() == 2 * 39 + 2);
  auto bare = build_windows(eps, 10, 10, false);
  REQUIRE(bare.skipped_episodes == 2);
  REQUIRE(bare.windows.size() == 2 * 29);
}

TEST_CASE("padding repeats the episode's first value") {
  Episode ep;
  for (int t = 0; t < 20; ++t) {
    ep.controls.push_back(10.0 + t);
    ep.pressures.push_back(100.0 + t);
  }
  auto set = build_windows({ep}, 4, 4, true);
  const auto& w0 = set.windows.front();  // t = 0
  for (int i = 0; i < 5; ++i) {
    REQUIRE(w0.controls[i] == 10.0);
    REQUIRE(w0.pressures[i] == 100.0);
  }
  REQUIRE(w0.label == 101.0);

  const auto& w2 = set.windows[2];  // t = 2: two padded entries then 0,1,2
  REQUIRE(w2.controls[0] == 10.0);
  REQUIRE(w2.controls[1] == 10.0);
  REQUIRE(w2.controls[2] == 10.0);
  REQUIRE(w2.controls[3] == 11.0);
  REQUIRE(w2.controls[4] == 12.0);
  REQUIRE(w2.label == 103.0);
}

TEST_CASE("windows never cross episode boundaries") {
  auto eps = synthetic_episodes(2, 40, 3);
  auto set = build_windows(eps, 10, 10, true);
  for (const auto& w : set.windows) {
    const auto& ep = eps[w.episode_id];
    // every value in the window must occur in its own episode
    for (double v : w.pressures) {
      bool found = false;
      for (double pv : ep.pressures) found = found || pv == v;
      REQUIRE(found);
    }
  }
}

TEST_CASE("constant episode yields constant labels and zero deltas") {
  Episode ep;
  ep.controls.assign(40, 30.0);
  ep.pressures.assign(40, 12.5);
  auto set = build_windows({ep, ep}, 10, 10, true);
  for (const auto& w : set.windows) REQUIRE(w.label == 12.5);

  Rng rng(4);
  auto [train, val] = split_train_val(set, 0.5, rng, true);
  for (const auto& w : train.windows)
    REQUIRE_THAT(train.norm.target(w) * train.norm.label_scale + train.norm.label_mean,
                 Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("normalization round-trips to 1e-12") {
  auto eps = synthetic_episodes(10, 40, 9);
  auto set = build_windows(eps, 10, 10, true);
  Rng rng(10);
  auto [train, val] = split_train_val(set, 0.8, rng, true);
  const auto& norm = train.norm;
  for (size_t k = 0; k < train.windows.size(); k += 37) {
    const auto& w = train.windows[k];
    auto f = norm.features(w);
    // invert feature normalization
    for (size_t i = 0; i < f.size(); ++i) {
      const double back = f[i] * norm.feat_scale[i] + norm.feat_mean[i];
      const double orig = i < 11 ? w.controls[i] : w.pressures[i - 11];
      REQUIRE_THAT(back, Catch::Matchers::WithinAbs(orig, 1e-12 * std::max(1.0, std::fabs(orig))));
    }
    const double z = norm.target(w);
    REQUIRE_THAT(norm.to_pressure(z, w.pressures.back()),
                 Catch::Matchers::WithinAbs(w.label, 1e-12));
  }
}

TEST_CASE("split is at episode granularity and reproducible") {
  auto eps = synthetic_episodes(10, 40, 5);
  auto set = build_windows(eps, 10, 10, true);
  Rng rng(6);
  auto [train, val] = split_train_val(set, 0.8, rng, true);
  REQUIRE(train.windows.size() == 8 * 39);
  REQUIRE(val.windows.size() == 2 * 39);

  // no episode appears on both sides
  for (const auto& tw : train.windows)
    for (const auto& vw : val.windows) REQUIRE(tw.episode_id != vw.episode_id);

  // validation carries the training normalization
  REQUIRE(val.norm.feat_mean == train.norm.feat_mean);
  REQUIRE(val.norm.label_scale == train.norm.label_scale);

  Rng rng2(6);
  auto [train2, val2] = split_train_val(set, 0.8, rng2, true);
  REQUIRE(train2.windows.size() == train.windows.size());
  for (size_t i = 0; i < train.windows.size(); ++i)
    REQUIRE(train2.windows[i].episode_id == train.windows[i].episode_id);
}

TEST_CASE("split rejects sets it cannot divide") {
  auto eps = synthetic_episodes(1, 40, 7);
  auto set = build_windows(eps, 10, 10, true);
  Rng rng(1);
  REQUIRE_THROWS_AS(split_train_val(set, 0.8, rng, true), ConfigError);
  auto eps2 = synthetic_episodes(4, 40, 8);
  auto set2 = build_windows(eps2, 10, 10, true);
  REQUIRE_THROWS_AS(split_train_val(set2, 0.0, rng, true), ConfigError);
  REQUIRE_THROWS_AS(split_train_val(set2, 1.0, rng, true), ConfigError);
}

TEST_CASE("collected data flows into windows end to end") {
  LungParams lp;
  Lung lung(lp);
  ExploreConfig cfg;
  TimeGrid grid;
  auto suite = benchmark_suite(lp.peep, grid);
  Rng rng(100);
  auto res = collect(lung, cfg, suite, 12, grid, rng);
  auto eps = split_breath(res.traces.pressures, res.traces.controls, grid);
  REQUIRE(eps.size() == 12);
  auto set = build_windows(eps, 10, 10, true);
  REQUIRE(set.windows.size() == 12 * 39);
  Rng srng(101);
  auto [train, val] = split_train_val(set, 0.8, srng, true);
  REQUIRE(train.windows.size() == 10 * 39);
  // a sane label scale: breath-to-breath pressure deltas are O(1)
  REQUIRE(train.norm.label_scale > 1e-3);
  REQUIRE(train.norm.label_scale < 10.0);
}
