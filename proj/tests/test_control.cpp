#include <catch2/catch_amalgamated.hpp>

#include "ventlab/control.hpp"
#include "ventlab/lung.hpp"

using namespace ventlab;

TEST_CASE("pure proportional term") {
  PidCoeffs c{0.5, 0.0, 0.0, 40};
  PidState st;
  REQUIRE_THAT(pid_control(st, c, 10.0, 5.0), Catch::Matchers::WithinAbs(2.5, 1e-15));
}

TEST_CASE("all three terms over a short error sequence") {
  // target 10, observations 9, 8, 9.5 -> errors 1, 2, 0.5
  PidCoeffs c{0.1, 0.2, 0.3, 40};
  PidState st;
  REQUIRE_THAT(pid_control(st, c, 10.0, 9.0), Catch::Matchers::WithinAbs(0.3, 1e-12));
  REQUIRE_THAT(pid_control(st, c, 10.0, 8.0), Catch::Matchers::WithinAbs(1.1, 1e-12));
  REQUIRE_THAT(pid_control(st, c, 10.0, 9.5), Catch::Matchers::WithinAbs(0.3, 1e-12));
}

TEST_CASE("integral window evicts the oldest error") {
  PidCoeffs c{0.0, 1.0, 0.0, 2};
  PidState st;
  REQUIRE_THAT(pid_control(st, c, 1.0, 0.0), Catch::Matchers::WithinAbs(1.0, 1e-15));
  REQUIRE_THAT(pid_control(st, c, 2.0, 0.0), Catch::Matchers::WithinAbs(3.0, 1e-15));
  REQUIRE_THAT(pid_control(st, c, 3.0, 0.0), Catch::Matchers::WithinAbs(5.0, 1e-15));
}

TEST_CASE("pid output saturates at the valve limits") {
  PidCoeffs c{100.0, 0.0, 0.0, 40};
  PidState st;
  REQUIRE(pid_control(st, c, 35.0, 5.0) == kUMax);
  REQUIRE(pid_control(st, c, 5.0, 35.0) == 0.0);
  st.reset();
  REQUIRE(st.errors.empty());
  REQUIRE_FALSE(st.has_prev);
}

TEST_CASE("feature vector layout and padding") {
  FeatureSpec spec;
  spec.h_f = 2;
  FeatureState st;
  // breath start: observed peep, target peep -> everything neutral
  auto f0 = assemble_features(st, spec, 5.0, 5.0, 0, 40);
  REQUIRE(f0.size() == 6);
  for (double v : f0) REQUIRE(v == 0.0);

  // next step: target 8, observed 6
  auto f1 = assemble_features(st, spec, 8.0, 6.0, 1, 40);
  REQUIRE_THAT(f1[0], Catch::Matchers::WithinAbs(0.0, 1e-15));        // err at t=0
  REQUIRE_THAT(f1[1], Catch::Matchers::WithinAbs(0.2, 1e-15));        // (8-6)/10
  REQUIRE_THAT(f1[2], Catch::Matchers::WithinAbs(0.0, 1e-15));        // p at t=0
  REQUIRE_THAT(f1[3], Catch::Matchers::WithinAbs(1.0 / 30.0, 1e-15)); // (6-5)/30
  REQUIRE_THAT(f1[4], Catch::Matchers::WithinAbs(0.1, 1e-15));        // (8-5)/30
  REQUIRE_THAT(f1[5], Catch::Matchers::WithinAbs(0.025, 1e-15));      // 1/40

  // padding uses the first observed pressure, not zero
  FeatureState st2;
  auto g0 = assemble_features(st2, spec, 20.0, 11.0, 0, 40);
  REQUIRE_THAT(g0[2], Catch::Matchers::WithinAbs(0.2, 1e-15));  // (11-5)/30 pad
  REQUIRE_THAT(g0[3], Catch::Matchers::WithinAbs(0.2, 1e-15));
}

TEST_CASE("zeroed correction net leaves pid untouched") {
  Rng rng(3);
  Policy p;
  p.correction = Mlp::create({p.feat.feature_count(), 32, 32, 1}, rng);
  p.correction->zero_output_layer();
  p.validate();

  Policy pid_only;
  PolicyState s1, s2;
  for (int t = 0; t < 40; ++t) {
    double obs = 5.0 + 0.3 * t;
    double a = residual_control(s1, p, 20.0, obs, t, 40);
    double b = residual_control(s2, pid_only, 20.0, obs, t, 40);
    REQUIRE(a == b);
  }
}

TEST_CASE("lambda zero disables any correction exactly") {
  Rng rng(4);
  Policy p;
  p.lambda = 0.0;
  p.correction = Mlp::create({p.feat.feature_count(), 32, 32, 1}, rng);

  Policy pid_only;
  PolicyState s1, s2;
  for (int t = 0; t < 40; ++t) {
    double obs = 4.0 + 0.5 * t;
    REQUIRE(residual_control(s1, p, 25.0, obs, t, 40) ==
            residual_control(s2, pid_only, 25.0, obs, t, 40));
  }
}

TEST_CASE("correction authority is hard-limited by lambda") {
  // Property: over many random nets and observations, the issued control
  // stays between the pid command corrected maximally down and maximally up.
  Rng rng(99);
  const double lambdas[] = {0.05, 0.2, 0.5};
  int checked = 0;
  for (int net_draw = 0; net_draw < 10; ++net_draw) {
    Policy p;
    p.lambda = lambdas[net_draw % 3];
    p.correction = Mlp::create({p.feat.feature_count(), 16, 1}, rng);
    // inflate weights so tanh saturates often and the clamp edges get hit
    for (double& w : p.correction->params) w *= 30.0;
    const double bound = p.lambda * (kUMax / 2.0);

    PolicyState srun, spid;
    for (int step = 0; step < 10000; ++step) {
      const int t = step % 40;
      if (t == 0) {
        srun.reset();
        spid.reset();
      }
      const double target = rng.uniform(5.0, 35.0);
      const double obs = rng.uniform(0.0, 45.0);
      const double u = residual_control(srun, p, target, obs, t, 40);
      const double u_pid = pid_control(spid.pid, p.pid, target, obs);
      const double u_hi = std::clamp(u_pid + bound, 0.0, kUMax);
      const double u_lo = std::clamp(u_pid - bound, 0.0, kUMax);
      REQUIRE(u >= u_lo);
      REQUIRE(u <= u_hi);
      REQUIRE(std::fabs(u - u_pid) <= bound);
      ++checked;
    }
  }
  REQUIRE(checked == 100000);
}

TEST_CASE("breath controller resets per breath and tracks on the plant") {
  LungParams lp;
  lp.noise_sigma = 0.0;
  Lung lung(lp);
  TimeGrid grid;
  TargetWaveform w{20.0, 5.0, 5, grid};
  Policy p;
  p.pid = PidCoeffs{8.0, 2.0, 0.0, 40};
  Rng rng(1);
  Rollout r = rollout(lung, make_breath_controller(p, w), grid, 3, rng);

  // after the rise, pressure should sit near pip in every breath
  for (int b = 0; b < 3; ++b) {
    double worst = 0.0;
    for (int t = 20; t < 40; ++t)
      worst = std::max(worst,
                       std::fabs(r.pressures.values[b * 100 + t] - 20.0));
    REQUIRE(worst < 2.5);
  }
  // and decay to peep by the end of expiration
  REQUIRE_THAT(r.pressures.values[199], Catch::Matchers::WithinAbs(5.0, 0.5));
}

TEST_CASE("policy validation catches mismatched nets") {
  Rng rng(8);
  Policy p;
  p.correction = Mlp::create({7, 4, 1}, rng);  // wrong input width
  REQUIRE_THROWS_AS(p.validate(), ConfigError);
  p.correction = Mlp::create({p.feat.feature_count(), 4, 2}, rng);
  REQUIRE_THROWS_AS(p.validate(), ConfigError);
  p.correction.reset();
  p.lambda = -0.1;
  REQUIRE_THROWS_AS(p.validate(), ConfigError);
}
