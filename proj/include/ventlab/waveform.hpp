#pragma once

#include <vector>

#include "ventlab/common.hpp"

namespace ventlab {

// Target pressure for one breath: linear ramp peep->pip over rise_steps,
// hold at pip until the end of inspiration, peep for the expiratory rest.
struct TargetWaveform {
  double pip = 20.0;   // cmH2O
  double peep = 5.0;   // cmH2O
  int rise_steps = 5;
  TimeGrid grid;

  void validate() const {
    grid.validate();
    if (!(pip > peep)) throw ConfigError("TargetWaveform: pip must exceed peep");
    if (rise_steps <= 0 || rise_steps > grid.insp_steps)
      throw ConfigError("TargetWaveform: need 0 < rise_steps <= insp_steps");
  }

  double at(int t) const {
    if (t < 0 || t >= grid.steps_per_breath)
      throw ConfigError("TargetWaveform: step index out of range");
    if (t >= grid.insp_steps) return peep;
    if (t >= rise_steps) return pip;
    return peep + (pip - peep) * static_cast<double>(t) / rise_steps;
  }
};

inline const std::vector<double>& default_suite_pips() {
  static const std::vector<double> pips = {10.0, 15.0, 20.0, 25.0, 30.0, 35.0};
  return pips;
}

inline std::vector<TargetWaveform> benchmark_suite(
    double peep, const TimeGrid& grid, int rise_steps = 5,
    const std::vector<double>& pips = default_suite_pips()) {
  std::vector<TargetWaveform> suite;
  suite.reserve(pips.size());
  for (double pip : pips) {
    TargetWaveform w{pip, peep, rise_steps, grid};
    w.validate();
    suite.push_back(w);
  }
  return suite;
}

}  // namespace ventlab
