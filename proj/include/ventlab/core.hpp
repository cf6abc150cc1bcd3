#pragma once

#include <optional>
#include <vector>

#include "ventlab/common.hpp"
#include "ventlab/waveform.hpp"

namespace ventlab {

// Valve commands over time, percent open in [0, kUMax].
struct ControlTrace {
  std::vector<double> values;
  TimeGrid grid;

  void validate() const {
    grid.validate();
    for (double u : values) {
      require_finite(u, "control");
      if (u < 0.0 || u > kUMax) throw ConfigError("ControlTrace: value outside [0, u_max]");
    }
  }
};

// Airway pressure samples in cmH2O.
struct PressureTrace {
  std::vector<double> values;
  TimeGrid grid;

  void validate() const {
    grid.validate();
    for (double p : values) require_finite(p, "pressure");
  }
};

// One inspiratory phase. Index t holds the pressure the controller observed
// at step t and the control it issued; the response to controls[t] is
// pressures[t+1].
struct Episode {
  std::vector<double> controls;
  std::vector<double> pressures;
  std::optional<TargetWaveform> target;
};

// Cut a recorded run into per-breath inspiratory episodes. Episode b holds
// the first insp_steps samples of breath b; expiratory samples are dropped.
inline std::vector<Episode> split_breath(const PressureTrace& pressures,
                                         const ControlTrace& controls,
                                         const TimeGrid& grid) {
  grid.validate();
  const size_t n = pressures.values.size();
  if (controls.values.size() != n)
    throw ConfigError("split_breath: pressure and control traces differ in length");
  const size_t spb = static_cast<size_t>(grid.steps_per_breath);
  if (spb == 0 || n % spb != 0)
    throw ConfigError("split_breath: trace length is not a whole number of breaths");

  std::vector<Episode> episodes;
  episodes.reserve(n / spb);
  for (size_t b = 0; b < n / spb; ++b) {
    Episode ep;
    const size_t base = b * spb;
    ep.controls.assign(controls.values.begin() + base,
                       controls.values.begin() + base + grid.insp_steps);
    ep.pressures.assign(pressures.values.begin() + base,
                        pressures.values.begin() + base + grid.insp_steps);
    episodes.push_back(std::move(ep));
  }
  return episodes;
}

}  // namespace ventlab
