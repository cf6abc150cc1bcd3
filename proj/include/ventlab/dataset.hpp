#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "ventlab/core.hpp"

namespace ventlab {

// One supervised sample: the last H_c+1 controls and H_p+1 pressures
// (oldest first, current value last) with the next pressure as label.
struct HistoryWindow {
  std::vector<double> controls;
  std::vector<double> pressures;
  double label = 0.0;  // raw next-step pressure
  int episode_id = 0;
};

// Feature standardization plus the label transform. In delta mode the model
// predicts p_{t+1} - p_t; either way labels are shifted and scaled to unit
// variance on the training split.
struct Normalization {
  std::vector<double> feat_mean, feat_scale;
  double label_mean = 0.0;
  double label_scale = 1.0;
  bool delta = true;

  // controls then pressures, oldest first
  std::vector<double> features(const HistoryWindow& w) const {
    std::vector<double> f;
    f.reserve(w.controls.size() + w.pressures.size());
    f.insert(f.end(), w.controls.begin(), w.controls.end());
    f.insert(f.end(), w.pressures.begin(), w.pressures.end());
    if (f.size() != feat_mean.size()) throw ConfigError("Normalization: window size mismatch");
    for (size_t i = 0; i < f.size(); ++i) f[i] = (f[i] - feat_mean[i]) / feat_scale[i];
    return f;
  }

  double target(const HistoryWindow& w) const {
    const double raw = delta ? w.label - w.pressures.back() : w.label;
    return (raw - label_mean) / label_scale;
  }

  // inverse of target(): model output back to absolute pressure
  double to_pressure(double model_out, double last_p) const {
    const double raw = label_mean + label_scale * model_out;
    return delta ? last_p + raw : raw;
  }
};

struct RegressionSet {
  std::vector<HistoryWindow> windows;
  Normalization norm;
  int h_c = 10;
  int h_p = 10;
  int skipped_episodes = 0;
};

// Slides windows over each episode independently. With padding, every t in
// [0, len-2] yields a window, histories extended left with the episode's
// first value; without it, only t >= max(H_c, H_p) qualify. Episodes too
// short for a single window are counted and dropped.
inline RegressionSet build_windows(const std::vector<Episode>& episodes, int h_c, int h_p,
                                   bool padded = true) {
  if (h_c < 0 || h_p < 0) throw ConfigError("build_windows: history lengths must be >= 0");
  RegressionSet set;
  set.h_c = h_c;
  set.h_p = h_p;
  const int h_max = std::max(h_c, h_p);
  for (size_t e = 0; e < episodes.size(); ++e) {
    const Episode& ep = episodes[e];
    const int len = static_cast<int>(ep.pressures.size());
    if (ep.controls.size() != ep.pressures.size())
      throw ConfigError("build_windows: episode control/pressure length mismatch");
    const int t_first = padded ? 0 : h_max;
    if (len < t_first + 2) {
      ++set.skipped_episodes;
      continue;
    }
    for (int t = t_first; t + 1 < len; ++t) {
      HistoryWindow w;
      w.episode_id = static_cast<int>(e);
      w.controls.reserve(h_c + 1);
      for (int i = t - h_c; i <= t; ++i)
        w.controls.push_back(ep.controls[std::max(i, 0)]);
      w.pressures.reserve(h_p + 1);
      for (int i = t - h_p; i <= t; ++i)
        w.pressures.push_back(ep.pressures[std::max(i, 0)]);
      w.label = ep.pressures[t + 1];
      set.windows.push_back(std::move(w));
    }
  }
  return set;
}

inline Normalization fit_normalization(const RegressionSet& train, bool delta = true) {
  if (train.windows.empty()) throw ConfigError("fit_normalization: empty training set");
  const size_t nf = train.windows.front().controls.size() + train.windows.front().pressures.size();
  Normalization norm;
  norm.delta = delta;
  norm.feat_mean.assign(nf, 0.0);
  norm.feat_scale.assign(nf, 0.0);
  std::vector<double> sq(nf, 0.0);
  double lsum = 0.0, lsq = 0.0;
  const double n = static_cast<double>(train.windows.size());
  for (const auto& w : train.windows) {
    size_t j = 0;
    for (double v : w.controls) {
      norm.feat_mean[j] += v;
      sq[j] += v * v;
      ++j;
    }
    for (double v : w.pressures) {
      norm.feat_mean[j] += v;
      sq[j] += v * v;
      ++j;
    }
    const double raw = delta ? w.label - w.pressures.back() : w.label;
    lsum += raw;
    lsq += raw * raw;
  }
  for (size_t j = 0; j < nf; ++j) {
    norm.feat_mean[j] /= n;
    const double var = std::max(0.0, sq[j] / n - norm.feat_mean[j] * norm.feat_mean[j]);
    norm.feat_scale[j] = std::max(std::sqrt(var), 1e-8);
  }
  norm.label_mean = lsum / n;
  const double lvar = std::max(0.0, lsq / n - norm.label_mean * norm.label_mean);
  norm.label_scale = std::max(std::sqrt(lvar), 1e-8);
  return norm;
}

// Shuffles whole episodes into train/validation, then fits normalization on
// the training windows only; the validation set carries those constants.
inline std::pair<RegressionSet, RegressionSet> split_train_val(const RegressionSet& set,
                                                               double train_frac, Rng& rng,
                                                               bool delta = true) {
  if (!(train_frac > 0.0 && train_frac < 1.0))
    throw ConfigError("split_train_val: train_frac must be in (0, 1)");
  std::vector<int> ids;
  for (const auto& w : set.windows)
    if (ids.empty() || ids.back() != w.episode_id) ids.push_back(w.episode_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  const int n_ep = static_cast<int>(ids.size());
  if (n_ep < 2) throw ConfigError("split_train_val: need at least two episodes");

  // Fisher-Yates on the episode ids
  for (int i = n_ep - 1; i > 0; --i)
    std::swap(ids[i], ids[static_cast<int>(rng.index(static_cast<size_t>(i) + 1))]);
  const int n_train = std::clamp(static_cast<int>(std::lround(train_frac * n_ep)), 1, n_ep - 1);
  std::vector<int> train_ids(ids.begin(), ids.begin() + n_train);
  std::sort(train_ids.begin(), train_ids.end());

  RegressionSet train, val;
  train.h_c = val.h_c = set.h_c;
  train.h_p = val.h_p = set.h_p;
  train.skipped_episodes = set.skipped_episodes;
  for (const auto& w : set.windows) {
    const bool t = std::binary_search(train_ids.begin(), train_ids.end(), w.episode_id);
    (t ? train : val).windows.push_back(w);
  }
  train.norm = fit_normalization(train, delta);
  val.norm = train.norm;
  return {std::move(train), std::move(val)};
}

}  // namespace ventlab
