#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "ventlab/bench.hpp"
#include "ventlab/policy_opt.hpp"

namespace ventlab {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

// ---- plain files

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path.string());
  out << text;
  out.flush();
  if (!out) throw ConfigError("write failed: " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const char* what) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw ConfigError(std::string(what) + ": bad number '" + std::string(s) + "'");
  return v;
}

inline void require_keys(const Json& j, std::initializer_list<std::string_view> allowed,
                         const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (std::string_view a : allowed)
      if (item.key() == a) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError(std::string(where) + ": unknown key '" + item.key() + "'");
  }
}

// ---- json forms
//
// Config-facing structs deserialize with patch semantics: absent keys keep
// the defaults the caller constructed with, unknown keys are rejected.
// Checkpoint payloads (network, normalization) require every key instead,
// so a truncated file fails loudly rather than loading defaults.

inline void to_json(Json& j, const TimeGrid& g) {
  j = Json{{"dt", g.dt}, {"steps_per_breath", g.steps_per_breath}, {"insp_steps", g.insp_steps}};
}

inline void from_json(const Json& j, TimeGrid& g) {
  require_keys(j, {"dt", "steps_per_breath", "insp_steps"}, "time grid");
  g.dt = j.value("dt", g.dt);
  g.steps_per_breath = j.value("steps_per_breath", g.steps_per_breath);
  g.insp_steps = j.value("insp_steps", g.insp_steps);
}

inline void to_json(Json& j, const LungParams& p) {
  j = Json{{"r", p.r},
           {"c", p.c},
           {"peep", p.peep},
           {"p_supply", p.p_supply},
           {"q_max", p.q_max},
           {"tau_valve", p.tau_valve},
           {"k_leak", p.k_leak},
           {"k_dump", p.k_dump},
           {"noise_sigma", p.noise_sigma}};
}

inline void from_json(const Json& j, LungParams& p) {
  require_keys(j,
               {"r", "c", "peep", "p_supply", "q_max", "tau_valve", "k_leak", "k_dump",
                "noise_sigma"},
               "lung");
  p.r = j.value("r", p.r);
  p.c = j.value("c", p.c);
  p.peep = j.value("peep", p.peep);
  p.p_supply = j.value("p_supply", p.p_supply);
  p.q_max = j.value("q_max", p.q_max);
  p.tau_valve = j.value("tau_valve", p.tau_valve);
  p.k_leak = j.value("k_leak", p.k_leak);
  p.k_dump = j.value("k_dump", p.k_dump);
  p.noise_sigma = j.value("noise_sigma", p.noise_sigma);
}

inline void to_json(Json& j, const PidCoeffs& p) {
  j = Json{{"alpha", p.alpha}, {"beta", p.beta}, {"gamma", p.gamma}, {"window", p.window}};
}

inline void from_json(const Json& j, PidCoeffs& p) {
  require_keys(j, {"alpha", "beta", "gamma", "window"}, "pid");
  p.alpha = j.value("alpha", p.alpha);
  p.beta = j.value("beta", p.beta);
  p.gamma = j.value("gamma", p.gamma);
  p.window = j.value("window", p.window);
}

inline void to_json(Json& j, const FeatureSpec& f) {
  j = Json{{"h_f", f.h_f}, {"err_scale", f.err_scale}, {"p_scale", f.p_scale}, {"p_ref", f.p_ref}};
}

inline void from_json(const Json& j, FeatureSpec& f) {
  require_keys(j, {"h_f", "err_scale", "p_scale", "p_ref"}, "features");
  f.h_f = j.value("h_f", f.h_f);
  f.err_scale = j.value("err_scale", f.err_scale);
  f.p_scale = j.value("p_scale", f.p_scale);
  f.p_ref = j.value("p_ref", f.p_ref);
}

inline void to_json(Json& j, const ExploreConfig& c) {
  j = Json{{"base_pid", c.base_pid}, {"c_a_min", c.c_a_min}, {"c_a_max", c.c_a_max},
           {"t_a_min", c.t_a_min},   {"t_a_max", c.t_a_max}, {"c_b_min", c.c_b_min},
           {"c_b_max", c.c_b_max},   {"t_b_min", c.t_b_min}, {"t_b_max", c.t_b_max},
           {"p_a", c.p_a}};
}

inline void from_json(const Json& j, ExploreConfig& c) {
  require_keys(j,
               {"base_pid", "c_a_min", "c_a_max", "t_a_min", "t_a_max", "c_b_min", "c_b_max",
                "t_b_min", "t_b_max", "p_a"},
               "explore");
  c.base_pid = j.value("base_pid", c.base_pid);
  c.c_a_min = j.value("c_a_min", c.c_a_min);
  c.c_a_max = j.value("c_a_max", c.c_a_max);
  c.t_a_min = j.value("t_a_min", c.t_a_min);
  c.t_a_max = j.value("t_a_max", c.t_a_max);
  c.c_b_min = j.value("c_b_min", c.c_b_min);
  c.c_b_max = j.value("c_b_max", c.c_b_max);
  c.t_b_min = j.value("t_b_min", c.t_b_min);
  c.t_b_max = j.value("t_b_max", c.t_b_max);
  c.p_a = j.value("p_a", c.p_a);
}

inline void to_json(Json& j, const SimTrainOpts& o) {
  j = Json{{"epochs", o.epochs},
           {"lr", o.lr},
           {"batch", o.batch},
           {"hidden", o.hidden},
           {"seed", o.seed}};
}

inline void from_json(const Json& j, SimTrainOpts& o) {
  require_keys(j, {"epochs", "lr", "batch", "hidden", "seed"}, "sim training");
  o.epochs = j.value("epochs", o.epochs);
  o.lr = j.value("lr", o.lr);
  o.batch = j.value("batch", o.batch);
  o.hidden = j.value("hidden", o.hidden);
  o.seed = j.value("seed", o.seed);
}

inline void to_json(Json& j, const PolicyTrainOpts& o) {
  j = Json{{"epochs", o.epochs},         {"lr", o.lr},
           {"lambda", o.lambda},         {"hidden", o.hidden},
           {"features", o.feat},         {"val_pip_jitter", o.val_pip_jitter},
           {"seed", o.seed}};
}

inline void from_json(const Json& j, PolicyTrainOpts& o) {
  require_keys(j, {"epochs", "lr", "lambda", "hidden", "features", "val_pip_jitter", "seed"},
               "policy training");
  o.epochs = j.value("epochs", o.epochs);
  o.lr = j.value("lr", o.lr);
  o.lambda = j.value("lambda", o.lambda);
  o.hidden = j.value("hidden", o.hidden);
  o.feat = j.value("features", o.feat);
  o.val_pip_jitter = j.value("val_pip_jitter", o.val_pip_jitter);
  o.seed = j.value("seed", o.seed);
}

inline void to_json(Json& j, const GridSpec& g) {
  j = Json{{"p", g.p}, {"i", g.i}, {"d", g.d}, {"window", g.window}};
}

inline void from_json(const Json& j, GridSpec& g) {
  require_keys(j, {"p", "i", "d", "window"}, "pid grid");
  g.p = j.value("p", g.p);
  g.i = j.value("i", g.i);
  g.d = j.value("d", g.d);
  g.window = j.value("window", g.window);
}

inline void to_json(Json& j, const BenchOpts& o) {
  j = Json{{"n_breaths", o.n_breaths}, {"seed", o.seed}};
}

inline void from_json(const Json& j, BenchOpts& o) {
  require_keys(j, {"n_breaths", "seed"}, "benchmark");
  o.n_breaths = j.value("n_breaths", o.n_breaths);
  o.seed = j.value("seed", o.seed);
}

inline void to_json(Json& j, const Mlp& m) {
  j = Json{{"dims", m.dims}, {"params", m.params}};
}

inline void from_json(const Json& j, Mlp& m) {
  require_keys(j, {"dims", "params"}, "net");
  j.at("dims").get_to(m.dims);
  j.at("params").get_to(m.params);
}

inline void to_json(Json& j, const Normalization& n) {
  j = Json{{"feat_mean", n.feat_mean},
           {"feat_scale", n.feat_scale},
           {"label_mean", n.label_mean},
           {"label_scale", n.label_scale},
           {"delta", n.delta}};
}

inline void from_json(const Json& j, Normalization& n) {
  require_keys(j, {"feat_mean", "feat_scale", "label_mean", "label_scale", "delta"},
               "normalization");
  j.at("feat_mean").get_to(n.feat_mean);
  j.at("feat_scale").get_to(n.feat_scale);
  j.at("label_mean").get_to(n.label_mean);
  j.at("label_scale").get_to(n.label_scale);
  j.at("delta").get_to(n.delta);
}

inline void to_json(Json& j, const SimModel& m) {
  j = Json{{"net", m.net}, {"h_c", m.h_c}, {"h_p", m.h_p}, {"norm", m.norm}, {"boot", m.boot}};
}

inline void from_json(const Json& j, SimModel& m) {
  require_keys(j, {"net", "h_c", "h_p", "norm", "boot"}, "simulator");
  j.at("net").get_to(m.net);
  j.at("h_c").get_to(m.h_c);
  j.at("h_p").get_to(m.h_p);
  j.at("norm").get_to(m.norm);
  j.at("boot").get_to(m.boot);
}

inline void to_json(Json& j, const Policy& p) {
  j = Json{{"pid", p.pid}, {"lambda", p.lambda}, {"features", p.feat}};
  j["correction"] = p.correction ? Json(*p.correction) : Json(nullptr);
}

inline void from_json(const Json& j, Policy& p) {
  require_keys(j, {"pid", "lambda", "features", "correction"}, "policy");
  j.at("pid").get_to(p.pid);
  j.at("lambda").get_to(p.lambda);
  j.at("features").get_to(p.feat);
  const Json& c = j.at("correction");
  if (c.is_null())
    p.correction.reset();
  else
    p.correction = c.get<Mlp>();
}

inline void to_json(Json& j, const Score& s) {
  j = Json{{"overall", s.overall}, {"per_waveform", s.per_waveform}, {"n_breaths", s.n_breaths}};
}

inline void to_json(Json& j, const GridEntry& e) {
  j = Json{{"pid", e.pid}, {"overall", e.overall}, {"per_waveform", e.per_waveform}};
}

// ---- json files and checkpoints

inline std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

inline Json parse_json(const std::string& text, const char* what) {
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

inline Json load_json_file(const std::filesystem::path& path) {
  return parse_json(read_text_file(path), path.string().c_str());
}

template <class T>
inline void save_checkpoint(const std::filesystem::path& path, const char* kind, const T& value) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = kind;
  j["payload"] = value;
  write_text_file(path, dump_json(j));
}

template <class T>
inline T load_checkpoint(const std::filesystem::path& path, const char* kind) {
  const Json j = load_json_file(path);
  try {
    if (j.value("schema_version", -1) != kSchemaVersion)
      throw ConfigError(path.string() + ": unsupported schema version");
    if (j.value("kind", std::string()) != kind)
      throw ConfigError(path.string() + ": expected a '" + kind + "' checkpoint");
    return j.at("payload").get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline void save_sim_checkpoint(const std::filesystem::path& p, const SimModel& m) {
  save_checkpoint(p, "simulator", m);
}

inline SimModel load_sim_checkpoint(const std::filesystem::path& p) {
  SimModel m = load_checkpoint<SimModel>(p, "simulator");
  m.validate();
  return m;
}

inline void save_policy_checkpoint(const std::filesystem::path& p, const Policy& pol) {
  save_checkpoint(p, "policy", pol);
}

inline Policy load_policy_checkpoint(const std::filesystem::path& p) {
  Policy pol = load_checkpoint<Policy>(p, "policy");
  pol.validate();
  return pol;
}

// ---- csv traces

inline std::string trace_csv(const Rollout& ro) {
  const TimeGrid& g = ro.pressures.grid;
  if (ro.controls.values.size() != ro.pressures.values.size())
    throw ConfigError("trace_csv: control and pressure traces differ in length");
  std::string out;
  out += "# schema_version=" + std::to_string(kSchemaVersion) + "\n";
  out += "# dt=" + format_double(g.dt) + " steps_per_breath=" + std::to_string(g.steps_per_breath) +
         " insp_steps=" + std::to_string(g.insp_steps) + "\n";
  out += "t,u,p\n";
  for (size_t t = 0; t < ro.pressures.values.size(); ++t)
    out += std::to_string(t) + "," + format_double(ro.controls.values[t]) + "," +
           format_double(ro.pressures.values[t]) + "\n";
  return out;
}

inline Rollout parse_trace_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  Rollout ro;
  bool saw_schema = false, saw_grid = false, saw_header = false;
  size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream meta(line.substr(1));
      std::string tok;
      while (meta >> tok) {
        const size_t eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = tok.substr(0, eq);
        const std::string val = tok.substr(eq + 1);
        if (key == "schema_version") {
          if (val != std::to_string(kSchemaVersion))
            throw ConfigError("trace: unsupported schema version " + val);
          saw_schema = true;
        } else if (key == "dt") {
          ro.pressures.grid.dt = parse_double(val, "trace dt");
          saw_grid = true;
        } else if (key == "steps_per_breath") {
          ro.pressures.grid.steps_per_breath = static_cast<int>(parse_double(val, "trace spb"));
        } else if (key == "insp_steps") {
          ro.pressures.grid.insp_steps = static_cast<int>(parse_double(val, "trace insp"));
        }
      }
      continue;
    }
    if (!saw_header) {
      if (line != "t,u,p") throw ConfigError("trace: expected header 't,u,p', got '" + line + "'");
      saw_header = true;
      continue;
    }
    const size_t c1 = line.find(',');
    const size_t c2 = (c1 == std::string::npos) ? std::string::npos : line.find(',', c1 + 1);
    if (c2 == std::string::npos) throw ConfigError("trace: malformed row '" + line + "'");
    const size_t t = static_cast<size_t>(parse_double(line.substr(0, c1), "trace t"));
    if (t != row) throw ConfigError("trace: rows out of order");
    ro.controls.values.push_back(parse_double(line.substr(c1 + 1, c2 - c1 - 1), "trace u"));
    ro.pressures.values.push_back(parse_double(line.substr(c2 + 1), "trace p"));
    ++row;
  }
  if (!saw_schema) throw ConfigError("trace: missing schema_version");
  if (!saw_grid) throw ConfigError("trace: missing time grid metadata");
  if (!saw_header) throw ConfigError("trace: missing header");
  ro.controls.grid = ro.pressures.grid;
  ro.pressures.grid.validate();
  return ro;
}

// ---- csv curves

inline std::string curve_csv(const std::vector<double>& train, const std::vector<double>& val) {
  if (train.size() != val.size())
    throw ConfigError("curve_csv: train and validation curves differ in length");
  std::string out;
  out += "# schema_version=" + std::to_string(kSchemaVersion) + "\n";
  out += "epoch,train,val\n";
  for (size_t e = 0; e < train.size(); ++e)
    out += std::to_string(e) + "," + format_double(train[e]) + "," + format_double(val[e]) + "\n";
  return out;
}

}  // namespace ventlab
