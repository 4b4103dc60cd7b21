#pragma once

// Experiment configuration: a JSON document with three sections.
//
//   campaign  protocol knobs (trials, iterations, pool, noise, fitting, seeds)
//   criteria  list of criterion names or {"kind": "QUANTILE", "s_star": ..., "band": ...}
//   problems  list of truth models; every physical parameter must be given
//
// Missing campaign keys are filled from defaults so that the resolved document
// lists every knob; it is written into the run manifest and can be fed back to
// `owal run` unchanged. Schema errors name the offending field by its dotted path.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "owal/acquisition.hpp"
#include "owal/benchmarks.hpp"
#include "owal/error.hpp"

namespace owal {

using json = nlohmann::json;

inline const json& default_campaign() {
  static const json d = json::parse(R"({
    "name": "campaign",
    "master_seed": 1,
    "n_trials": 100,
    "n_iter": 60,
    "n_init": null,
    "pool_size": 2000,
    "pool_sampling": "input",
    "surrogate_pdf": "pool",
    "budget": null,
    "truth_pdf_samples": 100000,
    "grid_points": 200,
    "box_half_width": 4.0,
    "exceedance_quantile": 0.95,
    "verify_bound": false,
    "noise": {"mode": "fixed", "variance": 0.001},
    "fit": {
      "starts": 8,
      "max_evaluations": 200,
      "lengthscale": [0.05, 10.0],
      "signal_std": [0.001, 1000.0],
      "noise_std": [0.0001, 1.0],
      "center_outputs": true
    },
    "kde": {"floor": 1e-16},
    "select": {"top_k": 10, "polish_evaluations": 50}
  })");
  return d;
}

namespace detail {

[[noreturn]] inline void schema_error(const std::string& path, const std::string& what) {
  throw format_error("config field '" + path + "': " + what);
}

inline const json& field(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) schema_error(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) schema_error(path.empty() ? key : path + "." + key, "missing required field");
  return *it;
}

inline double number(const json& obj, const std::string& key, const std::string& path) {
  const json& v = field(obj, key, path);
  if (!v.is_number()) schema_error(path + "." + key, "expected a number");
  return v.get<double>();
}

inline long integer(const json& obj, const std::string& key, const std::string& path) {
  const json& v = field(obj, key, path);
  if (!v.is_number_integer()) schema_error(path + "." + key, "expected an integer");
  return v.get<long>();
}

inline std::string text(const json& obj, const std::string& key, const std::string& path) {
  const json& v = field(obj, key, path);
  if (!v.is_string()) schema_error(path + "." + key, "expected a string");
  return v.get<std::string>();
}

inline bool boolean(const json& obj, const std::string& key, const std::string& path) {
  const json& v = field(obj, key, path);
  if (!v.is_boolean()) schema_error(path + "." + key, "expected true or false");
  return v.get<bool>();
}

inline Interval interval(const json& obj, const std::string& key, const std::string& path) {
  const json& v = field(obj, key, path);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    schema_error(path + "." + key, "expected [lo, hi]");
  return {v[0].get<double>(), v[1].get<double>()};
}

inline void only_keys(const json& obj, std::initializer_list<const char*> keys, const std::string& path) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) schema_error(path.empty() ? it.key() : path + "." + it.key(), "unknown field");
  }
}

/// Recursively fill keys missing from `target` with the values in `defaults`.
inline void merge_defaults(json& target, const json& defaults) {
  for (auto it = defaults.begin(); it != defaults.end(); ++it) {
    if (!target.contains(it.key()))
      target[it.key()] = it.value();
    else if (it.value().is_object() && target[it.key()].is_object())
      merge_defaults(target[it.key()], it.value());
  }
}

}  // namespace detail

struct NoiseConfig {
  enum class Mode { learned, fixed, zero };
  Mode mode = Mode::fixed;
  double variance = 1e-3;  // observation noise; also the GP noise in fixed mode

  static std::string mode_name(Mode m) {
    switch (m) {
      case Mode::learned: return "learned";
      case Mode::fixed: return "fixed";
      case Mode::zero: return "zero";
    }
    return "?";
  }
};

struct FitConfig {
  int starts = 8;
  int max_evaluations = 200;
  Interval lengthscale{0.05, 10.0};  // multiples of the search box width
  Interval signal_std{1e-3, 1e3};    // multiples of std(Y)
  Interval noise_std{1e-4, 1.0};     // multiples of std(Y), learned mode only
  bool center_outputs = true;
};

struct CriterionConfig {
  CriterionKind kind;
  bool s_star_from_quantile = true;  // QUANTILE: s_star taken from the reference exceedance quantile
};

struct ProblemConfig {
  std::string name;
  std::string type;  // "oscillator" or "beam"
  json params;       // the validated problem object as written in the config
  int input_dim = 0;

  BenchmarkProblem build(double box_half_width) const;
};

struct ExperimentConfig {
  std::string name = "campaign";
  std::uint64_t master_seed = 1;
  int n_trials = 100;
  int n_iter = 60;
  std::optional<int> n_init;  // default input_dim + 1
  int pool_size = 2000;
  enum class PoolSampling { input, box } pool_sampling = PoolSampling::input;
  // samples behind the surrogate output pdf: the pool's own p_x draws, or the reference inputs
  enum class SurrogatePdf { pool, reference } surrogate_pdf = SurrogatePdf::pool;
  std::optional<long> budget;  // default pool_size + top_k * polish_evaluations
  int truth_pdf_samples = 100000;
  int grid_points = 200;
  double box_half_width = 4.0;
  double exceedance_quantile = 0.95;
  bool verify_bound = false;
  NoiseConfig noise;
  FitConfig fit;
  double kde_floor = 1e-16;
  SelectOptions select;
  std::vector<CriterionConfig> criteria;
  std::vector<ProblemConfig> problems;
  json resolved;  // full document after defaults and overrides

  int init_count(const ProblemConfig& p) const { return n_init ? *n_init : p.input_dim + 1; }
  long eval_budget() const {
    return budget ? *budget : static_cast<long>(pool_size) + static_cast<long>(select.top_k) * select.polish_evaluations;
  }
};

namespace detail {

inline OscillatorSpec parse_oscillator(const json& p, const std::string& path) {
  only_keys(p, {"name", "type", "n_inputs", "damping", "horizon", "forcing", "restoring", "kl_grid", "dt_divisor"},
            path);
  OscillatorSpec s;
  s.n_inputs = static_cast<int>(integer(p, "n_inputs", path));
  s.damping = number(p, "damping", path);
  s.horizon = number(p, "horizon", path);
  const json& f = field(p, "forcing", path);
  only_keys(f, {"sigma", "length"}, path + ".forcing");
  s.forcing = {number(f, "sigma", path + ".forcing"), number(f, "length", path + ".forcing")};
  const json& r = field(p, "restoring", path);
  const std::string rp = path + ".restoring";
  const std::string kind = text(r, "kind", rp);
  if (kind == "cubic") {
    only_keys(r, {"kind", "alpha", "beta"}, rp);
    s.restoring = {RestoringForce::Kind::cubic, number(r, "alpha", rp), number(r, "beta", rp)};
  } else if (kind == "piecewise") {
    only_keys(r, {"kind", "alpha", "u1", "u2"}, rp);
    s.restoring = {RestoringForce::Kind::piecewise, number(r, "alpha", rp), 0.0, number(r, "u1", rp),
                   number(r, "u2", rp)};
  } else {
    schema_error(rp + ".kind", "expected \"cubic\" or \"piecewise\"");
  }
  s.kl_grid = static_cast<int>(integer(p, "kl_grid", path));
  s.dt_divisor = number(p, "dt_divisor", path);
  try {
    s.validate();
  } catch (const usage_error& e) {
    schema_error(path, e.what());
  }
  return s;
}

inline BeamSpec parse_beam(const json& p, const std::string& path) {
  only_keys(p, {"name", "type", "zeta", "omega0", "length", "modes_J", "kl_per_load", "horizon", "load", "kl_grid",
                "dt_divisor"},
            path);
  BeamSpec s;
  s.zeta = number(p, "zeta", path);
  s.omega0 = number(p, "omega0", path);
  // "length" may be a number or {"pi_over": k} for l = pi / k
  const json& l = field(p, "length", path);
  if (l.is_number()) {
    s.length = l.get<double>();
  } else if (l.is_object()) {
    only_keys(l, {"pi_over"}, path + ".length");
    s.length = std::numbers::pi / number(l, "pi_over", path + ".length");
  } else {
    schema_error(path + ".length", "expected a number or {\"pi_over\": k}");
  }
  s.modes_J = static_cast<int>(integer(p, "modes_J", path));
  s.kl_per_load = static_cast<int>(integer(p, "kl_per_load", path));
  s.horizon = number(p, "horizon", path);
  const json& f = field(p, "load", path);
  only_keys(f, {"sigma", "length"}, path + ".load");
  s.load = {number(f, "sigma", path + ".load"), number(f, "length", path + ".load")};
  s.kl_grid = static_cast<int>(integer(p, "kl_grid", path));
  s.dt_divisor = number(p, "dt_divisor", path);
  try {
    s.validate();
  } catch (const usage_error& e) {
    schema_error(path, e.what());
  }
  return s;
}

}  // namespace detail

inline BenchmarkProblem ProblemConfig::build(double box_half_width) const {
  if (type == "oscillator") return make_oscillator_problem(name, detail::parse_oscillator(params, name), box_half_width);
  return make_beam_problem(name, detail::parse_beam(params, name), box_half_width);
}

/// Apply "a.b.c=value" overrides. The path must already exist in the
/// resolved document; array elements are addressed by index. The value is
/// parsed as JSON when possible and kept as a string otherwise.
inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw usage_error("override '" + assignment + "' is not of the form key=value");
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json* node = &doc;
  std::stringstream ss(key);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (node->is_object()) {
      if (!node->contains(part)) throw usage_error("override key '" + key + "' does not exist in the config");
      node = &(*node)[part];
    } else if (node->is_array()) {
      std::size_t idx = 0;
      try {
        std::size_t used = 0;
        idx = std::stoul(part, &used);
        if (used != part.size()) throw std::invalid_argument(part);
      } catch (const std::exception&) {
        throw usage_error("override key '" + key + "': '" + part + "' is not an array index");
      }
      if (idx >= node->size()) throw usage_error("override key '" + key + "' indexes past the end of an array");
      node = &(*node)[idx];
    } else {
      throw usage_error("override key '" + key + "' does not exist in the config");
    }
  }
  json value = json::parse(raw, nullptr, false);
  *node = value.is_discarded() ? json(raw) : value;
}

/// Validate a resolved document (defaults already merged) and build the typed config.
inline ExperimentConfig parse_config(json doc) {
  using namespace detail;
  if (!doc.is_object()) throw format_error("config must be a JSON object");
  only_keys(doc, {"campaign", "criteria", "problems"}, "");
  if (!doc.contains("campaign")) doc["campaign"] = json::object();
  if (!doc["campaign"].is_object()) schema_error("campaign", "expected an object");
  merge_defaults(doc["campaign"], default_campaign());
  if (!doc.contains("criteria")) doc["criteria"] = json::array({"US", "IVR-IW", "IVR-LW", "B"});

  ExperimentConfig cfg;
  const json& c = doc["campaign"];
  const std::string cp = "campaign";
  only_keys(c, {"name", "master_seed", "n_trials", "n_iter", "n_init", "pool_size", "pool_sampling", "surrogate_pdf", "budget", "truth_pdf_samples",
                "grid_points", "box_half_width", "exceedance_quantile", "verify_bound", "noise", "fit", "kde", "select"},
            cp);
  cfg.name = text(c, "name", cp);
  {
    const json& s = field(c, "master_seed", cp);
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
      schema_error(cp + ".master_seed", "expected a non-negative integer");
    cfg.master_seed = s.get<std::uint64_t>();
  }
  auto positive_int = [&](const char* key, long min) {
    const long v = integer(c, key, cp);
    if (v < min) schema_error(cp + "." + key, "must be at least " + std::to_string(min));
    return static_cast<int>(v);
  };
  cfg.n_trials = positive_int("n_trials", 1);
  cfg.n_iter = positive_int("n_iter", 0);
  if (!c["n_init"].is_null()) cfg.n_init = positive_int("n_init", 2);
  cfg.pool_size = positive_int("pool_size", 1000);
  {
    const std::string ps = text(c, "pool_sampling", cp);
    if (ps == "input") cfg.pool_sampling = ExperimentConfig::PoolSampling::input;
    else if (ps == "box") cfg.pool_sampling = ExperimentConfig::PoolSampling::box;
    else schema_error(cp + ".pool_sampling", "expected \"input\" or \"box\"");
    const std::string sp = text(c, "surrogate_pdf", cp);
    if (sp == "pool") cfg.surrogate_pdf = ExperimentConfig::SurrogatePdf::pool;
    else if (sp == "reference") cfg.surrogate_pdf = ExperimentConfig::SurrogatePdf::reference;
    else schema_error(cp + ".surrogate_pdf", "expected \"pool\" or \"reference\"");
  }
  cfg.truth_pdf_samples = positive_int("truth_pdf_samples", 100);
  cfg.grid_points = positive_int("grid_points", OutputGrid::kMinPoints);
  cfg.box_half_width = number(c, "box_half_width", cp);
  if (!(cfg.box_half_width > 0.0)) schema_error(cp + ".box_half_width", "must be positive");
  cfg.exceedance_quantile = number(c, "exceedance_quantile", cp);
  if (!(cfg.exceedance_quantile > 0.0 && cfg.exceedance_quantile < 1.0))
    schema_error(cp + ".exceedance_quantile", "must lie in (0, 1)");
  cfg.verify_bound = boolean(c, "verify_bound", cp);

  const json& n = field(c, "noise", cp);
  only_keys(n, {"mode", "variance"}, cp + ".noise");
  const std::string mode = text(n, "mode", cp + ".noise");
  if (mode == "learned") cfg.noise.mode = NoiseConfig::Mode::learned;
  else if (mode == "fixed") cfg.noise.mode = NoiseConfig::Mode::fixed;
  else if (mode == "zero") cfg.noise.mode = NoiseConfig::Mode::zero;
  else schema_error(cp + ".noise.mode", "expected \"learned\", \"fixed\" or \"zero\"");
  cfg.noise.variance = number(n, "variance", cp + ".noise");
  if (!(cfg.noise.variance >= 0.0)) schema_error(cp + ".noise.variance", "must be non-negative");
  if (cfg.noise.mode == NoiseConfig::Mode::zero) cfg.noise.variance = 0.0;

  const json& f = field(c, "fit", cp);
  const std::string fp = cp + ".fit";
  only_keys(f, {"starts", "max_evaluations", "lengthscale", "signal_std", "noise_std", "center_outputs"}, fp);
  cfg.fit.starts = static_cast<int>(integer(f, "starts", fp));
  cfg.fit.max_evaluations = static_cast<int>(integer(f, "max_evaluations", fp));
  if (cfg.fit.starts < 1) schema_error(fp + ".starts", "must be at least 1");
  if (cfg.fit.max_evaluations < 1) schema_error(fp + ".max_evaluations", "must be at least 1");
  cfg.fit.lengthscale = interval(f, "lengthscale", fp);
  cfg.fit.signal_std = interval(f, "signal_std", fp);
  cfg.fit.noise_std = interval(f, "noise_std", fp);
  for (auto [iv, key] : {std::pair{cfg.fit.lengthscale, "lengthscale"}, {cfg.fit.signal_std, "signal_std"},
                         {cfg.fit.noise_std, "noise_std"}})
    if (!(iv.lo > 0.0 && iv.hi >= iv.lo && std::isfinite(iv.hi))) schema_error(fp + "." + key, "must be 0 < lo <= hi");
  cfg.fit.center_outputs = boolean(f, "center_outputs", fp);

  const json& k = field(c, "kde", cp);
  only_keys(k, {"floor"}, cp + ".kde");
  cfg.kde_floor = number(k, "floor", cp + ".kde");
  if (!(cfg.kde_floor > 0.0)) schema_error(cp + ".kde.floor", "must be positive");

  const json& s = field(c, "select", cp);
  only_keys(s, {"top_k", "polish_evaluations"}, cp + ".select");
  cfg.select.top_k = static_cast<int>(integer(s, "top_k", cp + ".select"));
  cfg.select.polish_evaluations = static_cast<int>(integer(s, "polish_evaluations", cp + ".select"));
  if (cfg.select.top_k < 1) schema_error(cp + ".select.top_k", "must be at least 1");
  if (cfg.select.polish_evaluations < 0) schema_error(cp + ".select.polish_evaluations", "must be non-negative");
  if (!c["budget"].is_null()) {
    cfg.budget = integer(c, "budget", cp);
    if (*cfg.budget < cfg.pool_size) schema_error(cp + ".budget", "must be at least pool_size");
  }

  const json& crit = doc["criteria"];
  if (!crit.is_array() || crit.empty()) schema_error("criteria", "expected a non-empty array");
  for (std::size_t i = 0; i < crit.size(); ++i) {
    const std::string ip = "criteria." + std::to_string(i);
    CriterionConfig cc;
    if (crit[i].is_string()) {
      cc.kind = CriterionKind::parse(crit[i].get<std::string>());
    } else if (crit[i].is_object()) {
      only_keys(crit[i], {"kind", "s_star", "band"}, ip);
      cc.kind = CriterionKind::parse(text(crit[i], "kind", ip));
      if (crit[i].contains("s_star") && !crit[i]["s_star"].is_null()) {
        cc.kind.s_star = number(crit[i], "s_star", ip);
        cc.s_star_from_quantile = false;
      }
      if (crit[i].contains("band") && !crit[i]["band"].is_null()) {
        cc.kind.band = number(crit[i], "band", ip);
        if (!(*cc.kind.band > 0.0)) schema_error(ip + ".band", "must be positive");
      }
    } else {
      schema_error(ip, "expected a criterion name or object");
    }
    for (const auto& prev : cfg.criteria)
      if (prev.kind.name() == cc.kind.name()) schema_error(ip, "criterion listed twice");
    cfg.criteria.push_back(cc);
  }

  if (!doc.contains("problems")) schema_error("problems", "missing required field");
  const json& probs = doc["problems"];
  if (!probs.is_array() || probs.empty()) schema_error("problems", "expected a non-empty array");
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const std::string ip = "problems." + std::to_string(i);
    ProblemConfig pc;
    pc.name = text(probs[i], "name", ip);
    pc.type = text(probs[i], "type", ip);
    pc.params = probs[i];
    if (pc.name.empty() || pc.name.find_first_of("/\\ \t") != std::string::npos)
      schema_error(ip + ".name", "must be a non-empty name without spaces or slashes");
    if (pc.type == "oscillator") pc.input_dim = parse_oscillator(probs[i], ip).n_inputs;
    else if (pc.type == "beam") pc.input_dim = parse_beam(probs[i], ip).input_dim();
    else schema_error(ip + ".type", "expected \"oscillator\" or \"beam\"");
    for (const auto& prev : cfg.problems)
      if (prev.name == pc.name) schema_error(ip + ".name", "problem name listed twice");
    cfg.problems.push_back(std::move(pc));
  }
  if (cfg.n_init)
    for (const auto& p : cfg.problems)
      if (*cfg.n_init < 2) schema_error(cp + ".n_init", "must be at least 2 for problem " + p.name);

  cfg.resolved = std::move(doc);
  return cfg;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("cannot open config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw format_error("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

/// Load, fill defaults, apply overrides, validate. Overrides are applied to
/// the defaulted document so they may target any knob, but never create keys.
inline ExperimentConfig load_config(const json& raw, const std::vector<std::string>& overrides = {}) {
  json doc = raw;
  if (!doc.is_object()) throw format_error("config must be a JSON object");
  if (!doc.contains("campaign")) doc["campaign"] = json::object();
  if (doc["campaign"].is_object()) detail::merge_defaults(doc["campaign"], default_campaign());
  if (!doc.contains("criteria")) doc["criteria"] = json::array({"US", "IVR-IW", "IVR-LW", "B"});
  for (const auto& o : overrides) apply_override(doc, o);
  return parse_config(std::move(doc));
}

inline ExperimentConfig load_config_file(const std::string& path, const std::vector<std::string>& overrides = {}) {
  return load_config(read_json_file(path), overrides);
}

}  // namespace owal
