#pragma once

// Scenario files, quench-strategy presets and the build -> project ->
// thermodynamics -> correlations pipeline.
//
// Scenario schema (YAML, schema_version 1); every key except `system` is
// optional and defaults are echoed back in outputs:
//
//   schema_version: 1
//   name: label used in provenance
//   system: single | pair | triple
//   strategy: A | B | C | D | E | custom     (presets are for triple only)
//   g: preset amplitude, or for pair the coupling used before and after
//   infinity_proxy: 20
//   epsilon: 1            omega2 / omega1 (trap quench; not for triple)
//   omega2: 1
//   couplings: {initial: [g_x, g_xy] or g_x, final: ...}
//   cutoffs: {single: 400, rel: 400, rel_entanglement: 120, three_body: 40}
//   time: {t_end: 8pi, samples: 2048, rdm_samples: 257, tau: 20pi, tau_samples: 257}
//   density: {x_min: -6, x_max: 6, points: 513}
//   spectral: {T: 200pi, window: rectangular, dt: auto, omega_min: -2, omega_max: 12, points: auto}
//   merge_tol: 1e-8
//   convergence_cutoffs: [..]       ground energy vs cutoff report
//   outputs: [echo, chi, work, bures, entropy, mean_entropy, center_density, density, spectral]
//   sweep: {parameter: g | epsilon, values: [..] or {start, stop, step}, workers: 1}

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <future>
#include <json.hpp>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qtherm/closed_forms.hpp"
#include "qtherm/correlations.hpp"
#include "qtherm/ed.hpp"
#include "qtherm/eigensystem.hpp"
#include "qtherm/errors.hpp"
#include "qtherm/thermo.hpp"
#include "qtherm/three_body.hpp"

namespace qtherm {

inline constexpr int kSchemaVersion = 1;
inline constexpr double kInfinityProxy = 20.0;

enum class SystemKind { single, pair, triple };
enum class Strategy { A, B, C, D, E, custom };

inline const char* to_string(SystemKind s) {
  switch (s) {
    case SystemKind::single: return "single";
    case SystemKind::pair: return "pair";
    case SystemKind::triple: return "triple";
  }
  return "?";
}

inline const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::A: return "A";
    case Strategy::B: return "B";
    case Strategy::C: return "C";
    case Strategy::D: return "D";
    case Strategy::E: return "E";
    case Strategy::custom: return "custom";
  }
  return "?";
}

inline const char* to_string(Window w) { return w == Window::rectangular ? "rectangular" : "cosine"; }

/// (initial, final) couplings of a strategy preset at amplitude g.
inline std::pair<CouplingPair, CouplingPair> strategy_couplings(Strategy s, double g,
                                                                double proxy = kInfinityProxy) {
  switch (s) {
    case Strategy::A: return {{0.0, 0.0}, {g, g}};
    case Strategy::B: return {{0.0, 0.0}, {0.0, g}};
    case Strategy::C: return {{0.0, 0.0}, {g, 0.0}};
    case Strategy::D: return {{0.0, proxy}, {g, proxy}};
    case Strategy::E: return {{proxy, 0.0}, {proxy, g}};
    case Strategy::custom: break;
  }
  throw ValidationError("strategy_couplings: custom strategy has no preset");
}

struct Cutoffs {
  int single = 400;
  int rel = kDefaultRelCutoff;
  int rel_entanglement = kDefaultEntanglementRelCutoff;
  int three_body = kDefaultThreeBodyCutoff;
};

struct TimeSettings {
  double t_end = 8.0 * std::numbers::pi;
  std::size_t samples = 2048;
  std::size_t rdm_samples = 257;  ///< grid for entropy and density series
  double tau = 20.0 * std::numbers::pi;
  std::size_t tau_samples = 257;
};

struct DensitySettings {
  double x_min = -6.0;
  double x_max = 6.0;
  std::size_t points = 513;
};

struct SpectralSettings {
  double T = 200.0 * std::numbers::pi;
  Window window = Window::rectangular;
  double dt = 0.0;  ///< 0 = chosen from the bandwidth
  double omega_min = -2.0;
  double omega_max = 12.0;
  std::size_t points = 0;  ///< 0 = eight points per resolution bin
};

struct SweepSettings {
  std::string parameter;  ///< "g" or "epsilon"; empty = no sweep
  std::vector<double> values;
  int workers = 1;
};

inline const std::vector<std::string>& known_outputs() {
  static const std::vector<std::string> v{"echo",        "chi",           "work",    "bures",   "entropy",
                                          "mean_entropy", "center_density", "density", "spectral"};
  return v;
}

struct QuenchProtocol {
  int schema_version = kSchemaVersion;
  std::string name = "scenario";
  SystemKind system = SystemKind::single;
  Strategy strategy = Strategy::custom;
  std::optional<double> g;
  double infinity_proxy = kInfinityProxy;
  TrapQuench trap{};
  CouplingPair couplings_initial{};
  CouplingPair couplings_final{};
  Cutoffs cutoffs{};
  TimeSettings time{};
  DensitySettings density{};
  SpectralSettings spectral{};
  double merge_tol = kDefaultMergeTol;
  std::vector<int> convergence_cutoffs;
  std::set<std::string> outputs{"echo", "work", "bures"};
  SweepSettings sweep{};

  [[nodiscard]] bool wants(const std::string& o) const { return outputs.count(o) > 0; }
};

/// Re-derive couplings from the strategy and g (after edits by sweeps or
/// overrides); custom protocols keep their explicit couplings.
inline void resolve_couplings(QuenchProtocol& p) {
  if (p.strategy != Strategy::custom) {
    std::tie(p.couplings_initial, p.couplings_final) = strategy_couplings(p.strategy, p.g.value_or(0.0), p.infinity_proxy);
  } else if (p.system == SystemKind::pair && p.g) {
    p.couplings_initial = p.couplings_final = CouplingPair{*p.g, 0.0};
  }
}

inline nlohmann::json to_json(const CouplingPair& c) { return nlohmann::json::array({c.g_x, c.g_xy}); }

/// Fully resolved protocol, as embedded in every output.
inline nlohmann::json to_json(const QuenchProtocol& p) {
  nlohmann::json j;
  j["schema_version"] = p.schema_version;
  j["name"] = p.name;
  j["system"] = to_string(p.system);
  j["strategy"] = to_string(p.strategy);
  if (p.g) j["g"] = *p.g;
  j["infinity_proxy"] = p.infinity_proxy;
  j["epsilon"] = p.trap.epsilon;
  j["omega2"] = p.trap.omega2;
  j["couplings"] = {{"initial", to_json(p.couplings_initial)}, {"final", to_json(p.couplings_final)}};
  j["cutoffs"] = {{"single", p.cutoffs.single},
                  {"rel", p.cutoffs.rel},
                  {"rel_entanglement", p.cutoffs.rel_entanglement},
                  {"three_body", p.cutoffs.three_body}};
  j["time"] = {{"t_end", p.time.t_end},
               {"samples", p.time.samples},
               {"rdm_samples", p.time.rdm_samples},
               {"tau", p.time.tau},
               {"tau_samples", p.time.tau_samples}};
  j["density"] = {{"x_min", p.density.x_min}, {"x_max", p.density.x_max}, {"points", p.density.points}};
  j["spectral"] = {{"T", p.spectral.T},
                   {"window", to_string(p.spectral.window)},
                   {"dt", p.spectral.dt},
                   {"omega_min", p.spectral.omega_min},
                   {"omega_max", p.spectral.omega_max},
                   {"points", p.spectral.points}};
  j["merge_tol"] = p.merge_tol;
  j["convergence_cutoffs"] = p.convergence_cutoffs;
  j["outputs"] = std::vector<std::string>(p.outputs.begin(), p.outputs.end());
  if (!p.sweep.parameter.empty()) {
    j["sweep"] = {{"parameter", p.sweep.parameter}, {"values", p.sweep.values}, {"workers", p.sweep.workers}};
  }
  return j;
}

namespace detail {

// Collects field-level problems so one rejection reports all of them.
class FieldErrors {
 public:
  void add(const std::string& field, const std::string& msg) { errors_.push_back(field + ": " + msg); }
  void raise_if_any() const {
    if (errors_.empty()) return;
    std::string all = "invalid scenario";
    for (const auto& e : errors_) all += "\n  " + e;
    throw ValidationError(all);
  }

 private:
  std::vector<std::string> errors_;
};

template <class T>
std::optional<T> read(const YAML::Node& node, const std::string& field, FieldErrors& errs) {
  if (!node) return std::nullopt;
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    errs.add(field, "has the wrong type");
    return std::nullopt;
  }
}

inline void check_keys(const YAML::Node& node, const std::string& where, const std::set<std::string>& allowed,
                       FieldErrors& errs) {
  if (!node.IsMap()) {
    errs.add(where.empty() ? "document" : where, "must be a mapping");
    return;
  }
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) errs.add(where.empty() ? key : where + "." + key, "unknown key");
  }
}

inline std::optional<CouplingPair> read_couplings(const YAML::Node& node, const std::string& field,
                                                  FieldErrors& errs) {
  if (!node) return std::nullopt;
  double gx = 0.0, gxy = 0.0;
  try {
    if (node.IsScalar()) {
      gx = node.as<double>();
    } else if (node.IsSequence() && (node.size() == 1 || node.size() == 2)) {
      gx = node[0].as<double>();
      if (node.size() == 2) gxy = node[1].as<double>();
    } else {
      errs.add(field, "expected g_x or [g_x, g_xy]");
      return std::nullopt;
    }
  } catch (const YAML::Exception&) {
    errs.add(field, "couplings must be numbers");
    return std::nullopt;
  }
  if (!(gx >= 0.0) || !(gxy >= 0.0) || !std::isfinite(gx) || !std::isfinite(gxy)) {
    errs.add(field, "couplings must be finite and non-negative (repulsive interactions only)");
    return std::nullopt;
  }
  return CouplingPair{gx, gxy};
}

template <class T>
void read_positive(const YAML::Node& node, const std::string& field, T& target, FieldErrors& errs) {
  if (auto v = read<T>(node, field, errs)) {
    if (!(*v > T{0})) {
      errs.add(field, "must be positive");
    } else {
      target = *v;
    }
  }
}

}  // namespace detail

inline Strategy parse_strategy(const std::string& s) {
  static const std::map<std::string, Strategy> m{{"A", Strategy::A}, {"B", Strategy::B}, {"C", Strategy::C},
                                                 {"D", Strategy::D}, {"E", Strategy::E}, {"custom", Strategy::custom}};
  auto it = m.find(s);
  if (it == m.end()) throw ValidationError("unknown strategy '" + s + "' (expected A, B, C, D, E or custom)");
  return it->second;
}

inline SystemKind parse_system(const std::string& s) {
  if (s == "single") return SystemKind::single;
  if (s == "pair") return SystemKind::pair;
  if (s == "triple") return SystemKind::triple;
  throw ValidationError("unknown system '" + s + "' (expected single, pair or triple)");
}

/// Parse and validate a scenario document; all defaults are resolved.
inline QuenchProtocol parse_scenario(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& ex) {
    throw ValidationError(std::string("scenario is not valid YAML: ") + ex.what());
  }
  detail::FieldErrors errs;
  QuenchProtocol p;
  if (!root || root.IsNull()) throw ValidationError("scenario is empty");
  detail::check_keys(root, "",
                     {"schema_version", "name", "system", "strategy", "g", "infinity_proxy", "epsilon", "omega2",
                      "couplings", "cutoffs", "time", "density", "spectral", "merge_tol", "convergence_cutoffs",
                      "outputs", "sweep"},
                     errs);
  errs.raise_if_any();

  if (auto v = detail::read<int>(root["schema_version"], "schema_version", errs)) {
    if (*v != kSchemaVersion) errs.add("schema_version", "unsupported version " + std::to_string(*v));
  }
  if (auto v = detail::read<std::string>(root["name"], "name", errs)) p.name = *v;
  if (!root["system"]) {
    errs.add("system", "is required");
  } else if (auto v = detail::read<std::string>(root["system"], "system", errs)) {
    try {
      p.system = parse_system(*v);
    } catch (const ValidationError& ex) {
      errs.add("system", ex.what());
    }
  }
  if (auto v = detail::read<std::string>(root["strategy"], "strategy", errs)) {
    try {
      p.strategy = parse_strategy(*v);
    } catch (const ValidationError& ex) {
      errs.add("strategy", ex.what());
    }
  }
  if (auto v = detail::read<double>(root["g"], "g", errs)) {
    if (!(*v >= 0.0) || !std::isfinite(*v)) {
      errs.add("g", "must be finite and non-negative (repulsive interactions only)");
    } else {
      p.g = *v;
    }
  }
  if (auto v = detail::read<double>(root["infinity_proxy"], "infinity_proxy", errs)) {
    if (!(*v > 0.0) || !std::isfinite(*v)) errs.add("infinity_proxy", "must be positive and finite");
    else p.infinity_proxy = *v;
  }
  double eps = 1.0, w2 = 1.0;
  if (auto v = detail::read<double>(root["epsilon"], "epsilon", errs)) {
    if (!(*v > 0.0) || !std::isfinite(*v)) errs.add("epsilon", "must be positive (epsilon = omega2/omega1)");
    else eps = *v;
  }
  if (auto v = detail::read<double>(root["omega2"], "omega2", errs)) {
    if (!(*v > 0.0) || !std::isfinite(*v)) errs.add("omega2", "must be positive");
    else w2 = *v;
  }
  p.trap = TrapQuench(eps, w2);

  std::optional<CouplingPair> ci, cf;
  if (const auto c = root["couplings"]) {
    detail::check_keys(c, "couplings", {"initial", "final"}, errs);
    ci = detail::read_couplings(c["initial"], "couplings.initial", errs);
    cf = detail::read_couplings(c["final"], "couplings.final", errs);
  }

  if (const auto c = root["cutoffs"]) {
    detail::check_keys(c, "cutoffs", {"single", "rel", "rel_entanglement", "three_body"}, errs);
    detail::read_positive(c["single"], "cutoffs.single", p.cutoffs.single, errs);
    detail::read_positive(c["rel"], "cutoffs.rel", p.cutoffs.rel, errs);
    detail::read_positive(c["rel_entanglement"], "cutoffs.rel_entanglement", p.cutoffs.rel_entanglement, errs);
    detail::read_positive(c["three_body"], "cutoffs.three_body", p.cutoffs.three_body, errs);
  }
  if (const auto t = root["time"]) {
    detail::check_keys(t, "time", {"t_end", "samples", "rdm_samples", "tau", "tau_samples"}, errs);
    detail::read_positive(t["t_end"], "time.t_end", p.time.t_end, errs);
    detail::read_positive(t["samples"], "time.samples", p.time.samples, errs);
    detail::read_positive(t["rdm_samples"], "time.rdm_samples", p.time.rdm_samples, errs);
    detail::read_positive(t["tau"], "time.tau", p.time.tau, errs);
    detail::read_positive(t["tau_samples"], "time.tau_samples", p.time.tau_samples, errs);
  }
  if (const auto d = root["density"]) {
    detail::check_keys(d, "density", {"x_min", "x_max", "points"}, errs);
    if (auto v = detail::read<double>(d["x_min"], "density.x_min", errs)) p.density.x_min = *v;
    if (auto v = detail::read<double>(d["x_max"], "density.x_max", errs)) p.density.x_max = *v;
    detail::read_positive(d["points"], "density.points", p.density.points, errs);
    if (!(p.density.x_max > p.density.x_min)) errs.add("density", "x_max must exceed x_min");
  }
  if (const auto s = root["spectral"]) {
    detail::check_keys(s, "spectral", {"T", "window", "dt", "omega_min", "omega_max", "points"}, errs);
    detail::read_positive(s["T"], "spectral.T", p.spectral.T, errs);
    detail::read_positive(s["dt"], "spectral.dt", p.spectral.dt, errs);
    detail::read_positive(s["points"], "spectral.points", p.spectral.points, errs);
    if (auto v = detail::read<double>(s["omega_min"], "spectral.omega_min", errs)) p.spectral.omega_min = *v;
    if (auto v = detail::read<double>(s["omega_max"], "spectral.omega_max", errs)) p.spectral.omega_max = *v;
    if (auto v = detail::read<std::string>(s["window"], "spectral.window", errs)) {
      try {
        p.spectral.window = parse_window(*v);
      } catch (const ValidationError& ex) {
        errs.add("spectral.window", ex.what());
      }
    }
    if (!(p.spectral.omega_max > p.spectral.omega_min)) errs.add("spectral", "omega_max must exceed omega_min");
  }
  if (auto v = detail::read<double>(root["merge_tol"], "merge_tol", errs)) {
    if (!(*v >= 0.0)) errs.add("merge_tol", "must be >= 0");
    else p.merge_tol = *v;
  }
  if (auto v = detail::read<std::vector<int>>(root["convergence_cutoffs"], "convergence_cutoffs", errs)) {
    for (int c : *v) {
      if (c < 2) errs.add("convergence_cutoffs", "entries must be >= 2");
    }
    p.convergence_cutoffs = *v;
  }
  if (auto v = detail::read<std::vector<std::string>>(root["outputs"], "outputs", errs)) {
    p.outputs.clear();
    for (const auto& o : *v) {
      if (std::find(known_outputs().begin(), known_outputs().end(), o) == known_outputs().end()) {
        errs.add("outputs", "unknown output '" + o + "'");
      }
      p.outputs.insert(o);
    }
  }
  if (const auto s = root["sweep"]) {
    detail::check_keys(s, "sweep", {"parameter", "values", "workers"}, errs);
    if (auto v = detail::read<std::string>(s["parameter"], "sweep.parameter", errs)) {
      if (*v != "g" && *v != "epsilon") errs.add("sweep.parameter", "must be g or epsilon");
      p.sweep.parameter = *v;
    } else {
      errs.add("sweep.parameter", "is required");
    }
    if (const auto vals = s["values"]) {
      if (vals.IsMap()) {
        detail::check_keys(vals, "sweep.values", {"start", "stop", "step"}, errs);
        const auto a = detail::read<double>(vals["start"], "sweep.values.start", errs);
        const auto b = detail::read<double>(vals["stop"], "sweep.values.stop", errs);
        const auto h = detail::read<double>(vals["step"], "sweep.values.step", errs);
        if (a && b && h && *h > 0.0 && *b >= *a) {
          const auto n = static_cast<std::size_t>(std::floor((*b - *a) / *h + 1e-9));
          for (std::size_t i = 0; i <= n; ++i) p.sweep.values.push_back(*a + *h * static_cast<double>(i));
        } else {
          errs.add("sweep.values", "range needs start <= stop and step > 0");
        }
      } else if (auto list = detail::read<std::vector<double>>(vals, "sweep.values", errs)) {
        p.sweep.values = *list;
      }
    }
    for (double v : p.sweep.values) {
      if (!std::isfinite(v)) errs.add("sweep.values", "must be finite");
    }
    if (p.sweep.values.empty()) errs.add("sweep.values", "must list at least one value");
    if (auto v = detail::read<int>(s["workers"], "sweep.workers", errs)) {
      if (*v < 1) errs.add("sweep.workers", "must be >= 1");
      else p.sweep.workers = *v;
    }
  }
  errs.raise_if_any();

  // Cross-field rules.
  if (p.strategy != Strategy::custom) {
    if (p.system != SystemKind::triple) errs.add("strategy", "presets A-E apply to system: triple");
    if (!p.g) errs.add("g", "is required with a strategy preset");
    if (ci || cf) errs.add("couplings", "must not be given together with a strategy preset");
  } else {
    switch (p.system) {
      case SystemKind::single:
        if (p.g || ci || cf) errs.add("couplings", "a single atom has no interactions");
        break;
      case SystemKind::pair:
        if (p.g && (ci || cf)) errs.add("g", "give either g or couplings for a pair, not both");
        if ((ci && ci->g_xy != 0.0) || (cf && cf->g_xy != 0.0)) errs.add("couplings", "g_xy is unused for a pair");
        break;
      case SystemKind::triple:
        if (p.g) errs.add("g", "only meaningful with a strategy preset");
        break;
    }
    if (ci) p.couplings_initial = *ci;
    if (cf) p.couplings_final = *cf;
  }
  if (p.system == SystemKind::triple && p.trap.epsilon != 1.0) {
    errs.add("epsilon", "trap quenches are supported for single and pair only");
  }
  if (p.system == SystemKind::pair && p.cutoffs.rel < 2) errs.add("cutoffs.rel", "must be >= 2");
  if (p.system == SystemKind::triple && p.cutoffs.three_body < 2) errs.add("cutoffs.three_body", "must be >= 2");
  if (p.time.samples < 2 || p.time.rdm_samples < 2 || p.time.tau_samples < 2) {
    errs.add("time", "sample counts must be >= 2");
  }
  if (p.sweep.parameter == "g" && p.system == SystemKind::single) errs.add("sweep.parameter", "a single atom has no g");
  if (p.sweep.parameter == "g" && p.system == SystemKind::triple && p.strategy == Strategy::custom) {
    errs.add("sweep.parameter", "sweeping g on a triple needs a strategy preset");
  }
  if (p.sweep.parameter == "g" && p.system == SystemKind::pair && (ci || cf)) {
    errs.add("sweep.parameter", "sweeping g on a pair needs the g shorthand instead of couplings");
  }
  if (p.sweep.parameter == "epsilon" && p.system == SystemKind::triple) {
    errs.add("sweep.parameter", "trap quenches are supported for single and pair only");
  }
  if (p.sweep.parameter == "g") {
    for (double v : p.sweep.values) {
      if (v < 0.0) errs.add("sweep.values", "g must be non-negative (repulsive interactions only)");
    }
  }
  if (p.sweep.parameter == "epsilon") {
    for (double v : p.sweep.values) {
      if (!(v > 0.0)) errs.add("sweep.values", "epsilon must be positive");
    }
  }
  errs.raise_if_any();
  resolve_couplings(p);
  return p;
}

inline QuenchProtocol load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read scenario file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

struct ConvergenceRow {
  int cutoff = 0;
  double ground_energy = 0.0;
  double delta = 0.0;  ///< relative to the run's own cutoff
};

struct ConvergenceReport {
  std::string basis;
  int cutoff = 0;
  Eigen::Index dimension = 0;
  double captured_weight = 0.0;
  double residual_norm = 0.0;
  double max_discarded_weight = 0.0;  ///< entanglement truncation of pair states
  std::vector<ConvergenceRow> energy_vs_cutoff;
  std::vector<std::string> warnings;
};

struct ResultBundle {
  QuenchProtocol protocol;
  SpectralDecomposition sd;
  double average_work = 0.0;
  double direct_average_work = 0.0;
  double free_energy_change = 0.0;
  double irreversible_work = 0.0;
  bool guard_warning = false;
  std::map<Species, double> mean_entropy;
  std::optional<TimeSeries<std::complex<double>>> chi;
  std::optional<TimeSeries<double>> echo;
  std::optional<TimeSeries<double>> bures;
  std::optional<WorkDistribution> work;
  std::map<Species, TimeSeries<double>> entropy;
  std::map<Species, TimeSeries<double>> center_density;
  std::map<Species, DensityMovie> density;
  std::optional<SpectralFunction> spectral;
  ConvergenceReport convergence;
  std::shared_ptr<const Dynamics> dynamics;
};

namespace detail {

// Re-throws with the pipeline stage and protocol parameters prepended,
// preserving the error category.
template <class F>
auto with_context(const std::string& stage, const QuenchProtocol& p, F&& fn) -> decltype(fn()) {
  auto ctx = [&](const std::exception& ex) {
    std::ostringstream msg;
    msg << "[" << stage << "; system=" << to_string(p.system) << " strategy=" << to_string(p.strategy)
        << " eps=" << p.trap.epsilon << " g_i=(" << p.couplings_initial.g_x << "," << p.couplings_initial.g_xy
        << ") g_f=(" << p.couplings_final.g_x << "," << p.couplings_final.g_xy << ")] " << ex.what();
    return msg.str();
  };
  try {
    return fn();
  } catch (const ValidationError& ex) {
    throw ValidationError(ctx(ex));
  } catch (const ConvergenceError& ex) {
    throw ConvergenceError(ctx(ex));
  } catch (const ResourceError& ex) {
    throw ResourceError(ctx(ex));
  } catch (const NumericalError& ex) {
    throw NumericalError(ctx(ex));
  }
}

inline std::vector<int> convergence_ladder(const QuenchProtocol& p, int cutoff, int minimum) {
  if (!p.convergence_cutoffs.empty()) return p.convergence_cutoffs;
  std::vector<int> v;
  if (p.system == SystemKind::triple) {
    if (cutoff - 10 >= minimum) v.push_back(cutoff - 10);
  } else {
    if (cutoff / 4 >= minimum) v.push_back(cutoff / 4);
    if (cutoff / 2 >= minimum) v.push_back(cutoff / 2);
  }
  v.push_back(cutoff);
  return v;
}

}  // namespace detail

/// Execute the full pipeline for one protocol.
inline ResultBundle run(const QuenchProtocol& p) {
  ResultBundle out;
  out.protocol = p;
  auto& conv = out.convergence;
  std::shared_ptr<Dynamics> dyn;

  detail::with_context("build+project", p, [&] {
    switch (p.system) {
      case SystemKind::single: {
        const EigenSystem ini = build_single(p.trap.epsilon, p.cutoffs.single);
        const EigenSystem fin = build_single(1.0, p.cutoffs.single);
        out.sd = project_initial(ini, fin);
        out.direct_average_work = direct_average_work(ini, fin);
        conv.basis = "single";
        conv.cutoff = p.cutoffs.single;
        conv.dimension = fin.dimension();
        conv.residual_norm = std::max(ini.residual_norm, fin.residual_norm);
        conv.energy_vs_cutoff = {{p.cutoffs.single, fin.ground_energy(), 0.0}};
        dyn = std::make_shared<SingleDynamics>(out.sd, fin);
        break;
      }
      case SystemKind::pair: {
        const EigenSystem com_i = build_single(p.trap.epsilon, p.cutoffs.single);
        const EigenSystem com_f = build_single(1.0, p.cutoffs.single);
        const EigenSystem rel_i = build_two_body_rel(p.couplings_initial.g_x, p.cutoffs.rel, p.trap.epsilon);
        const EigenSystem rel_f = build_two_body_rel(p.couplings_final.g_x, p.cutoffs.rel);
        SpectralDecomposition com_sd = project_initial(com_i, com_f);
        SpectralDecomposition rel_sd = project_initial(rel_i, rel_f);
        out.sd = tensor_product(com_sd, rel_sd);
        out.direct_average_work = direct_average_work(com_i, com_f) + direct_average_work(rel_i, rel_f);
        conv.basis = "two_body_rel x single (COM)";
        conv.cutoff = p.cutoffs.rel;
        conv.dimension = rel_f.dimension();
        conv.residual_norm = std::max({com_i.residual_norm, com_f.residual_norm, rel_i.residual_norm,
                                       rel_f.residual_norm});
        for (int c : detail::convergence_ladder(p, p.cutoffs.rel, 2)) {
          const double e = c == p.cutoffs.rel ? rel_f.ground_energy()
                                              : build_two_body_rel(p.couplings_final.g_x, c).ground_energy();
          conv.energy_vs_cutoff.push_back({c, e + com_f.ground_energy(), 0.0});
        }
        dyn = std::make_shared<PairDynamics>(std::move(com_sd), com_f, std::move(rel_sd), rel_f,
                                             p.cutoffs.rel_entanglement);
        break;
      }
      case SystemKind::triple: {
        const EigenSystem ini = build_three_body(p.couplings_initial, p.cutoffs.three_body);
        const EigenSystem fin = build_three_body(p.couplings_final, p.cutoffs.three_body);
        out.sd = project_initial(ini, fin);
        out.direct_average_work = direct_average_work(ini, fin);
        conv.basis = "three_body_symmetrized (COM-ground frame)";
        conv.cutoff = p.cutoffs.three_body;
        conv.dimension = fin.dimension();
        conv.residual_norm = std::max(ini.residual_norm, fin.residual_norm);
        for (int c : detail::convergence_ladder(p, p.cutoffs.three_body, 2)) {
          const double e = c == p.cutoffs.three_body ? fin.ground_energy()
                                                     : build_three_body(p.couplings_final, c).ground_energy();
          conv.energy_vs_cutoff.push_back({c, e, 0.0});
        }
        dyn = std::make_shared<ThreeBodyDynamics>(out.sd, fin);
        break;
      }
    }
  });
  if (!conv.energy_vs_cutoff.empty()) {
    const double ref = conv.energy_vs_cutoff.back().ground_energy;
    for (auto& row : conv.energy_vs_cutoff) row.delta = row.ground_energy - ref;
  }

  out.dynamics = dyn;
  conv.captured_weight = out.sd.captured_weight;
  const GuardedValue w = average_work(out.sd);
  out.average_work = w.value;
  out.free_energy_change = free_energy_change(out.sd);
  out.irreversible_work = out.average_work - out.free_energy_change;
  out.guard_warning = w.warning;
  if (w.warning) {
    std::ostringstream msg;
    msg << "captured weight " << out.sd.captured_weight << " below guard " << kCaptureGuard;
    conv.warnings.push_back(msg.str());
  }

  const TimeGrid grid = TimeGrid::uniform(0.0, p.time.t_end, p.time.samples);
  if (p.wants("chi") || p.wants("echo") || p.wants("bures")) {
    out.chi = characteristic_function(out.sd, grid);
    std::vector<double> le(grid.count);
    for (std::size_t k = 0; k < grid.count; ++k) le[k] = std::norm(out.chi->values[k]);
    out.echo = TimeSeries<double>(grid, std::move(le));
    if (p.wants("bures")) out.bures = bures_entropy_series(*out.echo);
  }
  if (p.wants("work")) out.work = work_distribution(out.sd, p.merge_tol);

  const TimeGrid rdm_grid = TimeGrid::uniform(0.0, p.time.t_end, p.time.rdm_samples);
  const auto species = dyn->species();
  auto track = [&](const ReducedDensityMatrix& r) {
    conv.max_discarded_weight = std::max(conv.max_discarded_weight, r.discarded_weight);
  };
  detail::with_context("correlations", p, [&] {
    for (Species s : species) {
      if (p.wants("entropy")) {
        std::vector<double> v(rdm_grid.count);
        for (std::size_t k = 0; k < rdm_grid.count; ++k) {
          const auto r = dyn->rdm(rdm_grid.time(k), s);
          track(r);
          v[k] = vne(r);
        }
        out.entropy.emplace(s, TimeSeries<double>(rdm_grid, std::move(v)));
      }
      if (p.wants("mean_entropy")) {
        const TimeGrid tg = TimeGrid::uniform(0.0, p.time.tau, p.time.tau_samples);
        std::vector<double> v(tg.count);
        for (std::size_t k = 0; k < tg.count; ++k) {
          const auto r = dyn->rdm(tg.time(k), s);
          track(r);
          v[k] = vne(r);
        }
        out.mean_entropy[s] = time_average(TimeSeries<double>(tg, std::move(v)), p.time.tau);
      }
      if (p.wants("center_density")) out.center_density.emplace(s, center_density_series(*dyn, rdm_grid, s));
      if (p.wants("density")) {
        out.density.emplace(s, density_movie(*dyn, rdm_grid, s, linspace(p.density.x_min, p.density.x_max,
                                                                           p.density.points)));
      }
    }
  });
  if (conv.max_discarded_weight > 1e-3) {
    conv.warnings.push_back("entanglement truncation discarded weight " + std::to_string(conv.max_discarded_weight));
  }

  if (p.wants("spectral")) {
    detail::with_context("spectral", p, [&] {
      const double band = out.sd.bandwidth();
      double dt = p.spectral.dt;
      if (dt == 0.0) dt = 0.5 * std::numbers::pi / std::max(band, 1.0);
      const auto n = static_cast<std::size_t>(std::ceil(p.spectral.T / dt)) + 1;
      const TimeGrid sg{0.0, p.spectral.T / static_cast<double>(n - 1), n};
      if (p.spectral.dt > 0.0 && p.spectral.dt * band >= std::numbers::pi) {
        std::ostringstream msg;
        msg << "spectral.dt " << p.spectral.dt << " aliases the bandwidth " << band << "; need dt < "
            << std::numbers::pi / band;
        throw ValidationError(msg.str());
      }
      const auto chi = characteristic_function(out.sd, sg);
      std::size_t points = p.spectral.points;
      const double resolution = 2.0 * std::numbers::pi / p.spectral.T;
      if (points == 0) {
        points = static_cast<std::size_t>(std::ceil((p.spectral.omega_max - p.spectral.omega_min) / resolution * 8)) + 1;
      }
      out.spectral = spectral_function(chi, p.spectral.window,
                                       linspace(p.spectral.omega_min, p.spectral.omega_max, points), band);
    });
  }
  return out;
}

/// Provenance lines embedded at the top of every CSV.
inline std::vector<std::string> provenance_header(const QuenchProtocol& p) {
  return {"qtherm scenario output", "protocol: " + to_json(p).dump()};
}

inline nlohmann::json summary_json(const ResultBundle& r) {
  nlohmann::json j;
  j["protocol"] = to_json(r.protocol);
  j["average_work"] = r.average_work;
  j["direct_average_work"] = r.direct_average_work;
  j["free_energy_change"] = r.free_energy_change;
  j["irreversible_work"] = r.irreversible_work;
  j["captured_weight"] = r.sd.captured_weight;
  j["e0_initial"] = r.sd.e0_initial;
  j["e0_final"] = r.sd.e0_final;
  j["guard_warning"] = r.guard_warning;
  for (const auto& [s, v] : r.mean_entropy) j["mean_entropy"][to_string(s)] = v;
  if (r.spectral) {
    j["spectral"] = {{"peak", r.spectral->peak()}, {"resolution", r.spectral->resolution}};
  }
  const auto& c = r.convergence;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : c.energy_vs_cutoff) {
    rows.push_back({{"cutoff", row.cutoff}, {"ground_energy", row.ground_energy}, {"delta", row.delta}});
  }
  j["convergence"] = {{"basis", c.basis},
                      {"cutoff", c.cutoff},
                      {"dimension", c.dimension},
                      {"captured_weight", c.captured_weight},
                      {"residual_norm", c.residual_norm},
                      {"max_discarded_weight", c.max_discarded_weight},
                      {"energy_vs_cutoff", rows},
                      {"warnings", c.warnings}};
  return j;
}

/// Write every computed output into `dir`; returns the written paths.
inline std::vector<std::string> write_outputs(const ResultBundle& r, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto header = provenance_header(r.protocol);
  std::vector<std::string> paths;
  auto path = [&](const std::string& name) {
    paths.push_back((fs::path(dir) / name).string());
    return paths.back();
  };
  if (r.chi && r.protocol.wants("chi")) write_csv(path("chi.csv"), *r.chi, "chi", header);
  if (r.echo && r.protocol.wants("echo")) write_csv(path("echo.csv"), *r.echo, "L", header);
  if (r.bures) write_csv(path("bures.csv"), *r.bures, "sigma_B", header);
  if (r.work) write_csv(path("work_distribution.csv"), *r.work, header);
  for (const auto& [s, ts] : r.entropy) write_csv(path(std::string("entropy_") + to_string(s) + ".csv"), ts, "S", header);
  for (const auto& [s, ts] : r.center_density) {
    write_csv(path(std::string("center_density_") + to_string(s) + ".csv"), ts, "rho00", header);
  }
  for (const auto& [s, m] : r.density) {
    write_density_movie(path(std::string("density_") + to_string(s) + ".csv"), m, to_json(r.protocol), header);
  }
  if (r.spectral) write_csv(path("spectral.csv"), *r.spectral, header);
  std::ofstream side(path("summary.json"));
  if (!side) throw std::runtime_error("cannot write summary.json in " + dir);
  side << summary_json(r).dump(2) << '\n';
  return paths;
}

struct SweepRow {
  double value = 0.0;
  double average_work = NAN;
  double free_energy_change = NAN;
  double irreversible_work = NAN;
  double mean_entropy = NAN;  ///< first species (X or single) time-averaged vNE
  double captured_weight = NAN;
  bool guard_warning = false;
  std::string error;
};

/// Protocol with the sweep parameter set to `value`.
inline QuenchProtocol with_parameter(QuenchProtocol p, const std::string& parameter, double value) {
  if (parameter == "g") {
    p.g = value;
  } else if (parameter == "epsilon") {
    p.trap = TrapQuench(value, p.trap.omega2);
  } else {
    throw ValidationError("unknown sweep parameter '" + parameter + "'");
  }
  p.sweep = {};
  resolve_couplings(p);
  return p;
}

/// One row per grid value; failures become error rows. Points run on up to
/// `workers` threads; rows keep grid order.
inline std::vector<SweepRow> sweep(const QuenchProtocol& tmpl, const std::string& parameter,
                                   const std::vector<double>& values, int workers = 1) {
  QuenchProtocol base = tmpl;
  base.outputs = {"mean_entropy"};
  auto point = [&base, &parameter](double v) {
    SweepRow row;
    row.value = v;
    try {
      const ResultBundle r = run(with_parameter(base, parameter, v));
      row.average_work = r.average_work;
      row.free_energy_change = r.free_energy_change;
      row.irreversible_work = r.irreversible_work;
      row.mean_entropy = r.mean_entropy.begin()->second;
      row.captured_weight = r.sd.captured_weight;
      row.guard_warning = r.guard_warning;
    } catch (const std::exception& ex) {
      row.error = ex.what();
    }
    return row;
  };
  if (base.system == SystemKind::triple) three_body_basis(base.cutoffs.three_body);
  std::vector<SweepRow> rows(values.size());
  const std::size_t stride = static_cast<std::size_t>(std::max(1, workers));
  for (std::size_t start = 0; start < values.size(); start += stride) {
    std::vector<std::future<SweepRow>> batch;
    for (std::size_t i = start; i < std::min(values.size(), start + stride); ++i) {
      batch.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred, point, values[i]));
    }
    for (std::size_t i = 0; i < batch.size(); ++i) rows[start + i] = batch[i].get();
  }
  return rows;
}

inline void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows, const std::string& parameter,
                            const std::vector<std::string>& header = {}) {
  auto out = open_csv(path);
  write_comment_header(out, header);
  out << parameter << ",average_work,free_energy_change,irreversible_work,mean_entropy,captured_weight,guard_warning,error\n";
  for (const auto& r : rows) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), '\n', ' ');
    std::replace(err.begin(), err.end(), ',', ';');
    out << r.value << ',' << r.average_work << ',' << r.free_energy_change << ',' << r.irreversible_work << ','
        << r.mean_entropy << ',' << r.captured_weight << ',' << (r.guard_warning ? 1 : 0) << ',' << err << '\n';
  }
}

inline void write_spectrum_csv(const std::string& path, const std::vector<SpectrumRow>& rows,
                               const std::vector<std::string>& header = {}) {
  auto out = open_csv(path);
  write_comment_header(out, header);
  std::size_t levels = 0;
  for (const auto& r : rows) levels = std::max(levels, r.energies.size());
  out << "g";
  for (std::size_t k = 0; k < levels; ++k) out << ",E" << k;
  out << ",error\n";
  for (const auto& r : rows) {
    out << r.g;
    for (std::size_t k = 0; k < levels; ++k) {
      out << ',';
      if (k < r.energies.size()) out << r.energies[k];
    }
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    out << ',' << err << '\n';
  }
}

}  // namespace qtherm
