#pragma once

// Flat `key = value` experiment configuration with dotted section prefixes.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fhn/cocycle.hpp"
#include "fhn/diagnostics.hpp"
#include "fhn/numeric.hpp"
#include "fhn/spatial.hpp"
#include "fhn/system.hpp"

namespace fhn {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Validation failure tagged with the violated condition.
class ValidationError : public ConfigError {
 public:
  ValidationError(std::string condition, const std::string& what)
      : ConfigError(condition + ": " + what), condition_(std::move(condition)) {}
  const std::string& condition() const { return condition_; }

 private:
  std::string condition_;
};

struct ExperimentConfig {
  std::uint64_t seed = 42;
  Grid grid;
  ModelParams model;

  double dt = 1e-3;
  double blowup_threshold = 1e8;
  double stiffness_limit = 0.5;
  double burn_in = 0.0;

  FamilySpec family;
  double growth_fraction = 0.4;  // gamma / delta

  std::vector<double> t_schedule{8.0, 16.0, 32.0};
  std::vector<double> attractor_schedule{4.0, 8.0, 16.0, 32.0};
  double M_min = 0.1;
  double M_max = 100.0;
  int M_count = 40;

  double tau = 0.0;
  double t_simulate = 32.0;
  double energy_t = 4.0;
  std::int64_t stride = 10;
  double radius_horizon = 50.0;
  double noise_horizon = 50.0;
  double tempered_t = 50.0;

  CalibrationDesign calibration;
  double safety = 1.1;

  double energy_abs = 1e-8;
  double energy_rel = 1e-2;
  double eta = 1e-3;
  double defect_tolerance = 1e-3;
  std::size_t structure_samples = 4096;

  std::string output_dir = "out";

  SolverSpec solver() const {
    SolverSpec s;
    s.dt = dt;
    s.grid = grid;
    s.ou_burn_in = burn_in;
    s.stiffness_limit = stiffness_limit;
    s.blowup_threshold = blowup_threshold;
    return s;
  }
  ModelSpec model_spec() const { return build_model(grid, model); }
  FamilySpec tempered_family(double delta) const {
    FamilySpec f = family;
    f.growth_rate = growth_fraction * delta;
    return f;
  }
  std::vector<double> M_schedule() const {
    std::vector<double> out;
    for (int i = 0; i < M_count; ++i) {
      out.push_back(M_count == 1 ? M_min : M_min * std::pow(M_max / M_min, static_cast<double>(i) / (M_count - 1)));
    }
    return out;
  }
  WienerPath path() const { return WienerPath{seed, dt, 0}; }
  CalibrationPolicy calibration_policy() const {
    CalibrationPolicy p;
    p.safety = safety;
    return p;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_double(item));
  }
  return out;
}

inline std::string join(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + format_double(xs[i]);
  return out;
}

inline std::uint64_t parse_u64(const std::string& text) {
  std::uint64_t v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw std::invalid_argument("not an unsigned integer: '" + text + "'");
  }
  return v;
}

inline std::int64_t parse_int(const std::string& text) {
  const double d = parse_double(text);
  if (d != std::floor(d)) throw std::invalid_argument("not an integer: '" + text + "'");
  return static_cast<std::int64_t>(d);
}

struct Binding {
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

inline Binding bind(double& x) {
  return {[&x](const std::string& s) { x = parse_double(s); }, [&x] { return format_double(x); }};
}
inline Binding bind(std::string& x) {
  return {[&x](const std::string& s) { x = s; }, [&x] { return x; }};
}
inline Binding bind(std::uint64_t& x) {
  return {[&x](const std::string& s) { x = parse_u64(s); }, [&x] { return std::to_string(x); }};
}
inline Binding bind(std::int64_t& x) {
  return {[&x](const std::string& s) { x = parse_int(s); }, [&x] { return std::to_string(x); }};
}
inline Binding bind(int& x) {
  return {[&x](const std::string& s) { x = static_cast<int>(parse_int(s)); }, [&x] { return std::to_string(x); }};
}
inline Binding bind_count(std::size_t& x) {
  return {[&x](const std::string& s) {
            const auto v = parse_int(s);
            if (v < 0) throw std::invalid_argument("must be non-negative");
            x = static_cast<std::size_t>(v);
          },
          [&x] { return std::to_string(x); }};
}
inline Binding bind(std::vector<double>& x) {
  return {[&x](const std::string& s) { x = parse_list(s); }, [&x] { return join(x); }};
}
inline Binding bind(std::optional<double>& x) {
  return {[&x](const std::string& s) {
            if (s == "auto") x.reset();
            else x = parse_double(s);
          },
          [&x] { return x ? format_double(*x) : std::string("auto"); }};
}

inline void bind_profile(std::map<std::string, Binding>& t, const std::string& prefix, ProfileSpec& p) {
  t[prefix + ".kind"] = bind(p.kind);
  t[prefix + ".amplitude"] = bind(p.amplitude);
  t[prefix + ".width"] = bind(p.width);
  t[prefix + ".center"] = bind(p.center);
}

inline void bind_forcing(std::map<std::string, Binding>& t, const std::string& prefix, ForcingParams& f) {
  bind_profile(t, prefix, f.profile);
  t[prefix + ".time"] = {[&f](const std::string& s) { f.time = time_profile_from_string(s); },
                         [&f] { return to_string(f.time); }};
  t[prefix + ".rate"] = bind(f.rate);
  t[prefix + ".offset"] = bind(f.offset);
}

/// Key table bound to `c`; keys are sorted, which fixes the canonical dump order.
inline std::map<std::string, Binding> bindings(ExperimentConfig& c) {
  std::map<std::string, Binding> t;
  t["seed"] = bind(c.seed);
  t["grid.dim"] = bind(c.grid.dim);
  t["grid.n"] = bind(c.grid.n);
  t["grid.half_width"] = bind(c.grid.half_width);
  t["grid.boundary"] = {[&c](const std::string& s) { c.grid.boundary = boundary_from_string(s); },
                        [&c] { return to_string(c.grid.boundary); }};
  ModelParams& m = c.model;
  t["model.lambda"] = bind(m.lambda);
  t["model.alpha"] = bind(m.alpha);
  t["model.beta"] = bind(m.beta);
  t["model.sigma"] = bind(m.sigma);
  t["model.p"] = bind(m.p);
  t["model.alpha1"] = bind(m.alpha1);
  t["model.alpha2"] = bind(m.alpha2);
  t["model.alpha3"] = bind(m.alpha3);
  t["model.nonlinearity"] = {[&m](const std::string& s) { m.nonlinearity = nonlinearity_from_string(s); },
                             [&m] { return to_string(m.nonlinearity); }};
  t["model.coefficient"] = bind(m.coefficient);
  t["model.epsilon"] = bind(m.epsilon);
  bind_profile(t, "model.phi", m.phi);
  bind_profile(t, "model.h1", m.h1);
  bind_profile(t, "model.h2", m.h2);
  bind_forcing(t, "model.g", m.g);
  bind_forcing(t, "model.h", m.h);
  t["solver.dt"] = bind(c.dt);
  t["solver.blowup_threshold"] = bind(c.blowup_threshold);
  t["solver.stiffness_limit"] = bind(c.stiffness_limit);
  t["noise.burn_in"] = bind(c.burn_in);
  t["noise.horizon"] = bind(c.noise_horizon);
  t["family.seed"] = bind(c.family.seed);
  t["family.base_radius"] = bind(c.family.base_radius);
  t["family.growth_fraction"] = bind(c.growth_fraction);
  t["family.samples"] = bind_count(c.family.sample_count);
  t["schedule.t"] = bind(c.t_schedule);
  t["schedule.attractor"] = bind(c.attractor_schedule);
  t["schedule.M_min"] = bind(c.M_min);
  t["schedule.M_max"] = bind(c.M_max);
  t["schedule.M_count"] = bind(c.M_count);
  t["experiment.tau"] = bind(c.tau);
  t["experiment.t_simulate"] = bind(c.t_simulate);
  t["experiment.energy_t"] = bind(c.energy_t);
  t["experiment.stride"] = bind(c.stride);
  t["experiment.radius_horizon"] = bind(c.radius_horizon);
  t["experiment.tempered_t"] = bind(c.tempered_t);
  t["calibration.seeds"] = {[&c](const std::string& s) {
                              c.calibration.seeds.clear();
                              std::stringstream ss(s);
                              std::string item;
                              while (std::getline(ss, item, ',')) {
                                item = trim(item);
                                if (!item.empty()) c.calibration.seeds.push_back(parse_u64(item));
                              }
                            },
                            [&c] {
                              std::string out;
                              for (std::size_t i = 0; i < c.calibration.seeds.size(); ++i)
                                out += (i ? "," : "") + std::to_string(c.calibration.seeds[i]);
                              return out;
                            }};
  t["calibration.shifts"] = bind(c.calibration.path_shifts);
  t["calibration.t_elapsed"] = bind(c.calibration.t_elapsed);
  t["calibration.safety"] = bind(c.safety);
  t["tolerance.energy_abs"] = bind(c.energy_abs);
  t["tolerance.energy_rel"] = bind(c.energy_rel);
  t["tolerance.eta"] = bind(c.eta);
  t["tolerance.defect"] = bind(c.defect_tolerance);
  t["tolerance.structure_samples"] = bind_count(c.structure_samples);
  t["output.dir"] = bind(c.output_dir);
  return t;
}

}  // namespace detail

/// Resolved configuration as sorted `key = value` lines.
inline std::string canonical_text(const ExperimentConfig& c) {
  ExperimentConfig copy = c;
  std::string out;
  for (const auto& [key, b] : detail::bindings(copy)) out += key + " = " + b.get() + "\n";
  return out;
}

inline std::uint64_t config_hash(const ExperimentConfig& c) { return fnv1a(canonical_text(c)); }

/// Revalidates every module invariant; throws ValidationError.
inline void validate_config(const ExperimentConfig& c) {
  auto require = [](bool ok, const char* id, const std::string& what) {
    if (!ok) throw ValidationError(id, what);
  };
  try {
    c.grid.validate();
  } catch (const std::exception& e) {
    throw ValidationError("grid", e.what());
  }
  require(c.model.p > 2.0, "p_range", "p > 2 required, got " + format_double(c.model.p));
  require(c.dt > 0.0, "dt_positive", "solver.dt must be positive");
  require(c.stride >= 1, "stride", "experiment.stride must be at least 1");
  require(c.M_count >= 1 && c.M_min > 0.0 && c.M_max >= c.M_min, "M_schedule", "need 0 < M_min <= M_max, M_count >= 1");
  require(!c.t_schedule.empty() && std::is_sorted(c.t_schedule.begin(), c.t_schedule.end()), "t_schedule",
          "schedule.t must be non-empty and increasing");
  require(!c.attractor_schedule.empty() && std::is_sorted(c.attractor_schedule.begin(), c.attractor_schedule.end()),
          "attractor_schedule", "schedule.attractor must be non-empty and increasing");
  require(c.energy_t > 0.0 && c.t_simulate > 0.0, "durations", "experiment durations must be positive");
  require(c.safety >= 1.0, "calibration_safety", "calibration.safety must be >= 1");
  require(c.structure_samples >= 1000, "structure_samples", "tolerance.structure_samples must be >= 1000");
  try {
    for (double t : c.t_schedule) (void)to_step(t, c.dt);
    for (double t : c.attractor_schedule) (void)to_step(t, c.dt);
    for (double t : {c.tau, c.t_simulate, c.energy_t, c.radius_horizon, c.noise_horizon, c.tempered_t}) {
      (void)to_step(t, c.dt);
    }
  } catch (const GridMisalignment& e) {
    throw ValidationError("grid_alignment", e.what());
  }

  ModelSpec m;
  try {
    m = c.model_spec();
    m.validate_coefficients();
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception& e) {
    throw ValidationError("coefficients", e.what());
  }
  const FamilySpec fam = c.tempered_family(m.delta());
  try {
    fam.validate(m.delta());
  } catch (const std::exception& e) {
    throw ValidationError("family", e.what());
  }
  const StructureReport s = validate_structure(m, c.structure_samples);
  if (!s.pass) {
    const auto& v = s.violations.front();
    throw ValidationError(v.condition, "structure condition violated at x = " + format_double(v.x) +
                                           ", s = " + format_double(v.s) + " (lhs " + format_double(v.lhs) +
                                           " > rhs " + format_double(v.rhs) + ")");
  }
  const ForcingReport f = validate_forcing(m, c.tau, c.radius_horizon, c.dt);
  require(std::isfinite(f.integral), "forcing_integrability", "forcing integral is not finite");
}

/// Parses `text`; unknown keys and malformed lines are errors with line numbers.
inline ExperimentConfig parse_config(const std::string& text, bool validate = true) {
  ExperimentConfig c;
  auto table = detail::bindings(c);
  std::stringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    try {
      it->second.set(value);
    } catch (const std::exception& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + key + ": " + e.what());
    }
  }
  if (validate) validate_config(c);
  return c;
}

inline ExperimentConfig load_config(const std::string& path, bool validate = true) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), validate);
}

}  // namespace fhn
