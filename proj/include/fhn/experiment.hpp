#pragma once

// Subcommand orchestration: noise, simulate, pullback, verify, attractor.

#include <chrono>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fhn/cocycle.hpp"
#include "fhn/config.hpp"
#include "fhn/diagnostics.hpp"
#include "fhn/noise.hpp"
#include "fhn/system.hpp"

namespace fhn {

inline constexpr const char* kToolVersion = "0.1.0";

using json = nlohmann::ordered_json;

enum ExitCode : int { exit_pass = 0, exit_check_failed = 1, exit_blowup = 2, exit_config = 3 };

struct RunOptions {
  std::string out_dir;  // empty: use the config's output.dir
  unsigned threads = 1;
};

/// JSON numbers for doubles; non-finite values become strings so the
/// document stays valid and deterministic.
inline json num(double x) {
  if (std::isfinite(x)) return x;
  return std::isnan(x) ? json("nan") : json(x > 0 ? "inf" : "-inf");
}

inline json num_list(const std::vector<double>& xs) {
  json a = json::array();
  for (double x : xs) a.push_back(num(x));
  return a;
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw std::runtime_error("cannot write '" + path.string() + "'");
    for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
    out_ << "\n";
  }
  CsvWriter& cell(double x) { return raw(format_double(x)); }
  CsvWriter& cell(std::integral auto x) { return raw(std::to_string(x)); }
  CsvWriter& raw(const std::string& s) {
    out_ << (first_ ? "" : ",") << s;
    first_ = false;
    return *this;
  }
  void end() {
    out_ << "\n";
    first_ = true;
  }

 private:
  std::ofstream out_;
  bool first_ = true;
};

/// Collects checks, fixtures and written files for one subcommand.
class RunRecord {
 public:
  RunRecord(std::string command, const ExperimentConfig& cfg, std::filesystem::path dir)
      : command_(std::move(command)), cfg_(cfg), dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  std::filesystem::path file(const std::string& name) {
    files_.push_back(name);
    return dir_ / name;
  }

  void check(const std::string& name, bool pass, json worst_margin, json witness, json fixtures) {
    checks_.push_back({{"name", name},
                       {"pass", pass},
                       {"worst_margin", std::move(worst_margin)},
                       {"witness", std::move(witness)},
                       {"fixtures", std::move(fixtures)}});
    summary_[name] = pass;
    all_pass_ = all_pass_ && pass;
  }

  json& extra() { return extra_; }
  bool all_pass() const { return all_pass_; }

  /// Writes report.json, the resolved config and manifest.json; returns the exit code.
  int finish(int exit_code, double wall_seconds) {
    json report;
    report["command"] = command_;
    report["config_hash"] = hash_hex();
    report["seed"] = cfg_.seed;
    report["checks"] = checks_;
    for (auto& [k, v] : extra_.items()) report[k] = v;
    report["pass"] = all_pass_ && exit_code == exit_pass;
    {
      std::ofstream f(file("report.json"));
      f << report.dump(2) << "\n";
    }
    {
      std::ofstream f(file("config.resolved"));
      f << canonical_text(cfg_);
    }
    json manifest;
    manifest["tool"] = "fhn";
    manifest["version"] = kToolVersion;
    manifest["command"] = command_;
    manifest["config_hash"] = hash_hex();
    manifest["seed"] = cfg_.seed;
    manifest["wall_clock_seconds"] = wall_seconds;
    manifest["exit_code"] = exit_code;
    manifest["checks"] = summary_;
    json fixtures = json::object();
    for (const auto& c : checks_) fixtures[c["name"].get<std::string>()] = c["fixtures"];
    manifest["fixtures"] = fixtures;
    manifest["files"] = files_;
    std::ofstream f(dir_ / "manifest.json");
    f << manifest.dump(2) << "\n";
    return exit_code;
  }

 private:
  std::string hash_hex() const {
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << config_hash(cfg_);
    return ss.str();
  }

  std::string command_;
  ExperimentConfig cfg_;
  std::filesystem::path dir_;
  std::vector<std::string> files_;
  json checks_ = json::array();
  json summary_ = json::object();
  json extra_ = json::object();
  bool all_pass_ = true;
};

// ---------------------------------------------------------------------------

struct CalibratedConstants {
  CalibrationResult gronwall, radius_l2, radius_lp, rho;
};

inline CalibratedConstants calibrate_all(const ExperimentConfig& cfg, const ModelSpec& m, const SolverSpec& solver,
                                         unsigned threads) {
  CalibrationDesign d = cfg.calibration;
  d.tau = cfg.tau;
  d.horizon = cfg.radius_horizon;
  d.stride = cfg.stride;
  const auto runs = calibration_ensemble(d, cfg.tempered_family(m.delta()), m, solver, threads);
  const auto policy = cfg.calibration_policy();
  return {calibrate_constant(runs, m, CalibrationTarget::gronwall, solver.dt, policy),
          calibrate_constant(runs, m, CalibrationTarget::radius_l2, solver.dt, policy),
          calibrate_constant(runs, m, CalibrationTarget::radius_lp, solver.dt, policy),
          calibrate_constant(runs, m, CalibrationTarget::rho, solver.dt, policy)};
}

inline json to_json(const CalibrationResult& c) {
  return {{"target", to_string(c.target)}, {"c", num(c.c)},         {"raw", num(c.raw)},
          {"degenerate", c.degenerate},    {"runs", c.runs},         {"seeds", c.seeds}};
}

inline json to_json(const AbsorbingRadius& r) {
  return {{"c", num(r.c)},          {"constant", num(r.constant)}, {"forcing", num(r.forcing)},
          {"noise", num(r.noise)}, {"value", num(r.value)},       {"converged", r.converged}};
}

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline std::int64_t energy_stride(const ExperimentConfig& cfg) {
  const auto max_stride = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(0.01 / cfg.dt + 1e-9)));
  return std::min(cfg.stride, max_stride);
}

inline void run_noise(const ExperimentConfig& cfg, const ModelSpec& m, const SolverSpec& solver, RunRecord& rec) {
  const WienerPath path = cfg.path();
  const auto [p1, p2] = driving_processes(m, solver, path);
  const std::int64_t K = to_step(cfg.noise_horizon, cfg.dt);
  const auto z1 = ou_series(p1, -K, 0);
  const auto z2 = ou_series(p2, -K, 0);
  const auto w1 = path.values(1, -K, 0);
  const auto w2 = path.values(2, -K, 0);
  std::vector<double> b1(z1.rbegin(), z1.rend()), b2(z2.rbegin(), z2.rend());
  const auto stride = static_cast<std::size_t>(cfg.stride);
  const auto probe1 = temperedness_probe(b1, cfg.dt, m.delta(), m.p, stride);
  const auto probe2 = temperedness_probe(b2, cfg.dt, m.delta(), 2.0, stride);
  CsvWriter csv(rec.file("noise.csv"), {"t", "omega1", "omega2", "z1", "z2", "tempered1", "tempered2"});
  for (std::size_t j = 0; j < probe1.series.size(); ++j) {
    const std::size_t back = j * stride;
    const std::size_t idx = static_cast<std::size_t>(K) - back;
    csv.cell(-static_cast<double>(back) * cfg.dt).cell(w1[idx]).cell(w2[idx]).cell(z1[idx]).cell(z2[idx]);
    csv.cell(probe1.series[j].second).cell(probe2.series[j].second).end();
  }
  auto probe_json = [](const TemperednessProbe& p) {
    return json{{"initial", num(p.initial)}, {"tail_max", num(p.tail_max)}};
  };
  rec.check("tempered_z1", probe1.pass, num(probe1.tail_max - probe1.initial), json(nullptr), probe_json(probe1));
  rec.check("tempered_z2", probe2.pass, num(probe2.tail_max - probe2.initial), json(nullptr), probe_json(probe2));
}

inline void write_trajectory(const std::filesystem::path& p, const std::vector<TrajectorySample>& s) {
  CsvWriter csv(p, {"t", "u_l2sq", "v_l2sq", "u_lp_p", "utilde_lp_p", "z1", "z2", "energy"});
  for (const auto& x : s) {
    csv.cell(x.t).cell(x.u_l2sq).cell(x.v_l2sq).cell(x.u_lp_p).cell(x.utilde_lp_p).cell(x.z1).cell(x.z2).cell(
        x.energy);
    csv.end();
  }
}

inline void energy_check(const ExperimentConfig& cfg, const std::vector<TrajectorySample>& samples,
                         const ModelSpec& m, RunRecord& rec, const std::string& name) {
  const double c_noise = structural_noise_constant(m);
  const auto records = energy_records(samples, m, c_noise);
  const auto rep = verify_energy_inequality(records, {cfg.energy_abs, cfg.energy_rel});
  json witness = nullptr;
  if (rep.first_violation_t) witness = {{"t_start", *rep.first_violation_t}, {"t_end", *rep.first_violation_end}};
  rec.check(name, rep.pass, num(rep.worst_margin), witness, {{"c_noise", num(c_noise)}, {"intervals", rep.intervals}});
}

inline void run_simulate(const ExperimentConfig& cfg, const ModelSpec& m, const SolverSpec& solver, RunRecord& rec) {
  const FamilySpec fam = cfg.tempered_family(m.delta());
  const auto init = sample_family(fam, cfg.tau, 0.0, m.grid()).front();
  const CocycleRun run = run_cocycle({cfg.t_simulate, cfg.tau, cfg.path(), init}, m, solver, cfg.stride);
  write_trajectory(rec.file("trajectory.csv"), run.trajectory.samples);
  if (static_cast<double>(cfg.stride) * cfg.dt <= 0.01 * (1.0 + 1e-9)) {
    energy_check(cfg, run.trajectory.samples, m, rec, "energy_inequality");
  } else {
    rec.extra()["note"] = "energy check skipped: sample spacing exceeds 0.01";
  }
}

inline void run_pullback_cmd(const ExperimentConfig& cfg, const ModelSpec& m, const SolverSpec& solver,
                             RunRecord& rec, unsigned threads) {
  const FamilySpec fam = cfg.tempered_family(m.delta());
  const auto runs =
      pullback_ensemble(cfg.tau, cfg.path(), fam, m, solver, cfg.t_schedule, {}, cfg.stride, threads);
  CsvWriter csv(rec.file("pullback.csv"), {"t_elapsed", "sample_id", "seed", "u_l2sq", "v_l2sq", "u_lp_p",
                                           "dist_to_prev_t_l2", "dist_to_prev_t_lp"});
  const std::size_t S = fam.sample_count;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    csv.cell(r.t_elapsed).cell(r.sample_id).cell(r.seed);
    csv.cell(l2sq(r.terminal.u)).cell(l2sq(r.terminal.v)).cell(lp_pow(r.terminal.u, m.p));
    if (i >= S) {
      const auto& prev = runs[i - S].terminal;
      csv.cell(product_distance(r.terminal, prev, 2.0)).cell(product_distance(r.terminal, prev, m.p));
    } else {
      csv.raw("").raw("");
    }
    csv.end();
  }
}

inline void run_verify(const ExperimentConfig& cfg, const ModelSpec& m, const SolverSpec& solver, RunRecord& rec,
                       unsigned threads) {
  const StructureReport st = validate_structure(m, cfg.structure_samples);
  {
    json margins = json::object();
    for (const auto& [k, v] : st.worst_margin) margins[k] = num(v);
    json witness = nullptr;
    if (!st.violations.empty()) {
      const auto& v = st.violations.front();
      witness = {{"condition", v.condition}, {"x", num(v.x)}, {"s", num(v.s)}};
    }
    rec.check("structure", st.pass, margins, witness, {{"evaluations", st.evaluations}});
  }
  const ForcingReport fr = validate_forcing(m, cfg.tau, cfg.radius_horizon, cfg.dt);
  rec.check("forcing_integrability", std::isfinite(fr.integral), num(fr.far_contribution), json(nullptr),
            {{"integral", num(fr.integral)}, {"converged", fr.converged}});

  const CalibratedConstants cal = calibrate_all(cfg, m, solver, threads);
  rec.extra()["calibration"] = {to_json(cal.gronwall), to_json(cal.radius_l2), to_json(cal.radius_lp),
                                to_json(cal.rho)};

  const WienerPath path = cfg.path();
  const RadiusIntegrals ri = radius_integrals(cfg.tau, path, m, solver, cfg.radius_horizon);
  const AbsorbingRadius R = absorbing_radius(ri, cal.radius_l2.c);
  const AbsorbingRadius Rp = absorbing_radius(ri, cal.radius_lp.c);
  rec.extra()["radius_l2"] = to_json(R);
  rec.extra()["radius_lp"] = to_json(Rp);

  // Energy inequality along every family sample over [tau - energy_t, tau].
  const FamilySpec fam = cfg.tempered_family(m.delta());
  {
    const auto inits = sample_family(fam, cfg.tau, 0.0, m.grid());
    std::vector<std::vector<TrajectorySample>> traj(inits.size());
    parallel_for(inits.size(), threads, [&](std::size_t i) {
      traj[i] = run_cocycle(pullback_input(cfg.energy_t, cfg.tau, path, inits[i]), m, solver, energy_stride(cfg))
                    .trajectory.samples;
    });
    const double c_noise = structural_noise_constant(m);
    bool pass = true;
    double worst = -std::numeric_limits<double>::infinity();
    json witness = nullptr;
    std::size_t intervals = 0;
    CsvWriter csv(rec.file("energy.csv"), {"sample_id", "t", "E", "dissipation", "rhs"});
    for (std::size_t i = 0; i < traj.size(); ++i) {
      const auto records = energy_records(traj[i], m, c_noise);
      const auto rep = verify_energy_inequality(records, {cfg.energy_abs, cfg.energy_rel});
      intervals += rep.intervals;
      worst = std::max(worst, rep.worst_margin);
      if (!rep.pass && pass) {
        witness = {{"sample_id", i}, {"t_start", *rep.first_violation_t}, {"t_end", *rep.first_violation_end}};
      }
      pass = pass && rep.pass;
      for (const auto& r : records) {
        csv.cell(i).cell(r.t).cell(r.E).cell(r.dissipation).cell(r.rhs);
        csv.end();
      }
    }
    rec.check("energy_inequality", pass, num(worst), witness, {{"c_noise", num(c_noise)}, {"intervals", intervals}});
  }

  // One pullback ensemble serves absorption, compact-interval, measure and tail checks.
  const auto Ms = cfg.M_schedule();
  const auto runs = pullback_ensemble(cfg.tau, path, fam, m, solver, cfg.t_schedule, Ms, cfg.stride, threads);

  const AbsorptionReport ab = evaluate_absorption(runs, R.value, fam.tempered(m.delta()));
  {
    CsvWriter csv(rec.file("absorption.csv"), {"t_elapsed", "sample_id", "u_l2sq_plus_v_l2sq", "radius", "inside"});
    json witness = nullptr;
    for (const auto& c : ab.cells) {
      csv.cell(c.t).cell(c.sample).cell(c.norm).cell(ab.radius).raw(c.inside ? "1" : "0");
      csv.end();
      if (!c.inside && witness.is_null()) witness = {{"t_elapsed", c.t}, {"sample_id", c.sample}};
    }
    json fixtures = {{"absorption_time", ab.absorption_time ? num(*ab.absorption_time) : json("not-absorbed")},
                     {"family_valid", ab.family_valid}};
    rec.check("absorption", ab.pass, num(ab.worst_ratio - 1.0), witness, fixtures);
  }

  bool have_window = std::all_of(cfg.t_schedule.begin(), cfg.t_schedule.end(), [](double t) { return t >= 2.0; });
  if (have_window) {
    const CompactIntervalReport ci = evaluate_compact_interval(runs, R.value, Rp.value);
    json sups = json::array();
    json witness = nullptr;
    for (const auto& c : ci.cells) {
      sups.push_back({{"t_elapsed", c.t}, {"sample_id", c.sample}, {"sup_l2", num(c.sup_l2)}, {"sup_lp", num(c.sup_lp)}});
      if (!c.pass && witness.is_null()) witness = {{"t_elapsed", c.t}, {"sample_id", c.sample}};
    }
    rec.check("compact_interval", ci.pass,
              {{"l2", num(ci.worst_ratio_l2 - 1.0)}, {"lp", num(ci.worst_ratio_lp - 1.0)}}, witness, {{"sups", sups}});
  } else {
    rec.extra()["compact_interval"] = "skipped: schedule contains t < 2";
  }

  {
    std::size_t checks = 0, violations = 0;
    double worst = 0.0;
    for (const auto& r : runs) {
      checks += r.chebyshev.checks;
      violations += r.chebyshev.violations;
      worst = std::max(worst, r.chebyshev.worst_ratio);
    }
    rec.check("chebyshev", violations == 0, num(worst - 1.0), json(nullptr),
              {{"checks", checks}, {"violations", violations}});
  }

  {
    const double T = ab.absorption_time.value_or(cfg.t_schedule.front());
    const TailReport tr = evaluate_tails(runs, Ms, cfg.eta, m.p, T);
    CsvWriter csv(rec.file("tails.csv"), {"M", "sup_tail", "sup_truncated"});
    for (std::size_t j = 0; j < tr.M.size(); ++j) {
      csv.cell(tr.M[j]).cell(tr.sup_tail[j]).cell(tr.sup_trunc[j]);
      csv.end();
    }
    rec.check("truncation_tail", tr.pass, num(tr.sup_tail.empty() ? 0.0 : tr.sup_tail.back() - tr.eta),
              json(nullptr),
              {{"M_star", tr.M_star ? num(*tr.M_star) : json("none")},
               {"max_abs_utilde", num(tr.max_abs)},
               {"monotone", tr.monotone},
               {"T", num(T)}});
  }

  {
    const RadiusTemperedness rt =
        radius_temperedness(cfg.tau, path, m, solver, cal.radius_l2.c, cfg.radius_horizon, cfg.tempered_t);
    CsvWriter csv(rec.file("radius_tempered.csv"), {"t", "weighted_radius"});
    for (const auto& [t, v] : rt.series) {
      csv.cell(t).cell(v);
      csv.end();
    }
    const double ratio = rt.initial > 0.0 ? rt.final_value / rt.initial : 0.0;
    rec.check("radius_temperedness", rt.pass, num(ratio - 1e-6), json(nullptr),
              {{"initial", num(rt.initial)}, {"final", num(rt.final_value)}});
  }
}

inline void run_attractor(const ExperimentConfig& cfg, const ModelSpec& m, const SolverSpec& solver, RunRecord& rec,
                          unsigned threads) {
  const CalibratedConstants cal = calibrate_all(cfg, m, solver, threads);
  const WienerPath path = cfg.path();
  const RadiusIntegrals ri = radius_integrals(cfg.tau, path, m, solver, cfg.radius_horizon);
  const AbsorbingRadius R = absorbing_radius(ri, cal.radius_l2.c);
  const AbsorbingRadius rho = rho_radius(ri, cal.rho.c);
  FamilySpec fam = cfg.family;
  fam.base_radius = std::sqrt(R.value);
  fam.growth_rate = 0.0;
  const AttractorApprox a = attractor_approximation(cfg.tau, path, fam, m, solver, cfg.attractor_schedule, threads);
  const BispatialReport bs = bispatial_equality_check(a, cfg.defect_tolerance);
  const Containment ct = containment_check(a, rho.value);

  json points = json::array();
  for (std::size_t j = 0; j < a.points.size(); ++j) {
    const auto& pt = a.points[j];
    const std::string base = "attractor_point" + std::to_string(j);
    {
      std::ofstream f(rec.file(base + "_u.fhn"));
      write_field(f, pt.state.u, cfg.tau);
    }
    {
      std::ofstream f(rec.file(base + "_v.fhn"));
      write_field(f, pt.state.v, cfg.tau);
    }
    points.push_back({{"t_elapsed", pt.t_elapsed},
                      {"sample_id", pt.sample_id},
                      {"l2sq", num(l2sq(pt.state.u) + l2sq(pt.state.v))},
                      {"utilde_lp_p", num(lp_pow(pt.state.u, m.p))}});
  }
  json pl2 = json::array(), plp = json::array();
  for (const auto& row : a.pairwise_l2) pl2.push_back(num_list(row));
  for (const auto& row : a.pairwise_lp) plp.push_back(num_list(row));
  rec.extra()["attractor"] = {{"tau", a.tau},
                              {"seed", a.seed},
                              {"p", a.p},
                              {"schedule", num_list(a.schedule)},
                              {"points", points},
                              {"pairwise_l2", pl2},
                              {"pairwise_lp", plp},
                              {"radius_l2", to_json(R)},
                              {"rho", to_json(rho)}};
  {
    CsvWriter csv(rec.file("defects.csv"), {"t_prev", "t", "defect_l2", "defect_lp"});
    for (std::size_t k = 0; k < a.defect_l2.size(); ++k) {
      csv.cell(a.schedule[k]).cell(a.schedule[k + 1]).cell(a.defect_l2[k]).cell(a.defect_lp[k]);
      csv.end();
    }
  }
  json offending = json::array();
  for (const auto& [i, j] : bs.offending) offending.push_back({i, j});
  rec.check("bispatial", bs.pass, {{"l2", num(bs.final_l2 - bs.tolerance)}, {"lp", num(bs.final_lp - bs.tolerance)}},
            offending.empty() ? json(nullptr) : offending,
            {{"defect_l2", num_list(a.defect_l2)}, {"defect_lp", num_list(a.defect_lp)}, {"defined", bs.defined}});
  rec.check("containment", ct.pass, num(ct.max_norm - ct.radius), json(nullptr),
            {{"max_norm", num(ct.max_norm)}, {"rho", num(ct.radius)}});
}

}  // namespace detail

/// Runs one subcommand and writes its artifacts. Returns an ExitCode.
inline int run_command(const std::string& command, const ExperimentConfig& cfg, const RunOptions& opt,
                       std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::filesystem::path dir = opt.out_dir.empty() ? cfg.output_dir : opt.out_dir;
  const unsigned threads = std::max(1u, opt.threads);
  const ModelSpec m = cfg.model_spec();
  const SolverSpec solver = cfg.solver();
  RunRecord rec(command, cfg, dir);
  try {
    if (command == "noise") {
      detail::run_noise(cfg, m, solver, rec);
    } else if (command == "simulate") {
      detail::run_simulate(cfg, m, solver, rec);
    } else if (command == "pullback") {
      detail::run_pullback_cmd(cfg, m, solver, rec, threads);
    } else if (command == "verify") {
      detail::run_verify(cfg, m, solver, rec, threads);
    } else if (command == "attractor") {
      detail::run_attractor(cfg, m, solver, rec, threads);
    } else {
      throw ConfigError("unknown subcommand '" + command + "'");
    }
  } catch (const BlowUpError& e) {
    rec.extra()["blowup"] = {{"t", num(e.time())}, {"max_abs_u", num(e.max_abs_u())}};
    log << "blow-up: " << e.what() << "\n";
    return rec.finish(exit_blowup, detail::seconds_since(t0));
  } catch (const CalibrationError& e) {
    rec.check("calibration", false, json(nullptr), json(e.what()), json(nullptr));
    log << "calibration failed: " << e.what() << "\n";
    return rec.finish(exit_check_failed, detail::seconds_since(t0));
  }
  const int code = rec.all_pass() ? exit_pass : exit_check_failed;
  rec.finish(code, detail::seconds_since(t0));
  if (code != exit_pass) log << "checks failed; see " << (dir / "report.json").string() << "\n";
  return code;
}

}  // namespace fhn
