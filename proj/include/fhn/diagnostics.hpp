#pragma once

// Runtime checks of the energy, absorption, Lp, measure, tail and attractor
// estimates on simulated trajectories.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fhn/cocycle.hpp"
#include "fhn/noise.hpp"
#include "fhn/parallel.hpp"
#include "fhn/spatial.hpp"
#include "fhn/system.hpp"

namespace fhn {

// ---------------------------------------------------------------------------
// Energy inequality

/// Noise constant of the energy inequality, assembled from the model data.
/// Coefficients of |z1|^p, z2^2 and 1 are bounded separately and the largest
/// is returned; z1^2 <= |z1|^p + 1 folds the quadratic noise terms in.
inline double structural_noise_constant(const ModelSpec& m) {
  const double p = m.p;
  const double q = p / (p - 1.0);
  const double h1p = lp_pow(m.h1, p);
  const double A = m.beta * std::pow(2.0 * m.alpha2, p) * h1p / (p * std::pow(q * m.alpha1, p - 1.0));
  const double B1 = 4.0 * m.beta / m.lambda * l2sq(laplacian(m.h1)) +
                    4.0 * m.alpha * m.beta * m.beta / m.sigma * l2sq(m.h1) + m.beta;
  const double C2 = 4.0 * m.alpha * m.alpha * m.beta / m.lambda * l2sq(m.h2);
  std::vector<double> abs_h1(m.h1.values().begin(), m.h1.values().end());
  for (double& x : abs_h1) x = std::abs(x);
  const double psi2_h1 = inner(m.psi2, ScalarField(m.h1.grid(), std::move(abs_h1)));
  const double D = 2.0 * m.beta * lp_pow(m.psi1, 1.0) + m.beta * psi2_h1 * psi2_h1;
  return std::max({A + B1, C2, D + B1});
}

struct EnergyRecord {
  double t = 0.0;
  double E = 0.0;
  double dissipation = 0.0;
  double rhs = 0.0;
};

inline EnergyRecord energy_record(const TrajectorySample& s, const ModelSpec& m, double c_noise) {
  const double delta = m.delta();
  EnergyRecord r;
  r.t = s.t;
  r.E = s.energy;
  r.dissipation = delta * s.energy + 0.5 * delta * m.alpha * s.v_l2sq + m.alpha1 * m.beta * s.utilde_lp_p;
  r.rhs = 4.0 * m.beta / m.lambda * s.g_l2sq + 4.0 * m.alpha / m.sigma * s.h_l2sq +
          c_noise * (abs_pow(s.z1, m.p) + s.z2 * s.z2 + 1.0);
  return r;
}

inline std::vector<EnergyRecord> energy_records(std::span<const TrajectorySample> samples, const ModelSpec& m,
                                                double c_noise) {
  std::vector<EnergyRecord> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(energy_record(s, m, c_noise));
  return out;
}

struct EnergyTolerance {
  double abs = 1e-8;
  double rel = 1e-2;
};

struct EnergyReport {
  bool pass = true;
  std::size_t intervals = 0;
  double worst_margin = -std::numeric_limits<double>::infinity();  // max of lhs - rhs - slack
  std::optional<double> first_violation_t;    // left end of the first failing interval
  std::optional<double> first_violation_end;  // right end
};

/// Forward-difference check (E_{n+1} - E_n)/dt_n + dissipation_n <= rhs_n + slack_n.
inline EnergyReport verify_energy_inequality(std::span<const EnergyRecord> records, EnergyTolerance tol = {}) {
  EnergyReport rep;
  for (std::size_t n = 0; n + 1 < records.size(); ++n) {
    const auto& a = records[n];
    const auto& b = records[n + 1];
    const double h = b.t - a.t;
    if (!(h > 0.0) || h > 0.01 * (1.0 + 1e-9)) {
      throw std::invalid_argument("energy check needs sample spacing in (0, 0.01]");
    }
    const double lhs = (b.E - a.E) / h + a.dissipation;
    const double slack = tol.abs + tol.rel * std::max(a.E, a.rhs);
    const double margin = lhs - a.rhs - slack;
    ++rep.intervals;
    if (margin > rep.worst_margin) rep.worst_margin = margin;
    if (margin > 0.0 && !rep.first_violation_t) {
      rep.pass = false;
      rep.first_violation_t = a.t;
      rep.first_violation_end = b.t;
    }
  }
  return rep;
}

inline EnergyReport verify_energy_inequality(const Trajectory& traj, const ModelSpec& m, EnergyTolerance tol = {}) {
  const auto rec = energy_records(traj.samples, m, structural_noise_constant(m));
  return verify_energy_inequality(rec, tol);
}

/// Parts of the Gronwall envelope of the energy inequality at each sample:
/// e^{-delta (t - t0)} E0 plus the forcing convolution (`base`), and the
/// convolution of |z1|^p + z2^2 + 1 (`noise`, to be scaled by the constant).
struct GronwallParts {
  std::vector<double> base;
  std::vector<double> noise;
};

inline GronwallParts gronwall_parts(std::span<const TrajectorySample> s, const ModelSpec& m) {
  GronwallParts out;
  if (s.empty()) return out;
  const double delta = m.delta();
  auto forcing = [&](const TrajectorySample& x) {
    return 4.0 * m.beta / m.lambda * x.g_l2sq + 4.0 * m.alpha / m.sigma * x.h_l2sq;
  };
  auto moment = [&](const TrajectorySample& x) { return abs_pow(x.z1, m.p) + x.z2 * x.z2 + 1.0; };
  double E = s[0].energy, F = 0.0, N = 0.0;
  out.base.push_back(E);
  out.noise.push_back(0.0);
  for (std::size_t i = 1; i < s.size(); ++i) {
    const double h = s[i].t - s[i - 1].t;
    const double d = std::exp(-delta * h);
    E *= d;
    F = d * F + 0.5 * h * (d * forcing(s[i - 1]) + forcing(s[i]));
    N = d * N + 0.5 * h * (d * moment(s[i - 1]) + moment(s[i]));
    out.base.push_back(E + F);
    out.noise.push_back(N);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Radii

/// Forcing and OU-moment quadratures entering R and rho.
struct RadiusIntegrals {
  double forcing = 0.0;    // ∫_{tau-H}^{tau} e^{delta (s - tau)} (||g||^2 + ||h||^2)
  double noise_R = 0.0;    // ∫_{-H}^0 e^{delta s} (|z1|^{2p-2} + |z1|^p + z1^2 + z2^2)
  double noise_rho = 0.0;  // ∫_{-H}^0 e^{delta s} (|z1|^p + z2^2)
  double z1 = 0.0;         // z1(omega)
  double z2 = 0.0;
  bool converged = true;
};

namespace detail {

inline double moment_R(double z1, double z2, double p) {
  return abs_pow(z1, 2.0 * p - 2.0) + abs_pow(z1, p) + z1 * z1 + z2 * z2;
}
inline double moment_rho(double z1, double z2, double p) { return abs_pow(z1, p) + z2 * z2; }

/// A component whose noise profile vanishes does not drive the system.
inline void silence_inactive_noise(const ModelSpec& m, std::vector<double>& z1, std::vector<double>& z2) {
  if (m.h1.max_abs() == 0.0) std::fill(z1.begin(), z1.end(), 0.0);
  if (m.h2.max_abs() == 0.0) std::fill(z2.begin(), z2.end(), 0.0);
}

}  // namespace detail

inline RadiusIntegrals radius_integrals(double tau, const WienerPath& path, const ModelSpec& m,
                                        const SolverSpec& solver, double horizon) {
  const double dt = solver.dt;
  const std::int64_t K = to_step(horizon, dt);
  if (K < 10) throw std::invalid_argument("radius horizon too short");
  RadiusIntegrals out;
  const ForcingReport f = validate_forcing(m, tau, horizon, dt);
  out.forcing = f.integral;
  const auto [p1, p2] = driving_processes(m, solver, path);
  auto z1 = ou_series(p1, -K, 0);
  auto z2 = ou_series(p2, -K, 0);
  detail::silence_inactive_noise(m, z1, z2);
  const double delta = m.delta();
  double far_R = 0.0, far_rho = 0.0;
  for (std::int64_t k = 0; k < K; ++k) {
    const auto i = static_cast<std::size_t>(k);
    const double wa = std::exp(delta * to_time(k - K, dt));
    const double wb = std::exp(delta * to_time(k + 1 - K, dt));
    const double r = 0.5 * dt * (wa * detail::moment_R(z1[i], z2[i], m.p) + wb * detail::moment_R(z1[i + 1], z2[i + 1], m.p));
    const double q = 0.5 * dt * (wa * detail::moment_rho(z1[i], z2[i], m.p) +
                                 wb * detail::moment_rho(z1[i + 1], z2[i + 1], m.p));
    out.noise_R += r;
    out.noise_rho += q;
    if (k < K / 10) {
      far_R += r;
      far_rho += q;
    }
  }
  out.z1 = z1.back();
  out.z2 = z2.back();
  out.converged = f.converged && (out.noise_R == 0.0 || far_R < 0.01 * out.noise_R) &&
                  (out.noise_rho == 0.0 || far_rho < 0.01 * out.noise_rho);
  return out;
}

struct AbsorbingRadius {
  double c = 0.0;
  double constant = 0.0;  // three non-negative components summing to value
  double forcing = 0.0;
  double noise = 0.0;
  double value = 0.0;
  bool converged = true;
};

/// R(tau, omega) = c (1 + F + Z_R).
inline AbsorbingRadius absorbing_radius(const RadiusIntegrals& in, double c) {
  AbsorbingRadius r;
  r.c = c;
  r.constant = c;
  r.forcing = c * in.forcing;
  r.noise = c * in.noise_R;
  r.value = r.constant + r.forcing + r.noise;
  r.converged = in.converged;
  return r;
}

inline AbsorbingRadius absorbing_radius(double tau, const WienerPath& path, const ModelSpec& m,
                                        const SolverSpec& solver, double c, double horizon) {
  return absorbing_radius(radius_integrals(tau, path, m, solver, horizon), c);
}

/// rho(tau, omega) = c (1 + z1(omega)^2 + z2(omega)^2) + c F + c Z_rho.
inline AbsorbingRadius rho_radius(const RadiusIntegrals& in, double c) {
  AbsorbingRadius r;
  r.c = c;
  r.constant = c * (1.0 + in.z1 * in.z1 + in.z2 * in.z2);
  r.forcing = c * in.forcing;
  r.noise = c * in.noise_rho;
  r.value = r.constant + r.forcing + r.noise;
  r.converged = in.converged;
  return r;
}

struct RadiusTemperedness {
  std::vector<std::pair<double, double>> series;  // (t, e^{-delta t} R(tau, theta_{-t} omega))
  double initial = 0.0;
  double final_value = 0.0;
  bool pass = false;  // final below 1e-6 of initial
};

inline RadiusTemperedness radius_temperedness(double tau, const WienerPath& path, const ModelSpec& m,
                                              const SolverSpec& solver, double c, double horizon, double t_max,
                                              double t_stride = 0.5) {
  const double dt = solver.dt;
  const std::int64_t K = to_step(horizon, dt);
  const std::int64_t T = to_step(t_max, dt);
  const std::int64_t S = std::max<std::int64_t>(1, to_step(t_stride, dt));
  const double F = validate_forcing(m, tau, horizon, dt).integral;
  const auto [p1, p2] = driving_processes(m, solver, path);
  auto z1 = ou_series(p1, -K - T, 0);
  auto z2 = ou_series(p2, -K - T, 0);
  detail::silence_inactive_noise(m, z1, z2);
  std::vector<double> mom(z1.size());
  for (std::size_t i = 0; i < mom.size(); ++i) mom[i] = detail::moment_R(z1[i], z2[i], m.p);
  std::vector<double> w(static_cast<std::size_t>(K + 1));
  for (std::int64_t j = 0; j <= K; ++j) w[static_cast<std::size_t>(j)] = std::exp(-m.delta() * to_time(j, dt));
  RadiusTemperedness out;
  const double delta = m.delta();
  for (std::int64_t t = 0; t <= T; t += S) {
    // theta_{-t} omega evaluated at s in [-H, 0] is omega at s - t.
    const std::size_t top = static_cast<std::size_t>(K + T - t);
    double Z = 0.0;
    for (std::int64_t j = 0; j < K; ++j) {
      const auto jj = static_cast<std::size_t>(j);
      Z += 0.5 * dt * (w[jj] * mom[top - jj] + w[jj + 1] * mom[top - jj - 1]);
    }
    const double value = std::exp(-delta * to_time(t, dt)) * c * (1.0 + F + Z);
    out.series.emplace_back(to_time(t, dt), value);
  }
  out.initial = out.series.front().second;
  out.final_value = out.series.back().second;
  out.pass = out.final_value <= 1e-6 * out.initial;
  return out;
}

// ---------------------------------------------------------------------------
// Measure bound

struct MeasureBound {
  double measure = 0.0;
  double bound = 0.0;
  bool pass = true;
};

inline MeasureBound measure_bound(const ScalarField& field, double M, double R) {
  if (!(M > 0.0)) throw std::invalid_argument("measure threshold must be positive");
  MeasureBound r;
  r.measure = superlevel_measure(field, M);
  r.bound = R / (M * M);
  r.pass = r.measure <= r.bound * (1.0 + 1e-12);
  return r;
}

/// Chebyshev's inequality meas(|u| >= M) M^2 <= ||u||^2 for every M in a
/// schedule at once, via a histogram of |u| over the schedule.
struct ChebyshevTally {
  std::size_t checks = 0;
  std::size_t violations = 0;
  double worst_ratio = 0.0;  // max meas M^2 / ||u||^2
};

inline void chebyshev_scan(const ScalarField& u, std::span<const double> M_sorted, ChebyshevTally& tally) {
  if (M_sorted.empty()) return;
  std::vector<std::size_t> count(M_sorted.size() + 1, 0);
  for (double x : u.values()) {
    const double a = std::abs(x);
    // number of schedule entries <= a
    count[static_cast<std::size_t>(std::upper_bound(M_sorted.begin(), M_sorted.end(), a) - M_sorted.begin())]++;
  }
  const double norm2 = l2sq(u);
  const double cell = u.grid().cell_measure();
  std::size_t above = 0;
  for (std::size_t j = M_sorted.size(); j-- > 0;) {
    above += count[j + 1];
    const double lhs = static_cast<double>(above) * cell * M_sorted[j] * M_sorted[j];
    ++tally.checks;
    if (lhs > norm2 * (1.0 + 1e-12)) ++tally.violations;
    if (norm2 > 0.0) tally.worst_ratio = std::max(tally.worst_ratio, lhs / norm2);
  }
}

// ---------------------------------------------------------------------------
// Pullback ensembles

struct PullbackRun {
  double t_elapsed = 0.0;
  std::size_t sample_id = 0;
  std::uint64_t seed = 0;
  TildePair terminal;           // (u~, v~)(tau)
  double terminal_l2 = 0.0;     // ||u(tau)||^2 + ||v(tau)||^2
  double terminal_lp = 0.0;     // ||u(tau)||_p^p
  double window_sup_l2 = 0.0;   // sup over xi in [tau - 1, tau]
  double window_sup_lp = 0.0;
  ChebyshevTally chebyshev;
  std::vector<TrajectorySample> samples;  // kept on request
};

inline PullbackRun run_pullback(double t, double tau, const WienerPath& path, const TildePair& init,
                                std::size_t sample_id, const ModelSpec& m, const SolverSpec& solver,
                                std::span<const double> M_schedule, std::int64_t stride, bool keep_samples) {
  std::vector<double> Ms(M_schedule.begin(), M_schedule.end());
  std::sort(Ms.begin(), Ms.end());
  PullbackRun run;
  run.t_elapsed = t;
  run.sample_id = sample_id;
  run.seed = path.seed;
  const std::int64_t window_start = to_step(tau, solver.dt) - to_step(1.0, solver.dt);
  auto observe = [&](const FhnState& s, const TrajectorySample& x) {
    chebyshev_scan(s.u, Ms, run.chebyshev);
    if (to_step(x.t, solver.dt) >= window_start) {
      run.window_sup_l2 = std::max(run.window_sup_l2, x.u_l2sq + x.v_l2sq);
      run.window_sup_lp = std::max(run.window_sup_lp, x.u_lp_p);
    }
  };
  CocycleRun cr = run_cocycle(pullback_input(t, tau, path, init), m, solver, stride, observe);
  const TrajectorySample& last = cr.trajectory.samples.back();
  run.terminal = std::move(cr.terminal);
  run.terminal_l2 = last.u_l2sq + last.v_l2sq;
  run.terminal_lp = last.u_lp_p;
  if (keep_samples) run.samples = std::move(cr.trajectory.samples);
  return run;
}

/// One run per (t, sample) cell, ordered by t then sample, with the family
/// drawn at each t from `fam`.
inline std::vector<PullbackRun> pullback_ensemble(double tau, const WienerPath& path, const FamilySpec& fam,
                                                  const ModelSpec& m, const SolverSpec& solver,
                                                  std::span<const double> t_schedule,
                                                  std::span<const double> M_schedule, std::int64_t stride,
                                                  unsigned threads, bool keep_samples = false) {
  const std::size_t S = fam.sample_count;
  std::vector<PullbackRun> runs(t_schedule.size() * S);
  parallel_for(runs.size(), threads, [&](std::size_t idx) {
    const double t = t_schedule[idx / S];
    const auto inits = sample_family(fam, tau, t, m.grid());
    runs[idx] = run_pullback(t, tau, path, inits[idx % S], idx % S, m, solver, M_schedule, stride, keep_samples);
  });
  return runs;
}

// ---------------------------------------------------------------------------
// Calibration

enum class CalibrationTarget {
  gronwall,   // energy envelope dominates ||u||^2 + ||v||^2 on [tau - 1, tau]
  radius_l2,  // c (1 + F + Z_R) dominates sup ||u||^2 + ||v||^2 on [tau - 1, tau]
  radius_lp,  // c (1 + F + Z_R) dominates sup ||u||_p^p on [tau - 1, tau]
  rho,        // rho dominates ||u~(tau)||^2 + ||v~(tau)||^2
};

inline std::string to_string(CalibrationTarget t) {
  switch (t) {
    case CalibrationTarget::gronwall: return "gronwall";
    case CalibrationTarget::radius_l2: return "radius_l2";
    case CalibrationTarget::radius_lp: return "radius_lp";
    case CalibrationTarget::rho: return "rho";
  }
  return "?";
}

struct CalibrationRun {
  std::uint64_t seed = 0;
  double tau = 0.0;
  RadiusIntegrals integrals;  // along the run's omega at tau
  std::vector<TrajectorySample> samples;
  double terminal_tilde_l2 = 0.0;
};

struct CalibrationPolicy {
  double safety = 1.1;
  double floor = 1e-6;
  double cap = 1e6;
  std::size_t min_runs = 20;
  std::size_t min_seeds = 5;
};

struct CalibrationResult {
  CalibrationTarget target = CalibrationTarget::radius_l2;
  double c = 0.0;
  double raw = 0.0;  // smallest dominating constant before the safety factor
  bool degenerate = false;
  std::size_t runs = 0;
  std::size_t seeds = 0;
};

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double required_constant(const CalibrationRun& run, const ModelSpec& m, CalibrationTarget target,
                                double dt) {
  const std::int64_t window_start = to_step(run.tau, dt) - to_step(1.0, dt);
  const double level = 1.0 + run.integrals.forcing + run.integrals.noise_R;
  double c = 0.0;
  switch (target) {
    case CalibrationTarget::gronwall: {
      const GronwallParts parts = gronwall_parts(run.samples, m);
      const double floor_ab = std::min(m.alpha, m.beta);
      for (std::size_t i = 0; i < run.samples.size(); ++i) {
        const auto& s = run.samples[i];
        if (to_step(s.t, dt) < window_start) continue;
        const double need = floor_ab * (s.u_l2sq + s.v_l2sq) - parts.base[i];
        if (need > 0.0) {
          if (parts.noise[i] <= 0.0) return std::numeric_limits<double>::infinity();
          c = std::max(c, need / parts.noise[i]);
        }
      }
      return c;
    }
    case CalibrationTarget::radius_l2:
    case CalibrationTarget::radius_lp:
      for (const auto& s : run.samples) {
        if (to_step(s.t, dt) < window_start) continue;
        const double x = target == CalibrationTarget::radius_l2 ? s.u_l2sq + s.v_l2sq : s.u_lp_p;
        c = std::max(c, x / level);
      }
      return c;
    case CalibrationTarget::rho: {
      const auto& in = run.integrals;
      return run.terminal_tilde_l2 / (1.0 + in.z1 * in.z1 + in.z2 * in.z2 + in.forcing + in.noise_rho);
    }
  }
  return c;
}

/// Smallest c dominating every run, times the safety factor.
inline CalibrationResult calibrate_constant(std::span<const CalibrationRun> runs, const ModelSpec& m,
                                            CalibrationTarget target, double dt, CalibrationPolicy policy = {}) {
  std::set<std::uint64_t> seeds;
  for (const auto& r : runs) seeds.insert(r.seed);
  if (runs.size() < policy.min_runs || seeds.size() < policy.min_seeds) {
    throw std::invalid_argument("calibration needs at least " + std::to_string(policy.min_runs) +
                                " trajectories across " + std::to_string(policy.min_seeds) + " seeds");
  }
  CalibrationResult out;
  out.target = target;
  out.runs = runs.size();
  out.seeds = seeds.size();
  for (const auto& r : runs) out.raw = std::max(out.raw, required_constant(r, m, target, dt));
  if (!(out.raw * policy.safety <= policy.cap)) {
    throw CalibrationError("no constant below " + format_double(policy.cap) + " dominates the ensemble (" +
                           to_string(target) + ")");
  }
  out.c = out.raw * policy.safety;
  if (out.c == 0.0) {
    out.c = policy.floor;
    out.degenerate = true;
  }
  return out;
}

struct CalibrationDesign {
  std::vector<std::uint64_t> seeds{1001, 1002, 1003, 1004, 1005};
  std::vector<double> path_shifts{0.0, 100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0};
  double t_elapsed = 8.0;
  double tau = 0.0;
  double horizon = 50.0;
  std::int64_t stride = 10;
};

/// Pullback runs over seeds x path shifts, the initial datum cycling through
/// the family. Each shifted path is a separate noise history.
inline std::vector<CalibrationRun> calibration_ensemble(const CalibrationDesign& d, const FamilySpec& fam,
                                                        const ModelSpec& m, const SolverSpec& solver,
                                                        unsigned threads) {
  const std::size_t A = d.path_shifts.size();
  std::vector<CalibrationRun> runs(d.seeds.size() * A);
  const auto inits = sample_family(fam, d.tau, d.t_elapsed, m.grid());
  parallel_for(runs.size(), threads, [&](std::size_t idx) {
    const WienerPath path = shift(WienerPath{d.seeds[idx / A], solver.dt, 0}, d.path_shifts[idx % A]);
    CocycleRun cr = run_cocycle(pullback_input(d.t_elapsed, d.tau, path, inits[idx % inits.size()]), m, solver,
                                d.stride);
    CalibrationRun& r = runs[idx];
    r.seed = path.seed;
    r.tau = d.tau;
    r.integrals = radius_integrals(d.tau, path, m, solver, d.horizon);
    r.samples = std::move(cr.trajectory.samples);
    r.terminal_tilde_l2 = l2sq(cr.terminal.u) + l2sq(cr.terminal.v);
  });
  return runs;
}

// ---------------------------------------------------------------------------
// Absorption and compact-interval bounds

struct AbsorptionCell {
  double t = 0.0;
  std::size_t sample = 0;
  double norm = 0.0;  // ||u(tau)||^2 + ||v(tau)||^2
  bool inside = false;
};

struct AbsorptionReport {
  bool family_valid = true;
  double radius = 0.0;
  std::vector<AbsorptionCell> cells;
  std::optional<double> absorption_time;  // first schedule t from which every cell is inside
  double worst_ratio = 0.0;               // max norm / radius
  bool pass = false;
};

inline AbsorptionReport evaluate_absorption(std::span<const PullbackRun> runs, double radius, bool family_valid) {
  AbsorptionReport rep;
  rep.family_valid = family_valid;
  rep.radius = radius;
  std::vector<double> ts;
  for (const auto& r : runs) {
    rep.cells.push_back({r.t_elapsed, r.sample_id, r.terminal_l2, r.terminal_l2 <= radius});
    if (radius > 0.0) rep.worst_ratio = std::max(rep.worst_ratio, r.terminal_l2 / radius);
    ts.push_back(r.t_elapsed);
  }
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  for (double T : ts) {
    const bool all = std::all_of(rep.cells.begin(), rep.cells.end(),
                                 [&](const AbsorptionCell& c) { return c.t < T || c.inside; });
    if (all) {
      rep.absorption_time = T;
      break;
    }
  }
  rep.pass = rep.absorption_time.has_value();
  return rep;
}

inline AbsorptionReport absorption_experiment(double tau, const WienerPath& path, const FamilySpec& fam,
                                              const ModelSpec& m, const SolverSpec& solver,
                                              std::span<const double> t_schedule, double radius, unsigned threads = 1) {
  const auto runs = pullback_ensemble(tau, path, fam, m, solver, t_schedule, {}, 10, threads);
  return evaluate_absorption(runs, radius, fam.tempered(m.delta()));
}

struct CompactIntervalCell {
  double t = 0.0;
  std::size_t sample = 0;
  double sup_l2 = 0.0;
  double sup_lp = 0.0;
  double endpoint_l2 = 0.0;
  double endpoint_lp = 0.0;
  bool pass = false;
};

struct CompactIntervalReport {
  double radius_l2 = 0.0;
  double radius_lp = 0.0;
  std::vector<CompactIntervalCell> cells;
  double worst_ratio_l2 = 0.0;
  double worst_ratio_lp = 0.0;
  bool pass = true;
};

inline CompactIntervalReport evaluate_compact_interval(std::span<const PullbackRun> runs, double radius_l2,
                                                       double radius_lp) {
  CompactIntervalReport rep;
  rep.radius_l2 = radius_l2;
  rep.radius_lp = radius_lp;
  for (const auto& r : runs) {
    if (r.t_elapsed < 2.0) throw std::invalid_argument("compact-interval bounds need t >= 2");
    CompactIntervalCell c{r.t_elapsed, r.sample_id, r.window_sup_l2, r.window_sup_lp, r.terminal_l2, r.terminal_lp};
    c.pass = c.sup_l2 <= radius_l2 && c.sup_lp <= radius_lp;
    rep.pass = rep.pass && c.pass;
    if (radius_l2 > 0.0) rep.worst_ratio_l2 = std::max(rep.worst_ratio_l2, c.sup_l2 / radius_l2);
    if (radius_lp > 0.0) rep.worst_ratio_lp = std::max(rep.worst_ratio_lp, c.sup_lp / radius_lp);
    rep.cells.push_back(c);
  }
  return rep;
}

inline CompactIntervalReport compact_interval_bounds(double tau, const WienerPath& path, const FamilySpec& fam,
                                                     const ModelSpec& m, const SolverSpec& solver, double t,
                                                     double radius_l2, double radius_lp, unsigned threads = 1) {
  const double ts[] = {t};
  const auto runs = pullback_ensemble(tau, path, fam, m, solver, ts, {}, 10, threads);
  return evaluate_compact_interval(runs, radius_l2, radius_lp);
}

// ---------------------------------------------------------------------------
// Truncation tails

struct TailCurve {
  double t = 0.0;
  std::size_t sample = 0;
  double max_abs = 0.0;
  std::vector<double> tail;         // ∫_{|u~| >= M} |u~|^p
  std::vector<double> tail_plus;    // ∫_{u~ >= M} |u~|^p
  std::vector<double> tail_minus;   // ∫_{u~ <= -M} |u~|^p
  std::vector<double> trunc_plus;   // ∫ (u~ - M)_+^p
  std::vector<double> trunc_minus;  // ∫ (-u~ - M)_+^p
};

struct TailReport {
  std::vector<double> M;
  std::vector<double> sup_tail;  // over t >= T in the schedule
  std::vector<double> sup_trunc;
  double eta = 0.0;
  double T = 0.0;
  bool monotone = true;
  std::optional<double> M_star;
  double max_abs = 0.0;
  bool pass = false;
  std::vector<TailCurve> curves;
};

inline TailCurve tail_curve(const ScalarField& ut, std::span<const double> Ms, double p) {
  TailCurve c;
  c.max_abs = ut.max_abs();
  const ScalarField neg = -1.0 * ut;
  const double cell = ut.grid().cell_measure();
  for (double M : Ms) {
    double plus = 0.0, minus = 0.0;
    for (double x : ut.values()) {
      if (x >= M) plus += abs_pow(x, p);
      if (x <= -M) minus += abs_pow(x, p);
    }
    c.tail.push_back(tail_integral(ut, M, p));
    c.tail_plus.push_back(plus * cell);
    c.tail_minus.push_back(minus * cell);
    c.trunc_plus.push_back(M > 0.0 ? lp_pow(truncate_plus(ut, M), p) : 0.0);
    c.trunc_minus.push_back(M > 0.0 ? lp_pow(truncate_plus(neg, M), p) : 0.0);
  }
  return c;
}

inline TailReport evaluate_tails(std::span<const PullbackRun> runs, std::span<const double> M_schedule, double eta,
                                 double p, double T) {
  if (!std::is_sorted(M_schedule.begin(), M_schedule.end())) throw std::invalid_argument("M schedule must increase");
  TailReport rep;
  rep.M.assign(M_schedule.begin(), M_schedule.end());
  rep.sup_tail.assign(rep.M.size(), 0.0);
  rep.sup_trunc.assign(rep.M.size(), 0.0);
  rep.eta = eta;
  rep.T = T;
  for (const auto& r : runs) {
    if (r.t_elapsed < T) continue;
    TailCurve c = tail_curve(r.terminal.u, M_schedule, p);
    c.t = r.t_elapsed;
    c.sample = r.sample_id;
    rep.max_abs = std::max(rep.max_abs, c.max_abs);
    for (std::size_t j = 0; j < rep.M.size(); ++j) {
      rep.sup_tail[j] = std::max(rep.sup_tail[j], c.tail[j]);
      rep.sup_trunc[j] = std::max(rep.sup_trunc[j], c.trunc_plus[j] + c.trunc_minus[j]);
      if (j > 0 && c.tail[j] > c.tail[j - 1]) rep.monotone = false;
    }
    rep.curves.push_back(std::move(c));
  }
  for (std::size_t j = 0; j < rep.M.size(); ++j) {
    if (rep.sup_tail[j] <= eta) {
      rep.M_star = rep.M[j];
      break;
    }
  }
  rep.pass = rep.monotone && rep.M_star.has_value() &&
             (*rep.M_star <= 10.0 * rep.max_abs || *rep.M_star == rep.M.front());
  return rep;
}

inline TailReport truncation_tail_experiment(double tau, const WienerPath& path, const FamilySpec& fam,
                                             const ModelSpec& m, const SolverSpec& solver,
                                             std::span<const double> t_schedule, std::span<const double> M_schedule,
                                             double eta, unsigned threads = 1) {
  const auto runs = pullback_ensemble(tau, path, fam, m, solver, t_schedule, {}, 10, threads);
  return evaluate_tails(runs, M_schedule, eta, m.p, t_schedule.empty() ? 0.0 : t_schedule.front());
}

// ---------------------------------------------------------------------------
// Attractor approximation

struct AttractorPoint {
  double t_elapsed = 0.0;
  std::size_t sample_id = 0;
  TildePair state;
};

struct AttractorApprox {
  double tau = 0.0;
  std::uint64_t seed = 0;
  double p = 4.0;
  std::vector<double> schedule;
  std::vector<AttractorPoint> points;  // terminals at the largest t
  std::vector<std::vector<double>> pairwise_l2;
  std::vector<std::vector<double>> pairwise_lp;
  // defect_*[k] = max over samples of dist(terminal at schedule[k+1], terminal at schedule[k])
  std::vector<double> defect_l2;
  std::vector<double> defect_lp;
  bool defect_defined = false;
};

inline AttractorApprox attractor_from_runs(std::span<const PullbackRun> runs, std::span<const double> t_schedule,
                                           std::size_t samples, double tau, std::uint64_t seed, double p) {
  AttractorApprox a;
  a.tau = tau;
  a.seed = seed;
  a.p = p;
  a.schedule.assign(t_schedule.begin(), t_schedule.end());
  const std::size_t K = t_schedule.size();
  if (K == 0 || runs.size() != K * samples) throw std::invalid_argument("attractor runs do not match the schedule");
  for (std::size_t s = 0; s < samples; ++s) {
    const auto& r = runs[(K - 1) * samples + s];
    a.points.push_back({r.t_elapsed, r.sample_id, r.terminal});
  }
  const std::size_t P = a.points.size();
  a.pairwise_l2.assign(P, std::vector<double>(P, 0.0));
  a.pairwise_lp.assign(P, std::vector<double>(P, 0.0));
  for (std::size_t i = 0; i < P; ++i)
    for (std::size_t j = i + 1; j < P; ++j) {
      a.pairwise_l2[i][j] = a.pairwise_l2[j][i] = product_distance(a.points[i].state, a.points[j].state, 2.0);
      a.pairwise_lp[i][j] = a.pairwise_lp[j][i] = product_distance(a.points[i].state, a.points[j].state, p);
    }
  for (std::size_t k = 0; k + 1 < K; ++k) {
    double d2 = 0.0, dp = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
      const auto& x = runs[k * samples + s].terminal;
      const auto& y = runs[(k + 1) * samples + s].terminal;
      d2 = std::max(d2, product_distance(x, y, 2.0));
      dp = std::max(dp, product_distance(x, y, p));
    }
    a.defect_l2.push_back(d2);
    a.defect_lp.push_back(dp);
  }
  a.defect_defined = K >= 2;
  return a;
}

inline AttractorApprox attractor_approximation(double tau, const WienerPath& path, const FamilySpec& fam,
                                               const ModelSpec& m, const SolverSpec& solver,
                                               std::span<const double> t_schedule, unsigned threads = 1) {
  const auto runs = pullback_ensemble(tau, path, fam, m, solver, t_schedule, {}, 1000, threads);
  return attractor_from_runs(runs, t_schedule, fam.sample_count, tau, path.seed, m.p);
}

struct BispatialReport {
  bool pass = false;
  bool defined = false;
  bool l2_decreasing = true;
  bool lp_decreasing = true;
  double final_l2 = 0.0;
  double final_lp = 0.0;
  double tolerance = 1e-3;
  std::vector<std::pair<std::size_t, std::size_t>> offending;  // schedule index pairs where Lp grew while L2 fell
};

/// The same terminal points are measured in L2 x L2 and Lp x L2. Defects at
/// the rounding floor count as non-increasing.
inline BispatialReport bispatial_equality_check(const AttractorApprox& a, double tolerance = 1e-3,
                                                double floor = 1e-13) {
  BispatialReport r;
  r.tolerance = tolerance;
  r.defined = a.defect_defined;
  if (!a.defect_defined) return r;
  for (std::size_t k = 1; k < a.defect_l2.size(); ++k) {
    const bool l2_down = a.defect_l2[k] <= a.defect_l2[k - 1] || a.defect_l2[k] <= floor;
    const bool lp_down = a.defect_lp[k] <= a.defect_lp[k - 1] || a.defect_lp[k] <= floor;
    r.l2_decreasing = r.l2_decreasing && l2_down;
    r.lp_decreasing = r.lp_decreasing && lp_down;
    if (l2_down && !lp_down) r.offending.emplace_back(k, k + 1);
  }
  r.final_l2 = a.defect_l2.back();
  r.final_lp = a.defect_lp.back();
  r.pass = r.l2_decreasing && r.lp_decreasing && r.final_l2 <= tolerance && r.final_lp <= tolerance;
  return r;
}

struct Containment {
  double radius = 0.0;
  double max_norm = 0.0;
  bool pass = true;
};

/// Points of the approximation against the ball ||u~||^2 + ||v~||^2 <= radius.
inline Containment containment_check(const AttractorApprox& a, double radius) {
  Containment c;
  c.radius = radius;
  for (const auto& pt : a.points) c.max_norm = std::max(c.max_norm, l2sq(pt.state.u) + l2sq(pt.state.v));
  c.pass = c.max_norm <= radius;
  return c;
}

}  // namespace fhn
