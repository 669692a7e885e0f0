#pragma once

// FitzHugh-Nagumo model data and the transformed random PDE
//
//   u' + lambda u - Lap u + alpha v = f(x, u + h1 z1) + g(t) + z1 Lap h1 - alpha h2 z2
//   v' + sigma v - beta u           = h(t) + beta h1 z1
//
// advanced by a first-order IMEX scheme (implicit diffusion, explicit
// reaction and coupling, exact integrating factor for v).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fhn/noise.hpp"
#include "fhn/numeric.hpp"
#include "fhn/spatial.hpp"

namespace fhn {

// ---------------------------------------------------------------------------
// Model data

enum class TimeProfile { constant, exponential, sine };

inline std::string to_string(TimeProfile p) {
  switch (p) {
    case TimeProfile::constant: return "constant";
    case TimeProfile::exponential: return "exp";
    case TimeProfile::sine: return "sin";
  }
  return "?";
}

inline TimeProfile time_profile_from_string(const std::string& s) {
  if (s == "constant") return TimeProfile::constant;
  if (s == "exp") return TimeProfile::exponential;
  if (s == "sin") return TimeProfile::sine;
  throw std::invalid_argument("unknown time profile '" + s + "'");
}

/// Separable forcing: factor(t) * profile(x), factor in {1, exp(rate t), sin(rate t) + offset}.
struct Forcing {
  ScalarField profile;
  TimeProfile kind = TimeProfile::constant;
  double rate = 0.0;
  double offset = 0.0;

  double factor(double t) const {
    switch (kind) {
      case TimeProfile::constant: return 1.0;
      case TimeProfile::exponential: return std::exp(rate * t);
      case TimeProfile::sine: return std::sin(rate * t) + offset;
    }
    return 0.0;
  }
  double l2sq(double t) const {
    const double a = factor(t);
    return a * a * profile_l2sq;
  }
  ScalarField at(double t) const { return factor(t) * profile; }

  double profile_l2sq = 0.0;  // cached ||profile||^2, set by set_profile
  void set_profile(ScalarField p) {
    profile = std::move(p);
    profile_l2sq = l2sq_of(profile);
  }

 private:
  static double l2sq_of(const ScalarField& f) { return fhn::l2sq(f); }
};

enum class NonlinearityKind {
  power,     // coefficient |s|^{p-2} s
  shifted,   // coefficient |s|^{p-2} s + phi(x)
  bistable,  // coefficient |s|^{p-2} s + epsilon s
};

inline std::string to_string(NonlinearityKind k) {
  switch (k) {
    case NonlinearityKind::power: return "power";
    case NonlinearityKind::shifted: return "shifted";
    case NonlinearityKind::bistable: return "bistable";
  }
  return "?";
}

inline NonlinearityKind nonlinearity_from_string(const std::string& s) {
  if (s == "power") return NonlinearityKind::power;
  if (s == "shifted") return NonlinearityKind::shifted;
  if (s == "bistable") return NonlinearityKind::bistable;
  throw std::invalid_argument("unknown nonlinearity '" + s + "'");
}

struct Nonlinearity {
  NonlinearityKind kind = NonlinearityKind::power;
  double coefficient = -1.0;
  double epsilon = 0.0;
  ScalarField phi;  // used by `shifted`
};

struct ModelSpec {
  double lambda = 1.0;
  double alpha = 1.0;
  double beta = 1.0;
  double sigma = 1.0;
  double p = 4.0;
  double alpha1 = 1.0;
  double alpha2 = 1.0;
  double alpha3 = 1.0;
  Nonlinearity nonlinearity;
  ScalarField psi1, psi2, psi3;
  ScalarField h1, h2;
  Forcing g, h;

  double delta() const { return std::min(lambda, sigma); }
  const Grid& grid() const { return h1.grid(); }

  /// f(x_i, s).
  double f(std::size_t i, double s) const {
    const double c = nonlinearity.coefficient;
    double base;
    if (p == 4.0) {
      base = c * s * s * s;
    } else {
      base = c * std::pow(std::abs(s), p - 2.0) * s;
    }
    switch (nonlinearity.kind) {
      case NonlinearityKind::power: return base;
      case NonlinearityKind::shifted: return base + nonlinearity.phi[i];
      case NonlinearityKind::bistable: return base + nonlinearity.epsilon * s;
    }
    return base;
  }

  /// Analytic ∂f/∂s, used for step-size control.
  double df_ds(double s) const {
    const double c = nonlinearity.coefficient;
    const double core = p == 4.0 ? 3.0 * c * s * s : c * (p - 1.0) * std::pow(std::abs(s), p - 2.0);
    return nonlinearity.kind == NonlinearityKind::bistable ? core + nonlinearity.epsilon : core;
  }

  void validate_coefficients() const {
    auto positive = [](double x, const char* name) {
      if (!(x > 0.0)) throw std::invalid_argument(std::string(name) + " must be positive");
    };
    positive(lambda, "lambda");
    positive(alpha, "alpha");
    positive(beta, "beta");
    positive(sigma, "sigma");
    positive(alpha1, "alpha1");
    positive(alpha2, "alpha2");
    positive(alpha3, "alpha3");
    if (!(p > 2.0)) throw std::invalid_argument("p must satisfy p > 2");
    const Grid& g0 = grid();
    for (const ScalarField* f : {&psi1, &psi2, &psi3, &h2, &g.profile, &h.profile}) {
      if (!(f->grid() == g0)) throw std::invalid_argument("model fields must share one grid");
    }
    if (nonlinearity.kind == NonlinearityKind::shifted && !(nonlinearity.phi.grid() == g0)) {
      throw std::invalid_argument("phi must live on the model grid");
    }
    if (!std::isfinite(lp_pow(psi1, 1.0)) || !std::isfinite(lp_pow(psi1, p / 2.0)) ||
        !std::isfinite(l2sq(psi2)) || !std::isfinite(l2sq(psi3))) {
      throw std::invalid_argument("structure fields must have finite norms");
    }
  }
};

// ---------------------------------------------------------------------------
// Declarative model parameters and derivation of the structure constants.

/// Closed-form spatial profile.
struct ProfileSpec {
  std::string kind = "zero";  // zero | bump | gaussian | constant
  double amplitude = 0.0;
  double width = 4.0;
  double center = 0.0;

  double operator()(double x, double y) const {
    if (kind == "zero") return 0.0;
    if (kind == "constant") return amplitude;
    const double r = std::sqrt((x - center) * (x - center) + y * y) / width;
    if (kind == "bump") return amplitude * bump(r);
    if (kind == "gaussian") return amplitude * std::exp(-0.5 * r * r);
    throw std::invalid_argument("unknown profile kind '" + kind + "'");
  }
  ScalarField sample(const Grid& grid) const {
    return sample_field(grid, [this](double x, double y) { return (*this)(x, y); });
  }
};

struct ForcingParams {
  ProfileSpec profile;
  TimeProfile time = TimeProfile::constant;
  double rate = 0.0;
  double offset = 0.0;
};

struct ModelParams {
  double lambda = 1.0;
  double alpha = 1.0;
  double beta = 1.0;
  double sigma = 1.0;
  double p = 4.0;
  std::optional<double> alpha1, alpha2, alpha3;  // derived from the nonlinearity when absent
  NonlinearityKind nonlinearity = NonlinearityKind::power;
  double coefficient = -1.0;
  double epsilon = 0.1;
  ProfileSpec phi{"bump", 1.0, 4.0, 0.0};
  ProfileSpec h1{"bump", 1.0, 4.0, 0.0};
  ProfileSpec h2{"bump", 0.5, 4.0, 0.0};
  ForcingParams g{{"bump", 1.0, 4.0, 0.0}};
  ForcingParams h{{"bump", 0.5, 4.0, 0.0}};
};

/// max_{s >= 0} (c s^q - b s^p) for 0 < q < p, b > 0, c >= 0.
inline double young_max(double c, double q, double b, double p) {
  if (c <= 0.0) return 0.0;
  const double s = std::pow(c * q / (b * p), 1.0 / (p - q));
  return c * std::pow(s, q) * (1.0 - q / p);
}

/// |∇phi| by central differences (one-sided at the box ends).
inline ScalarField gradient_magnitude(const ScalarField& phi) {
  const Grid& g = phi.grid();
  const double h = g.spacing();
  const auto n = static_cast<std::size_t>(g.n);
  auto diff = [&](std::size_t base, std::size_t stride, std::size_t i) {
    const std::size_t lo = i == 0 ? i : i - 1;
    const std::size_t hi = i + 1 == n ? i : i + 1;
    return (phi[base + hi * stride] - phi[base + lo * stride]) / (static_cast<double>(hi - lo) * h);
  };
  std::vector<double> out(phi.size());
  if (g.dim == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::abs(diff(0, 1, i));
  } else {
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < n; ++i) {
        const double dx = diff(j * n, 1, i);
        const double dy = diff(i, n, j);
        out[j * n + i] = std::sqrt(dx * dx + dy * dy);
      }
  }
  return ScalarField(g, std::move(out));
}

/// Assembles a ModelSpec on `grid`, deriving alpha1..alpha3 and psi1..psi3
/// for the chosen nonlinearity family unless overridden.
inline ModelSpec build_model(const Grid& grid, const ModelParams& mp) {
  grid.validate();
  ModelSpec m;
  m.lambda = mp.lambda;
  m.alpha = mp.alpha;
  m.beta = mp.beta;
  m.sigma = mp.sigma;
  m.p = mp.p;
  m.nonlinearity.kind = mp.nonlinearity;
  m.nonlinearity.coefficient = mp.coefficient;
  m.nonlinearity.epsilon = mp.nonlinearity == NonlinearityKind::bistable ? mp.epsilon : 0.0;
  m.nonlinearity.phi = mp.nonlinearity == NonlinearityKind::shifted ? mp.phi.sample(grid) : ScalarField(grid);
  m.h1 = mp.h1.sample(grid);
  m.h2 = mp.h2.sample(grid);
  m.g.set_profile(mp.g.profile.sample(grid));
  m.g.kind = mp.g.time;
  m.g.rate = mp.g.rate;
  m.g.offset = mp.g.offset;
  m.h.set_profile(mp.h.profile.sample(grid));
  m.h.kind = mp.h.time;
  m.h.rate = mp.h.rate;
  m.h.offset = mp.h.offset;

  const double a = std::abs(mp.coefficient);
  const double p = mp.p;
  const double eps = m.nonlinearity.epsilon;
  std::vector<double> psi1(grid.size(), 0.0), psi2(grid.size(), 0.0);
  double alpha1 = 1.0, alpha2 = 1.0, alpha3 = 1.0;
  if (mp.coefficient < 0.0 && p > 2.0) {
    switch (mp.nonlinearity) {
      case NonlinearityKind::power:
        alpha1 = a;
        alpha2 = a;
        break;
      case NonlinearityKind::shifted:
        // phi s - (a/2)|s|^p <= psi1,  |f| <= a |s|^{p-1} + |phi|
        alpha1 = 0.5 * a;
        alpha2 = a;
        for (std::size_t i = 0; i < grid.size(); ++i) {
          const double phi = std::abs(m.nonlinearity.phi[i]);
          psi1[i] = young_max(phi, 1.0, 0.5 * a, p);
          psi2[i] = phi;
        }
        break;
      case NonlinearityKind::bistable:
        // eps s^2 - (a/2)|s|^p <= psi1,  eps |s| <= a |s|^{p-1} + psi2
        alpha1 = eps > 0.0 ? 0.5 * a : a;
        alpha2 = 2.0 * a;
        std::fill(psi1.begin(), psi1.end(), young_max(eps, 2.0, 0.5 * a, p));
        std::fill(psi2.begin(), psi2.end(), young_max(std::abs(eps), 1.0, a, p - 1.0));
        alpha3 = eps > 0.0 ? eps : 1.0;
        break;
    }
  }
  m.alpha1 = mp.alpha1.value_or(alpha1);
  m.alpha2 = mp.alpha2.value_or(alpha2);
  m.alpha3 = mp.alpha3.value_or(alpha3);
  m.psi1 = ScalarField(grid, std::move(psi1));
  m.psi2 = ScalarField(grid, std::move(psi2));
  m.psi3 = mp.nonlinearity == NonlinearityKind::shifted ? gradient_magnitude(m.nonlinearity.phi) : ScalarField(grid);
  return m;
}

// ---------------------------------------------------------------------------
// Structural validation

struct StructureViolation {
  std::string condition;
  double x = 0.0;
  double s = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct StructureReport {
  bool pass = true;
  std::vector<StructureViolation> violations;  // worst witness per failing condition
  std::vector<std::pair<std::string, double>> worst_margin;  // max(lhs - rhs) per condition
  std::size_t evaluations = 0;
};

/// Condition ids: "dissipativity" f s <= -alpha1 |s|^p + psi1, "growth"
/// |f| <= alpha2 |s|^{p-1} + psi2, "monotonicity" ∂f/∂s <= alpha3,
/// "x_regularity" |∂f/∂x| <= psi3. Derivatives by central differences.
inline StructureReport validate_structure(const ModelSpec& spec, std::size_t sample_count = 4096) {
  if (sample_count < 1000) throw std::invalid_argument("structure validation needs at least 1000 samples");
  const Grid& g = spec.grid();
  const std::size_t cells = g.size();
  const std::size_t n = static_cast<std::size_t>(g.n);

  std::vector<std::size_t> xs;
  const std::size_t nx = std::min<std::size_t>(cells, 128);
  for (std::size_t k = 0; k < nx; ++k) xs.push_back(k * cells / nx);
  if (spec.nonlinearity.kind == NonlinearityKind::shifted) {
    const auto phi = spec.nonlinearity.phi.values();
    xs.push_back(static_cast<std::size_t>(std::max_element(phi.begin(), phi.end(),
                                                           [](double a, double b) { return std::abs(a) < std::abs(b); }) -
                                          phi.begin()));
    const auto psi3 = spec.psi3.values();
    xs.push_back(static_cast<std::size_t>(std::max_element(psi3.begin(), psi3.end()) - psi3.begin()));
  }

  const std::size_t ns = std::max<std::size_t>(32, (sample_count + 2 * xs.size() - 1) / (2 * xs.size()));
  std::vector<double> ss{0.0};
  for (std::size_t k = 0; k < ns; ++k) {
    const double e = -3.0 + 6.0 * static_cast<double>(k) / static_cast<double>(ns - 1);
    const double s = std::pow(10.0, e);
    ss.push_back(s);
    ss.push_back(-s);
  }

  StructureReport report;
  const char* names[] = {"dissipativity", "growth", "monotonicity", "x_regularity"};
  std::vector<double> worst(4, -std::numeric_limits<double>::infinity());
  std::vector<std::optional<StructureViolation>> witness(4);
  auto record = [&](int id, std::size_t i, double s, double lhs, double rhs, double tol) {
    const double margin = lhs - rhs;
    ++report.evaluations;
    if (margin > worst[id]) worst[id] = margin;
    if (margin > tol) {
      const double excess = margin - tol;
      if (!witness[id] || excess > (witness[id]->lhs - witness[id]->rhs)) {
        witness[id] = StructureViolation{names[id], g.coordinate(static_cast<int>(i % n)), s, lhs, rhs};
      }
    }
  };

  const double p = spec.p;
  for (std::size_t i : xs) {
    for (double s : ss) {
      const double fv = spec.f(i, s);
      {
        const double lhs = fv * s;
        const double rhs = -spec.alpha1 * abs_pow(s, p) + spec.psi1[i];
        record(0, i, s, lhs, rhs, 1e-9 * (std::abs(lhs) + std::abs(rhs)) + 1e-12);
      }
      {
        const double lhs = std::abs(fv);
        const double rhs = spec.alpha2 * std::pow(std::abs(s), p - 1.0) + spec.psi2[i];
        record(1, i, s, lhs, rhs, 1e-9 * (lhs + rhs) + 1e-12);
      }
      {
        const double e = 1e-5 * std::max(1.0, std::abs(s));
        const double fp = spec.f(i, s + e);
        const double fm = spec.f(i, s - e);
        const double lhs = (fp - fm) / (2.0 * e);
        const double tol = 1e-6 * std::max(1.0, std::abs(spec.alpha3)) + 1e-9 * std::abs(lhs) +
                           4e-16 * (std::abs(fp) + std::abs(fm)) / (2.0 * e);
        record(2, i, s, lhs, spec.alpha3, tol);
      }
      {
        // Interior cells only; the stencil matches the one used for psi3.
        const std::size_t ix = i % n;
        if (ix > 0 && ix + 1 < n) {
          const double h = g.spacing();
          const double fpx = spec.f(i + 1, s);
          const double fmx = spec.f(i - 1, s);
          double dx = (fpx - fmx) / (2.0 * h);
          double scale = std::abs(fpx) + std::abs(fmx);
          double mag = std::abs(dx);
          if (g.dim == 2) {
            const std::size_t iy = i / n;
            if (iy == 0 || iy + 1 == n) continue;
            const double fpy = spec.f(i + n, s);
            const double fmy = spec.f(i - n, s);
            const double dy = (fpy - fmy) / (2.0 * h);
            scale += std::abs(fpy) + std::abs(fmy);
            mag = std::sqrt(dx * dx + dy * dy);
          }
          const double tol = 4e-16 * scale / (2.0 * h) + 1e-9 * mag + 1e-12;
          record(3, i, s, mag, spec.psi3[i], tol);
        }
      }
    }
  }
  for (int id = 0; id < 4; ++id) {
    report.worst_margin.emplace_back(names[id], worst[id]);
    if (witness[id]) {
      report.pass = false;
      report.violations.push_back(*witness[id]);
    }
  }
  return report;
}

struct ForcingReport {
  double integral = 0.0;
  double far_contribution = 0.0;  // part contributed by the earliest 10% of the horizon
  bool converged = true;
};

/// Trapezoid quadrature of ∫_{tau-horizon}^{tau} e^{delta (s - tau)} (||g(s)||^2 + ||h(s)||^2) ds.
inline ForcingReport validate_forcing(const ModelSpec& spec, double tau, double horizon, double dt) {
  if (!(horizon > 0.0)) throw std::invalid_argument("forcing horizon must be positive");
  const std::int64_t n = to_step(horizon, dt);
  const std::int64_t far_end = n / 10;
  const double delta = spec.delta();
  auto weight = [&](std::int64_t k) {
    const double s = tau - horizon + to_time(k, dt);
    return std::exp(delta * (s - tau)) * (spec.g.l2sq(s) + spec.h.l2sq(s));
  };
  ForcingReport r;
  double prev = weight(0);
  for (std::int64_t k = 1; k <= n; ++k) {
    const double cur = weight(k);
    const double piece = 0.5 * dt * (prev + cur);
    r.integral += piece;
    if (k <= far_end) r.far_contribution += piece;
    prev = cur;
  }
  r.converged = r.integral == 0.0 || (std::isfinite(r.integral) && r.far_contribution < 0.01 * r.integral);
  return r;
}

// ---------------------------------------------------------------------------
// State and stepping

struct FhnState {
  double t = 0.0;
  ScalarField u;
  ScalarField v;
};

struct TildePair {
  ScalarField u;
  ScalarField v;
};

struct SolverSpec {
  double dt = 1e-3;
  Grid grid;
  double ou_burn_in = 0.0;         // 0 selects 20 / rate for each OU component
  double stiffness_limit = 0.5;    // substep when dt * max|∂f/∂s| exceeds this
  double blowup_threshold = 1e8;   // max|u| beyond which the run is declared blown up
  std::int64_t max_substeps = 1000000;
};

class BlowUpError : public std::runtime_error {
 public:
  BlowUpError(double t, double max_abs_u)
      : std::runtime_error("solution blew up at t = " + format_double(t) + " (max|u| = " + format_double(max_abs_u) +
                           ")"),
        t_(t),
        max_abs_u_(max_abs_u) {}
  double time() const { return t_; }
  double max_abs_u() const { return max_abs_u_; }

 private:
  double t_;
  double max_abs_u_;
};

inline TildePair to_tilde(const FhnState& state, const ModelSpec& spec, double z1, double z2) {
  return {state.u + z1 * spec.h1, state.v + z2 * spec.h2};
}

inline FhnState from_tilde(const TildePair& tilde, const ModelSpec& spec, double z1, double z2, double t) {
  return {t, tilde.u - z1 * spec.h1, tilde.v - z2 * spec.h2};
}

/// Precomputed one-step machinery for a fixed (model, solver) pair.
class Stepper {
 public:
  Stepper(const ModelSpec& spec, const SolverSpec& solver)
      : spec_(&spec), solver_(solver), lap_h1_(laplacian(spec.h1)), full_(solver.grid, solver.dt, spec.lambda) {
    if (!(solver.dt > 0.0)) throw std::invalid_argument("solver dt must be positive");
    if (!(solver.grid == spec.grid())) throw std::invalid_argument("solver grid differs from model grid");
  }

  const ModelSpec& model() const { return *spec_; }
  const SolverSpec& solver() const { return solver_; }

  /// Advances by one dt with noise values and forcing frozen at the step start.
  /// When dt * max|∂f/∂s| exceeds the stiffness limit the same update is
  /// applied over adaptive substeps that sum to dt.
  FhnState advance(const FhnState& state, double z1, double z2, double forcing_time) const {
    const std::size_t n = state.u.size();
    std::vector<double> u(state.u.values().begin(), state.u.values().end());
    std::vector<double> v(state.v.values().begin(), state.v.values().end());
    const double gfac = spec_->g.factor(forcing_time);
    const double hfac = spec_->h.factor(forcing_time);
    const double dt = solver_.dt;

    double elapsed = 0.0;
    std::int64_t substeps = 0;
    std::vector<double> rhs(n);
    while (true) {
      double stiff = 0.0;
      for (std::size_t i = 0; i < n; ++i) stiff = std::max(stiff, std::abs(spec_->df_ds(u[i] + spec_->h1[i] * z1)));
      double h = dt - elapsed;
      bool last = true;
      if (h * stiff > solver_.stiffness_limit) {
        h = solver_.stiffness_limit / stiff;
        last = false;
      }
      if (++substeps > solver_.max_substeps) throw BlowUpError(forcing_time + elapsed, max_abs(u));
      substep(u, v, rhs, h, z1, z2, gfac, hfac, h == dt ? &full_ : nullptr);
      elapsed += h;
      const double m = max_abs(u);
      if (!std::isfinite(m) || m > solver_.blowup_threshold) throw BlowUpError(forcing_time + elapsed, m);
      if (last) break;
    }
    return {state.t + dt, ScalarField(state.u.grid(), std::move(u)), ScalarField(state.v.grid(), std::move(v))};
  }

 private:
  static double max_abs(const std::vector<double>& x) {
    double m = 0.0;
    for (double a : x) {
      if (!std::isfinite(a)) return std::numeric_limits<double>::infinity();
      m = std::max(m, std::abs(a));
    }
    return m;
  }

  void substep(std::vector<double>& u, std::vector<double>& v, std::vector<double>& rhs, double h, double z1,
               double z2, double gfac, double hfac, const ImplicitDiffusion* cached) const {
    const ModelSpec& m = *spec_;
    const std::size_t n = u.size();
    const auto gp = m.g.profile.values();
    const auto hp = m.h.profile.values();
    const auto h1 = m.h1.values();
    const auto h2 = m.h2.values();
    const auto lh1 = lap_h1_.values();
    for (std::size_t i = 0; i < n; ++i) {
      const double ut = u[i] + h1[i] * z1;
      rhs[i] = u[i] + h * (m.f(i, ut) + gfac * gp[i] - m.alpha * v[i] + z1 * lh1[i] - m.alpha * z2 * h2[i]);
    }
    const double ev = std::exp(-m.sigma * h);
    const double bv = -std::expm1(-m.sigma * h) / m.sigma;
    for (std::size_t i = 0; i < n; ++i) v[i] = ev * v[i] + bv * (m.beta * u[i] + hfac * hp[i] + m.beta * h1[i] * z1);
    if (cached != nullptr) {
      cached->apply_inverse(rhs);
    } else {
      ImplicitDiffusion(solver_.grid, h, m.lambda).apply_inverse(rhs);
    }
    u.swap(rhs);
  }

  const ModelSpec* spec_;
  SolverSpec solver_;
  ScalarField lap_h1_;
  ImplicitDiffusion full_;
};

/// One IMEX step of length solver.dt.
inline FhnState step(const FhnState& state, const ModelSpec& spec, const SolverSpec& solver, double z1, double z2,
                     double forcing_time) {
  return Stepper(spec, solver).advance(state, z1, z2, forcing_time);
}

// ---------------------------------------------------------------------------
// Trajectories

struct TrajectorySample {
  double t = 0.0;
  double u_l2sq = 0.0;
  double v_l2sq = 0.0;
  double u_lp_p = 0.0;
  double utilde_lp_p = 0.0;
  double z1 = 0.0;
  double z2 = 0.0;
  double g_l2sq = 0.0;
  double h_l2sq = 0.0;
  double energy = 0.0;  // alpha ||v||^2 + beta ||u||^2
};

struct Trajectory {
  std::vector<TrajectorySample> samples;
  FhnState final_state;
  double z1_final = 0.0;
  double z2_final = 0.0;
};

using SampleObserver = std::function<void(const FhnState&, const TrajectorySample&)>;

inline TrajectorySample make_sample(const FhnState& s, const ModelSpec& spec, double z1, double z2) {
  TrajectorySample r;
  r.t = s.t;
  r.u_l2sq = l2sq(s.u);
  r.v_l2sq = l2sq(s.v);
  r.u_lp_p = lp_pow(s.u, spec.p);
  r.utilde_lp_p = lp_pow(s.u + z1 * spec.h1, spec.p);
  r.z1 = z1;
  r.z2 = z2;
  r.g_l2sq = spec.g.l2sq(s.t);
  r.h_l2sq = spec.h.l2sq(s.t);
  r.energy = spec.alpha * r.v_l2sq + spec.beta * r.u_l2sq;
  return r;
}

/// OU components driving the system: z1 at rate lambda on omega_1, z2 at rate sigma on omega_2.
inline std::pair<OuProcess, OuProcess> driving_processes(const ModelSpec& spec, const SolverSpec& solver,
                                                         const WienerPath& path) {
  if (std::abs(path.dt - solver.dt) > 1e-15 * solver.dt) throw std::invalid_argument("noise dt differs from solver dt");
  return {OuProcess{spec.lambda, path, 1, solver.ou_burn_in}, OuProcess{spec.sigma, path, 2, solver.ou_burn_in}};
}

/// Integrates from tau0 to tau1 driven by `path` (z evaluated at absolute
/// time on that path), recording every `stride` steps plus the last one.
inline Trajectory solve(const ModelSpec& spec, const SolverSpec& solver, const WienerPath& path, double tau0,
                        double tau1, const FhnState& init, std::int64_t stride = 1,
                        const SampleObserver& observer = {}) {
  const std::int64_t k0 = to_step(tau0, solver.dt);
  const std::int64_t k1 = to_step(tau1, solver.dt);
  if (k1 < k0) throw std::invalid_argument("solve needs tau0 <= tau1");
  if (to_step(init.t, solver.dt) != k0) throw std::invalid_argument("initial state time differs from tau0");
  stride = std::max<std::int64_t>(1, stride);
  const auto [p1, p2] = driving_processes(spec, solver, path);
  const auto z1 = ou_series(p1, k0, k1);
  const auto z2 = ou_series(p2, k0, k1);
  const Stepper stepper(spec, solver);

  Trajectory out;
  FhnState state = init;
  state.t = to_time(k0, solver.dt);
  auto emit = [&](std::int64_t k) {
    const auto idx = static_cast<std::size_t>(k - k0);
    TrajectorySample s = make_sample(state, spec, z1[idx], z2[idx]);
    if (observer) observer(state, s);
    out.samples.push_back(s);
  };
  emit(k0);
  for (std::int64_t k = k0; k < k1; ++k) {
    const auto idx = static_cast<std::size_t>(k - k0);
    state = stepper.advance(state, z1[idx], z2[idx], to_time(k, solver.dt));
    state.t = to_time(k + 1, solver.dt);
    if ((k + 1 - k0) % stride == 0 || k + 1 == k1) emit(k + 1);
  }
  out.final_state = std::move(state);
  out.z1_final = z1.back();
  out.z2_final = z2.back();
  return out;
}

}  // namespace fhn
