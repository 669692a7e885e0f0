#pragma once

// The random dynamical system phi(t, tau, omega, .) on (u~, v~) and its
// pullback evaluation.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "fhn/noise.hpp"
#include "fhn/spatial.hpp"
#include "fhn/system.hpp"

namespace fhn {

struct CocycleInput {
  double t = 0.0;
  double tau = 0.0;
  WienerPath path;
  TildePair init;
};

struct CocycleRun {
  TildePair terminal;
  Trajectory trajectory;  // (u, v) along [tau, tau + t] on the path theta_{-tau} omega
};

/// phi(t, tau, omega, x) with its trajectory. The driving path is
/// theta_{-tau} omega; at absolute time s it supplies z(theta_{s - tau} omega).
inline CocycleRun run_cocycle(const CocycleInput& in, const ModelSpec& spec, const SolverSpec& solver,
                              std::int64_t stride = std::numeric_limits<std::int64_t>::max(),
                              const SampleObserver& observer = {}) {
  if (in.t < 0.0) throw std::invalid_argument("cocycle time must be non-negative");
  const std::int64_t k0 = to_step(in.tau, solver.dt);
  const std::int64_t kt = to_step(in.t, solver.dt);
  const WienerPath driver = shift_steps(in.path, -k0);
  const auto [p1, p2] = driving_processes(spec, solver, driver);
  const double z10 = ou_series(p1, k0, k0).front();
  const double z20 = ou_series(p2, k0, k0).front();
  const FhnState init = from_tilde(in.init, spec, z10, z20, to_time(k0, solver.dt));
  CocycleRun out;
  out.trajectory = solve(spec, solver, driver, to_time(k0, solver.dt), to_time(k0 + kt, solver.dt), init, stride,
                         observer);
  if (kt == 0) {
    out.terminal = in.init;
  } else {
    out.terminal = to_tilde(out.trajectory.final_state, spec, out.trajectory.z1_final, out.trajectory.z2_final);
  }
  return out;
}

inline TildePair phi(const CocycleInput& in, const ModelSpec& spec, const SolverSpec& solver) {
  return run_cocycle(in, spec, solver).terminal;
}

/// sqrt(||a.u - b.u||_X^2 + ||a.v - b.v||^2) with X = L^p.
inline double product_distance(const TildePair& a, const TildePair& b, double p = 2.0) {
  const double du = norm_p(a.u - b.u, p);
  const double dv = norm_p(a.v - b.v, 2.0);
  return std::sqrt(du * du + dv * dv);
}

/// ||phi(t + s, tau, omega, x) - phi(t, tau + s, theta_s omega, phi(s, tau, omega, x))|| in L^2 x L^2.
inline double cocycle_check(double t, double s, const CocycleInput& in, const ModelSpec& spec,
                            const SolverSpec& solver) {
  if (t < 0.0 || s < 0.0) throw std::invalid_argument("cocycle_check needs t, s >= 0");
  CocycleInput whole = in;
  whole.t = t + s;
  const TildePair direct = phi(whole, spec, solver);
  CocycleInput first = in;
  first.t = s;
  CocycleInput second;
  second.t = t;
  second.tau = in.tau + s;
  second.path = shift(in.path, s);
  second.init = phi(first, spec, solver);
  return product_distance(direct, phi(second, spec, solver));
}

/// phi(t, tau - t, theta_{-t} omega, x): lands at absolute time tau.
inline CocycleInput pullback_input(double t, double tau, const WienerPath& path, TildePair init) {
  return {t, tau - t, shift(path, -t), std::move(init)};
}

inline TildePair pullback(double t, double tau, const WienerPath& path, const TildePair& init, const ModelSpec& spec,
                          const SolverSpec& solver) {
  return phi(pullback_input(t, tau, path, init), spec, solver);
}

// ---------------------------------------------------------------------------
// Tempered families

struct FamilySpec {
  std::uint64_t seed = 7;
  double base_radius = 2.0;
  double growth_rate = 0.0;  // gamma
  std::size_t sample_count = 4;

  double radius(double t) const { return base_radius * std::exp(growth_rate * t); }

  /// 2 gamma < delta, i.e. e^{-delta t} radius(t)^2 -> 0.
  bool tempered(double delta) const { return growth_rate >= 0.0 && 2.0 * growth_rate < delta; }

  void validate(double delta) const {
    if (!(base_radius >= 0.0)) throw std::invalid_argument("family base_radius must be non-negative");
    if (sample_count == 0) throw std::invalid_argument("family needs at least one sample");
    if (!tempered(delta)) throw std::invalid_argument("family growth rate must satisfy 0 <= 2 gamma < delta");
  }
};

namespace detail {

inline double radical_inverse(std::uint64_t index, std::uint64_t base) {
  double inv = 1.0 / static_cast<double>(base);
  double scale = inv;
  double out = 0.0;
  while (index > 0) {
    out += static_cast<double>(index % base) * scale;
    index /= base;
    scale *= inv;
  }
  return out;
}

}  // namespace detail

/// Deterministic low-discrepancy initial data with ||u~0||^2 + ||v~0||^2 <= radius(t)^2.
/// Each sample is a pair of normalized bumps with Halton-chosen centers and
/// widths, rotated by a seeded Cranley-Patterson shift.
inline std::vector<TildePair> sample_family(const FamilySpec& fam, double tau, double t, const Grid& grid) {
  (void)tau;
  if (fam.sample_count == 0) throw std::invalid_argument("family needs at least one sample");
  const double r = fam.radius(t);
  constexpr std::uint64_t bases[] = {2, 3, 5, 7, 11, 13, 17, 19};
  std::array<double, 8> rotation{};
  for (std::size_t d = 0; d < rotation.size(); ++d) {
    rotation[d] = rng::open_uniform(rng::counter_bits(fam.seed, rng::Stream::family, 0, static_cast<std::int64_t>(d), 0),
                                    rng::counter_bits(fam.seed, rng::Stream::family, 0, static_cast<std::int64_t>(d), 1));
  }
  const double L = grid.half_width;
  std::vector<TildePair> out;
  out.reserve(fam.sample_count);
  for (std::size_t j = 0; j < fam.sample_count; ++j) {
    std::array<double, 8> q{};
    for (std::size_t d = 0; d < q.size(); ++d) {
      const double x = detail::radical_inverse(j + 1, bases[d]) + rotation[d];
      q[d] = x - std::floor(x);
    }
    auto shape = [&](double cx, double cy, double w) {
      ScalarField f = sample_field(grid, [&](double x, double y) {
        const double dy = grid.dim == 2 ? y - cy : 0.0;
        return bump(std::sqrt((x - cx) * (x - cx) + dy * dy) / w);
      });
      const double n = norm_p(f, 2.0);
      return n > 0.0 ? (1.0 / n) * f : f;
    };
    const double width_u = (0.05 + 0.15 * q[1]) * L;
    const double width_v = (0.05 + 0.15 * q[3]) * L;
    ScalarField bu = shape((2.0 * q[0] - 1.0) * 0.4 * L, (2.0 * q[6] - 1.0) * 0.4 * L, width_u);
    ScalarField bv = shape((2.0 * q[2] - 1.0) * 0.4 * L, (2.0 * q[7] - 1.0) * 0.4 * L, width_v);
    const double angle = 0.5 * std::numbers::pi * q[4];
    const double amp = r * std::sqrt(q[5]);
    out.push_back({(amp * std::cos(angle)) * bu, (amp * std::sin(angle)) * bv});
  }
  return out;
}

}  // namespace fhn
