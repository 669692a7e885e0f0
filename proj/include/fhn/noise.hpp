#pragma once

// Counter-based two-sided Wiener paths and the stationary Ornstein-Uhlenbeck
// processes driven by them.
//
// Every Gaussian increment is a pure function of (seed, component, step
// index), so a path can be read arbitrarily far into the past without
// disturbing values that were already handed out. The shift theta_s acts on a
// path by moving its origin on the step grid.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fhn/numeric.hpp"

namespace fhn {

struct NoiseSeed {
  std::uint64_t seed = 0;
  int component = 1;  // 1 or 2
};

namespace rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

enum class Stream : std::uint64_t { increment = 1, ou_init = 2, family = 3 };

/// 64 random bits keyed by (seed, stream, component, counter, draw).
inline std::uint64_t counter_bits(std::uint64_t seed, Stream stream, int component, std::int64_t counter,
                                  std::uint64_t draw) {
  std::uint64_t h = splitmix64(seed ^ (static_cast<std::uint64_t>(stream) << 56) ^
                               (static_cast<std::uint64_t>(component) << 48));
  h = splitmix64(h ^ static_cast<std::uint64_t>(counter));
  return splitmix64(h + draw * 0xD1B54A32D192ED03ULL);
}

/// Uniform on the open interval (0, 1) built from two 64-bit draws; the
/// second draw fills in the bits below the first draw's 53-bit resolution.
inline double open_uniform(std::uint64_t a, std::uint64_t b) {
  constexpr double scale = 1.0 / 9007199254740992.0;  // 2^-53
  const double hi = static_cast<double>(a >> 11);
  const double lo = (static_cast<double>(b >> 11) + 0.5) * scale;
  return (hi + lo) * scale;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Inverse standard normal CDF: rational approximation (relative error
/// ~1e-9) polished by one Halley step against erfc.
inline double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("inverse_normal_cdf needs p in (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x = 0.0;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

inline double standard_normal(std::uint64_t seed, Stream stream, int component, std::int64_t counter) {
  return inverse_normal_cdf(open_uniform(counter_bits(seed, stream, component, counter, 0),
                                         counter_bits(seed, stream, component, counter, 1)));
}

}  // namespace rng

/// N(0, dt) increment for step k, i.e. omega((k+1) dt) - omega(k dt).
inline double wiener_increment(const NoiseSeed& seed, std::int64_t k, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("time step must be positive");
  return std::sqrt(dt) * rng::standard_normal(seed.seed, rng::Stream::increment, seed.component, k);
}

/// A two-component two-sided Wiener path on the grid {k dt}, anchored so that
/// omega(0) = 0. `offset` is the accumulated shift in steps: this path is
/// t -> base(t + offset dt) - base(offset dt).
struct WienerPath {
  std::uint64_t seed = 0;
  double dt = 1e-3;
  std::int64_t offset = 0;

  /// Increment of component `component` over [k dt, (k+1) dt] in path time.
  double increment(int component, std::int64_t k) const {
    return wiener_increment({seed, component}, k + offset, dt);
  }

  /// omega(k dt); O(|k|) work.
  double value_at_step(int component, std::int64_t k) const {
    double s = 0.0;
    if (k >= 0) {
      for (std::int64_t i = 0; i < k; ++i) s += increment(component, i);
    } else {
      for (std::int64_t i = -1; i >= k; --i) s -= increment(component, i);
    }
    return s;
  }

  /// omega(k dt) for k in [k0, k1], accumulated outward from the anchor so
  /// each value matches value_at_step exactly.
  std::vector<double> values(int component, std::int64_t k0, std::int64_t k1) const {
    if (k1 < k0) throw std::invalid_argument("empty path range");
    std::vector<double> out(static_cast<std::size_t>(k1 - k0 + 1));
    double s = 0.0;
    if (k1 >= 0) {
      for (std::int64_t i = 0; i <= k1; ++i) {
        if (i >= k0) out[static_cast<std::size_t>(i - k0)] = s;
        s += increment(component, i);
      }
    }
    s = 0.0;
    for (std::int64_t i = -1; i >= k0; --i) {
      s -= increment(component, i);
      if (i <= k1) out[static_cast<std::size_t>(i - k0)] = s;
    }
    return out;
  }
};

/// omega_c(t); throws GridMisalignment for off-grid t.
inline double path_value(const WienerPath& path, int component, double t) {
  return path.value_at_step(component, to_step(t, path.dt));
}

/// theta_s omega : t -> omega(s + t) - omega(s).
inline WienerPath shift(const WienerPath& path, double s) {
  WienerPath out = path;
  out.offset += to_step(s, path.dt);
  return out;
}

inline WienerPath shift_steps(const WienerPath& path, std::int64_t steps) {
  WienerPath out = path;
  out.offset += steps;
  return out;
}

// ---------------------------------------------------------------------------
// Ornstein-Uhlenbeck process dz + rate z dt = d omega.

inline double ou_decay(double rate, double dt) { return std::exp(-rate * dt); }

/// Damping applied to the raw increment: the stochastic integral over one step
/// is approximated by exp(-rate dt / 2) * d omega.
inline double ou_midpoint_damping(double rate, double dt) { return std::exp(-0.5 * rate * dt); }

/// Variance of the exact one-step stochastic integral.
inline double ou_exact_step_variance(double rate, double dt) {
  return -std::expm1(-2.0 * rate * dt) / (2.0 * rate);
}

inline double ou_stationary_variance(double rate) { return 0.5 / rate; }

inline double ou_advance(double z, double increment, double rate, double dt) {
  return ou_decay(rate, dt) * z + ou_midpoint_damping(rate, dt) * increment;
}

/// z(theta_t omega_c) for one component of a Wiener path.
///
/// Values are produced in blocks of B = ceil(burn_in / dt) base-grid steps.
/// z inside block b comes from the exact-decay recursion started at the
/// beginning of block b - 1 from an independent stationary draw keyed by that
/// start index, so each value is a pure function of its base index and the
/// start-up error is at most exp(-rate * burn_in) relative.
struct OuProcess {
  double rate = 1.0;
  WienerPath path;
  int component = 1;
  double burn_in = 0.0;  // 0 selects 20 / rate

  double effective_burn_in() const { return burn_in > 0.0 ? burn_in : 20.0 / rate; }

  std::int64_t block_steps() const {
    return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(effective_burn_in() / path.dt - 1e-9)));
  }
};

namespace detail {

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace detail

/// z at path steps k0..k1 inclusive.
inline std::vector<double> ou_series(const OuProcess& proc, std::int64_t k0, std::int64_t k1) {
  if (!(proc.rate > 0.0)) throw std::invalid_argument("OU rate must be positive");
  if (k1 < k0) throw std::invalid_argument("empty OU range");
  const double dt = proc.path.dt;
  const double decay = ou_decay(proc.rate, dt);
  const double damp = ou_midpoint_damping(proc.rate, dt);
  const double stationary_sd = std::sqrt(ou_stationary_variance(proc.rate));
  const std::int64_t B = proc.block_steps();
  const std::int64_t j0 = k0 + proc.path.offset;
  const std::int64_t j1 = k1 + proc.path.offset;
  const NoiseSeed ns{proc.path.seed, proc.component};

  std::vector<double> out(static_cast<std::size_t>(k1 - k0 + 1));
  for (std::int64_t b = detail::floor_div(j0, B); b <= detail::floor_div(j1, B); ++b) {
    const std::int64_t start = (b - 1) * B;
    const std::int64_t first = std::max(j0, b * B);
    const std::int64_t last = std::min(j1, (b + 1) * B - 1);
    double z = stationary_sd * rng::standard_normal(proc.path.seed, rng::Stream::ou_init, proc.component, start);
    for (std::int64_t j = start; j < first; ++j) z = decay * z + damp * wiener_increment(ns, j, dt);
    for (std::int64_t j = first; j <= last; ++j) {
      out[static_cast<std::size_t>(j - j0)] = z;
      if (j < last) z = decay * z + damp * wiener_increment(ns, j, dt);
    }
  }
  return out;
}

/// z(theta_t omega) for grid time t.
inline double ou_evaluate(const OuProcess& proc, double t) {
  const std::int64_t k = to_step(t, proc.path.dt);
  return ou_series(proc, k, k).front();
}

struct TemperednessProbe {
  std::vector<std::pair<double, double>> series;  // (t, exp(-delta t) |z(theta_{-t} omega)|^exponent)
  double initial = 0.0;
  double tail_max = 0.0;
  bool pass = false;
};

/// Decay series from z sampled backwards: z_backward[i] = z(theta_{-i dt} omega).
/// Passes when the maximum over the last 10% of the horizon is below the
/// initial value (or the series vanishes there).
inline TemperednessProbe temperedness_probe(std::span<const double> z_backward, double dt, double delta,
                                            double exponent, std::size_t stride = 1) {
  if (!(delta > 0.0)) throw std::invalid_argument("decay rate must be positive");
  if (z_backward.empty()) throw std::invalid_argument("empty probe series");
  stride = std::max<std::size_t>(1, stride);
  TemperednessProbe out;
  const double horizon = static_cast<double>(z_backward.size() - 1) * dt;
  for (std::size_t i = 0; i < z_backward.size(); i += stride) {
    const double t = static_cast<double>(i) * dt;
    const double value = std::exp(-delta * t) * abs_pow(z_backward[i], exponent);
    out.series.emplace_back(t, value);
    if (i == 0) out.initial = value;
    if (t >= 0.9 * horizon) out.tail_max = std::max(out.tail_max, value);
  }
  out.pass = out.tail_max < out.initial || out.tail_max == 0.0;
  return out;
}

inline TemperednessProbe temperedness_probe(const OuProcess& proc, double delta, double exponent, double horizon,
                                            std::size_t stride = 1) {
  if (!(horizon > 0.0)) throw std::invalid_argument("probe horizon must be positive");
  const std::int64_t K = to_step(horizon, proc.path.dt);
  auto z = ou_series(proc, -K, 0);
  std::vector<double> backward(z.rbegin(), z.rend());
  return temperedness_probe(backward, proc.path.dt, delta, exponent, stride);
}

}  // namespace fhn
