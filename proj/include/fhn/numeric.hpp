#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fhn {

/// Raised whenever a time value does not fall on the shared time grid.
class GridMisalignment : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Signed integer step index of `t` on the grid {k * dt}. Throws when `t` is
/// off-grid by more than a relative 1e-9 of a step.
inline std::int64_t to_step(double t, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("time step must be positive");
  const double q = t / dt;
  const double k = std::nearbyint(q);
  if (std::abs(q - k) > 1e-9 * std::max(1.0, std::abs(k))) {
    throw GridMisalignment("time " + std::to_string(t) +
                           " is not a multiple of dt = " + std::to_string(dt));
  }
  return static_cast<std::int64_t>(k);
}

inline double to_time(std::int64_t k, double dt) { return static_cast<double>(k) * dt; }

/// Pairwise (tree) summation. The reduction order depends only on the length,
/// so results are reproducible bit for bit.
inline double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 8) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

/// |s|^p with exact products for the common integer exponents.
inline double abs_pow(double s, double p) {
  const double a = std::abs(s);
  if (p == 2.0) return a * a;
  if (p == 4.0) {
    const double a2 = a * a;
    return a2 * a2;
  }
  if (p == 1.0) return a;
  return std::pow(a, p);
}

/// Decimal text with 17 significant digits; locale independent.
inline std::string format_double(double x) {
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x, std::chars_format::general, 17);
  return std::string(buf.data(), res.ptr);
}

inline double parse_double(std::string_view text) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr != last) {
    throw std::invalid_argument("not a number: '" + std::string(text) + "'");
  }
  return value;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace fhn
