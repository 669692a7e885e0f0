#pragma once

// Grid-sampled scalar fields on a truncated box standing in for the whole
// space, with the discrete Laplacian, L^p norms, level-set measures and
// truncation operators used by the solver and the diagnostics.

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fhn/numeric.hpp"

namespace fhn {

enum class Boundary { dirichlet0, neumann0, periodic };

inline std::string to_string(Boundary b) {
  switch (b) {
    case Boundary::dirichlet0: return "dirichlet0";
    case Boundary::neumann0: return "neumann0";
    case Boundary::periodic: return "periodic";
  }
  return "?";
}

inline Boundary boundary_from_string(const std::string& s) {
  if (s == "dirichlet0") return Boundary::dirichlet0;
  if (s == "neumann0") return Boundary::neumann0;
  if (s == "periodic") return Boundary::periodic;
  throw std::invalid_argument("unknown boundary rule '" + s + "'");
}

/// Uniform cell-centred grid on [-L, L]^dim.
struct Grid {
  int dim = 1;
  int n = 1024;
  double half_width = 32.0;
  Boundary boundary = Boundary::dirichlet0;

  void validate() const {
    if (dim != 1 && dim != 2) throw std::invalid_argument("grid dim must be 1 or 2");
    if (n < 3) throw std::invalid_argument("grid needs at least 3 points per axis");
    if (!(half_width > 0.0)) throw std::invalid_argument("grid half width must be positive");
  }

  double spacing() const { return 2.0 * half_width / n; }
  double cell_measure() const { return dim == 1 ? spacing() : spacing() * spacing(); }
  std::size_t size() const {
    return dim == 1 ? static_cast<std::size_t>(n) : static_cast<std::size_t>(n) * n;
  }
  double coordinate(int i) const { return -half_width + (i + 0.5) * spacing(); }
  double domain_measure() const { return cell_measure() * static_cast<double>(size()); }

  friend bool operator==(const Grid&, const Grid&) = default;
};

class NonFiniteField : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Real values per grid cell, row-major for dim = 2 (index j * n + i, i along x).
class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(const Grid& grid) : grid_(grid), values_(grid.size(), 0.0) {}
  ScalarField(const Grid& grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.size()) throw std::invalid_argument("field size does not match grid");
    for (double x : values_) {
      if (!std::isfinite(x)) throw NonFiniteField("field contains a non-finite value");
    }
  }

  const Grid& grid() const { return grid_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

  /// Cellwise maximum of |f|.
  double max_abs() const {
    double m = 0.0;
    for (double x : values_) m = std::max(m, std::abs(x));
    return m;
  }

  friend ScalarField operator+(const ScalarField& a, const ScalarField& b) { return a.zip(b, 1.0); }
  friend ScalarField operator-(const ScalarField& a, const ScalarField& b) { return a.zip(b, -1.0); }
  friend ScalarField operator*(double c, const ScalarField& a) {
    std::vector<double> out(a.values_);
    for (double& x : out) x *= c;
    return ScalarField(a.grid_, std::move(out));
  }

  bool operator==(const ScalarField& other) const = default;

 private:
  ScalarField zip(const ScalarField& b, double sign) const {
    if (!(grid_ == b.grid_)) throw std::invalid_argument("fields live on different grids");
    std::vector<double> out(values_.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = values_[i] + sign * b.values_[i];
    return ScalarField(grid_, std::move(out));
  }

  Grid grid_;
  std::vector<double> values_;
};

/// Samples `fn(x, y)` at cell centres (y = 0 in one dimension).
inline ScalarField sample_field(const Grid& grid, const std::function<double(double, double)>& fn) {
  grid.validate();
  std::vector<double> v(grid.size());
  if (grid.dim == 1) {
    for (int i = 0; i < grid.n; ++i) v[i] = fn(grid.coordinate(i), 0.0);
  } else {
    for (int j = 0; j < grid.n; ++j)
      for (int i = 0; i < grid.n; ++i) v[static_cast<std::size_t>(j) * grid.n + i] = fn(grid.coordinate(i), grid.coordinate(j));
  }
  return ScalarField(grid, std::move(v));
}

/// Smooth compactly supported bump exp(1 - 1/(1 - r^2)), r = |x - c| / width, peak 1.
inline double bump(double r) {
  const double a = std::abs(r);
  if (a >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - a * a));
}

namespace detail {

// Second difference along one axis of a line with stride `stride`, closure per boundary.
inline void second_difference_line(std::span<const double> in, std::span<double> out, std::size_t offset,
                                   std::size_t stride, int n, Boundary b, double inv_h2) {
  auto at = [&](int i) { return in[offset + static_cast<std::size_t>(i) * stride]; };
  for (int i = 0; i < n; ++i) {
    const double c = at(i);
    double left = 0.0;
    double right = 0.0;
    if (i > 0) {
      left = at(i - 1);
    } else {
      switch (b) {
        case Boundary::dirichlet0: left = -c; break;
        case Boundary::neumann0: left = c; break;
        case Boundary::periodic: left = at(n - 1); break;
      }
    }
    if (i < n - 1) {
      right = at(i + 1);
    } else {
      switch (b) {
        case Boundary::dirichlet0: right = -c; break;
        case Boundary::neumann0: right = c; break;
        case Boundary::periodic: right = at(0); break;
      }
    }
    out[offset + static_cast<std::size_t>(i) * stride] += (left - 2.0 * c + right) * inv_h2;
  }
}

}  // namespace detail

/// Second-order central Laplacian. Ghost cells: odd reflection for
/// dirichlet0, even reflection for neumann0, wrap-around for periodic.
inline ScalarField laplacian(const ScalarField& f) {
  const Grid& g = f.grid();
  const double inv_h2 = 1.0 / (g.spacing() * g.spacing());
  std::vector<double> out(f.size(), 0.0);
  const auto in = f.values();
  if (g.dim == 1) {
    detail::second_difference_line(in, out, 0, 1, g.n, g.boundary, inv_h2);
  } else {
    const auto n = static_cast<std::size_t>(g.n);
    for (std::size_t j = 0; j < n; ++j) detail::second_difference_line(in, out, j * n, 1, g.n, g.boundary, inv_h2);
    for (std::size_t i = 0; i < n; ++i) detail::second_difference_line(in, out, i, n, g.n, g.boundary, inv_h2);
  }
  return ScalarField(g, std::move(out));
}

/// ∫|f|^p, i.e. ||f||_p^p.
inline double lp_pow(const ScalarField& f, double p) {
  std::vector<double> terms(f.size());
  const auto v = f.values();
  for (std::size_t i = 0; i < terms.size(); ++i) terms[i] = abs_pow(v[i], p);
  return pairwise_sum(terms) * f.grid().cell_measure();
}

inline double l2sq(const ScalarField& f) { return lp_pow(f, 2.0); }

inline double norm_p(const ScalarField& f, double p) {
  if (!(p >= 1.0)) throw std::invalid_argument("norm exponent must be >= 1");
  const double s = lp_pow(f, p);
  if (p == 2.0) return std::sqrt(s);
  return std::pow(s, 1.0 / p);
}

inline double inner(const ScalarField& a, const ScalarField& b) {
  if (!(a.grid() == b.grid())) throw std::invalid_argument("fields live on different grids");
  std::vector<double> terms(a.size());
  for (std::size_t i = 0; i < terms.size(); ++i) terms[i] = a[i] * b[i];
  return pairwise_sum(terms) * a.grid().cell_measure();
}

inline double superlevel_measure(const ScalarField& f, double M) {
  if (!(M > 0.0)) throw std::invalid_argument("threshold must be positive");
  std::size_t count = 0;
  for (double x : f.values()) count += std::abs(x) >= M ? 1 : 0;
  return static_cast<double>(count) * f.grid().cell_measure();
}

/// Cellwise (f - M)_+.
inline ScalarField truncate_plus(const ScalarField& f, double M) {
  if (!(M > 0.0)) throw std::invalid_argument("threshold must be positive");
  std::vector<double> out(f.size());
  const auto v = f.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(v[i] - M, 0.0);
  return ScalarField(f.grid(), std::move(out));
}

/// ∫_{|f| >= M} |f|^p.
inline double tail_integral(const ScalarField& f, double M, double p) {
  if (!(M >= 0.0)) throw std::invalid_argument("threshold must be non-negative");
  if (!(p >= 1.0)) throw std::invalid_argument("exponent must be >= 1");
  std::vector<double> terms(f.size());
  const auto v = f.values();
  for (std::size_t i = 0; i < terms.size(); ++i) terms[i] = std::abs(v[i]) >= M ? abs_pow(v[i], p) : 0.0;
  return pairwise_sum(terms) * f.grid().cell_measure();
}

/// ∫_{|f| < M} |f|^p, the complement of tail_integral.
inline double body_integral(const ScalarField& f, double M, double p) {
  std::vector<double> terms(f.size());
  const auto v = f.values();
  for (std::size_t i = 0; i < terms.size(); ++i) terms[i] = std::abs(v[i]) < M ? abs_pow(v[i], p) : 0.0;
  return pairwise_sum(terms) * f.grid().cell_measure();
}

// ---------------------------------------------------------------------------
// Implicit diffusion solve: (I + h (lambda - Laplacian)) x = rhs.

/// LU factor of a symmetric tridiagonal matrix with constant off-diagonal
/// `off` and diagonal `diag`, optionally closed cyclically (corner entries = off).
class TridiagonalFactor {
 public:
  TridiagonalFactor() = default;
  TridiagonalFactor(std::vector<double> diag, double off, bool cyclic) : off_(off), cyclic_(cyclic) {
    const std::size_t n = diag.size();
    if (n < 3) throw std::invalid_argument("tridiagonal system needs n >= 3");
    if (cyclic_) {
      // Sherman-Morrison: A = B + w w^T with w = (gamma, 0, ..., 0, off).
      gamma_ = -diag[0];
      diag[0] -= gamma_;
      diag[n - 1] -= off_ * off_ / gamma_;
    }
    factor(diag);
    if (cyclic_) {
      correction_.assign(n, 0.0);
      correction_[0] = gamma_;
      correction_[n - 1] = off_;
      solve_plain(correction_);
      denom_ = 1.0 + correction_[0] + off_ * correction_[n - 1] / gamma_;
    }
  }

  std::size_t size() const { return inv_pivot_.size(); }

  void solve(std::span<double> x) const {
    solve_plain(x);
    if (cyclic_) {
      const std::size_t n = x.size();
      const double factor = (x[0] + off_ * x[n - 1] / gamma_) / denom_;
      for (std::size_t i = 0; i < n; ++i) x[i] -= factor * correction_[i];
    }
  }

 private:
  void factor(const std::vector<double>& diag) {
    const std::size_t n = diag.size();
    upper_.assign(n, 0.0);
    inv_pivot_.assign(n, 0.0);
    double pivot = diag[0];
    for (std::size_t i = 0; i < n; ++i) {
      if (i > 0) pivot = diag[i] - off_ * upper_[i - 1];
      if (!(std::abs(pivot) > 0.0)) throw std::runtime_error("tridiagonal factorisation broke down");
      inv_pivot_[i] = 1.0 / pivot;
      upper_[i] = off_ * inv_pivot_[i];
    }
  }

  void solve_plain(std::span<double> x) const {
    const std::size_t n = x.size();
    x[0] *= inv_pivot_[0];
    for (std::size_t i = 1; i < n; ++i) x[i] = (x[i] - off_ * x[i - 1]) * inv_pivot_[i];
    for (std::size_t i = n - 1; i-- > 0;) x[i] -= upper_[i] * x[i + 1];
  }

  double off_ = 0.0;
  bool cyclic_ = false;
  double gamma_ = 0.0;
  double denom_ = 1.0;
  std::vector<double> upper_;
  std::vector<double> inv_pivot_;
  std::vector<double> correction_;
};

/// Inverse of (I + h (lambda - Laplacian)). In two dimensions the operator is
/// approximately factored into (I + h (lambda/2 - D_xx)) (I + h (lambda/2 - D_yy)).
class ImplicitDiffusion {
 public:
  ImplicitDiffusion() = default;
  ImplicitDiffusion(const Grid& grid, double h, double lambda) : grid_(grid), h_(h) {
    grid.validate();
    const double r = h / (grid.spacing() * grid.spacing());
    const double decay = grid.dim == 1 ? h * lambda : 0.5 * h * lambda;
    std::vector<double> diag(grid.n, 1.0 + decay + 2.0 * r);
    switch (grid.boundary) {
      case Boundary::dirichlet0:
        diag.front() += r;
        diag.back() += r;
        break;
      case Boundary::neumann0:
        diag.front() -= r;
        diag.back() -= r;
        break;
      case Boundary::periodic: break;
    }
    factor_ = TridiagonalFactor(std::move(diag), -r, grid.boundary == Boundary::periodic);
  }

  double step() const { return h_; }

  void apply_inverse(std::vector<double>& x) const {
    if (grid_.dim == 1) {
      factor_.solve(x);
      return;
    }
    const auto n = static_cast<std::size_t>(grid_.n);
    for (std::size_t j = 0; j < n; ++j) factor_.solve(std::span<double>(x).subspan(j * n, n));
    std::vector<double> column(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) column[j] = x[j * n + i];
      factor_.solve(column);
      for (std::size_t j = 0; j < n; ++j) x[j * n + i] = column[j];
    }
  }

 private:
  Grid grid_;
  double h_ = 0.0;
  TridiagonalFactor factor_;
};

// ---------------------------------------------------------------------------
// Field snapshot files: "FHNFIELD v1 dim n L time" then one value per line.

inline void write_field(std::ostream& os, const ScalarField& f, double time) {
  const Grid& g = f.grid();
  os << "FHNFIELD v1 " << g.dim << ' ' << g.n << ' ' << format_double(g.half_width) << ' ' << format_double(time)
     << '\n';
  for (double x : f.values()) os << format_double(x) << '\n';
}

struct FieldSnapshot {
  ScalarField field;
  double time = 0.0;
};

inline FieldSnapshot read_field(std::istream& is, Boundary boundary = Boundary::dirichlet0) {
  std::string header;
  if (!std::getline(is, header)) throw std::runtime_error("empty field snapshot");
  std::istringstream hs(header);
  std::string magic, version, L, time;
  Grid g;
  g.boundary = boundary;
  if (!(hs >> magic >> version >> g.dim >> g.n >> L >> time) || magic != "FHNFIELD" || version != "v1") {
    throw std::runtime_error("bad field snapshot header: '" + header + "'");
  }
  g.half_width = parse_double(L);
  g.validate();
  std::vector<double> values;
  values.reserve(g.size());
  std::string line;
  while (values.size() < g.size() && std::getline(is, line)) {
    if (!line.empty()) values.push_back(parse_double(line));
  }
  if (values.size() != g.size()) throw std::runtime_error("truncated field snapshot");
  return {ScalarField(g, std::move(values)), parse_double(time)};
}

}  // namespace fhn
