#pragma once

// Continuous piecewise-linear functions [a,b] -> R^n on a uniform grid.
// This is the computable model used throughout the library: every such
// function is Lipschitz, and norms weighted by exp(-2*rho*t) integrate in
// closed form cell by cell, so operator-norm certifications downstream are
// not polluted by quadrature error.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sdde/errors.hpp"

namespace sdde {

struct Seminorms {
  double sup_norm = 0.0;         // max nodal Euclidean norm
  double lip_seminorm = 0.0;     // max cell slope norm
  double sup_derivative = 0.0;   // == lip_seminorm for piecewise-linear
};

namespace detail {

// Moments M_k = \int_0^d u^k exp(-lambda*u) du, k = 0..3.
// The closed forms cancel catastrophically as lambda*d -> 0 (the k-th one
// loses ~3(k+1) digits at |x| = 1e-1), so below |x| = 0.5 the alternating
// series is summed to machine precision instead.
inline void exp_moments(double lambda, double d, double out[4]) {
  const double x = lambda * d;
  if (std::abs(x) < 0.5) {
    double dk = d;
    for (int k = 0; k < 4; ++k) {
      double term = 1.0 / (k + 1);
      double sum = term;
      double px = 1.0;
      double fact = 1.0;
      for (int j = 1; j < 64; ++j) {
        px *= -x;
        fact *= j;
        term = px / (fact * (k + j + 1));
        sum += term;
        if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
      }
      out[k] = sum * dk;
      dk *= d;
    }
  } else {
    const double e = std::exp(-x);
    const double l2 = lambda * lambda;
    out[0] = (1.0 - e) / lambda;
    out[1] = (1.0 - (1.0 + x) * e) / l2;
    out[2] = (2.0 - (2.0 + 2.0 * x + x * x) * e) / (l2 * lambda);
    out[3] = (6.0 - (6.0 + 6.0 * x + 3.0 * x * x + x * x * x) * e) / (l2 * l2);
  }
}

inline double sq(double v) { return v * v; }

}  // namespace detail

class GridFunction {
 public:
  GridFunction() = default;

  // values holds (m+1)*n doubles, node-major; (b-a)/dt must be integral
  // within relative 1e-12 and is snapped to the nearest integer.
  static GridFunction make(double a, double b, double dt,
                           std::vector<double> values, int n = 1) {
    if (!(b > a)) throw OutOfDomain("make: requires b > a");
    if (!(dt > 0.0)) throw NonIntegralGrid("make: dt must be positive");
    if (n < 1) throw DimensionMismatch("make: n must be >= 1");
    const double m_raw = (b - a) / dt;
    const auto m = static_cast<long>(std::llround(m_raw));
    if (m < 1 || std::abs(m_raw - static_cast<double>(m)) >
                     1e-12 * std::max(1.0, std::abs(m_raw))) {
      throw NonIntegralGrid("make: (b-a)/dt = " + std::to_string(m_raw) +
                            " is not an integer");
    }
    if (values.size() != static_cast<size_t>(m + 1) * static_cast<size_t>(n)) {
      throw DimensionMismatch("make: expected " +
                              std::to_string((m + 1) * n) + " values, got " +
                              std::to_string(values.size()));
    }
    for (double v : values) {
      if (!std::isfinite(v)) throw NonFiniteValue("make: non-finite nodal value");
    }
    GridFunction f;
    f.a_ = a;
    f.b_ = b;
    f.dt_ = (b - a) / static_cast<double>(m);  // snapped
    f.m_ = static_cast<int>(m);
    f.n_ = n;
    f.v_ = std::move(values);
    return f;
  }

  static GridFunction constant(double a, double b, double dt,
                               std::vector<double> value) {
    const int n = static_cast<int>(value.size());
    const auto m = static_cast<long>(std::llround((b - a) / dt));
    std::vector<double> vals(static_cast<size_t>(m + 1) * n);
    for (long i = 0; i <= m; ++i)
      for (int j = 0; j < n; ++j) vals[i * n + j] = value[j];
    return make(a, b, dt, std::move(vals), n);
  }

  double a() const { return a_; }
  double b() const { return b_; }
  double dt() const { return dt_; }
  int cells() const { return m_; }
  int nodes() const { return m_ + 1; }
  int dim() const { return n_; }
  double node_time(int i) const { return a_ + i * dt_; }
  const std::vector<double>& values() const { return v_; }

  double value(int i, int j = 0) const { return v_[static_cast<size_t>(i) * n_ + j]; }

  // Slope of cell i, component j.
  double slope(int i, int j = 0) const {
    return (value(i + 1, j) - value(i, j)) / dt_;
  }

  double node_norm(int i) const {
    double s = 0.0;
    for (int j = 0; j < n_; ++j) s += detail::sq(value(i, j));
    return std::sqrt(s);
  }

  double slope_norm(int i) const {
    double s = 0.0;
    for (int j = 0; j < n_; ++j) s += detail::sq(slope(i, j));
    return std::sqrt(s);
  }

  // Linear interpolation; t may overshoot the endpoints by at most a
  // 1e-12-relative tolerance (then clamped). Nodal requests reproduce the
  // stored values exactly.
  void eval_into(double t, double* out) const {
    const double tol = 1e-12 * std::max({1.0, std::abs(a_), std::abs(b_)});
    if (t < a_) {
      if (t < a_ - tol) throw OutOfDomain("eval: t below domain");
      t = a_;
    } else if (t > b_) {
      if (t > b_ + tol) throw OutOfDomain("eval: t above domain");
      t = b_;
    }
    const double ri = (t - a_) / dt_;
    const auto nearest = static_cast<long>(std::llround(ri));
    if (nearest >= 0 && nearest <= m_ &&
        std::abs(ri - static_cast<double>(nearest)) <=
            1e-12 * std::max(1.0, std::abs(ri))) {
      for (int j = 0; j < n_; ++j) out[j] = value(static_cast<int>(nearest), j);
      return;
    }
    int i = static_cast<int>(std::floor(ri));
    i = std::clamp(i, 0, m_ - 1);
    const double th = ri - i;
    for (int j = 0; j < n_; ++j)
      out[j] = (1.0 - th) * value(i, j) + th * value(i + 1, j);
  }

  std::vector<double> eval(double t) const {
    std::vector<double> out(n_);
    eval_into(t, out.data());
    return out;
  }

  double eval1(double t) const {
    if (n_ != 1) throw DimensionMismatch("eval1: function is not scalar");
    double out;
    eval_into(t, &out);
    return out;
  }

  Seminorms seminorms() const {
    Seminorms s;
    for (int i = 0; i <= m_; ++i) s.sup_norm = std::max(s.sup_norm, node_norm(i));
    for (int i = 0; i < m_; ++i)
      s.lip_seminorm = std::max(s.lip_seminorm, slope_norm(i));
    s.sup_derivative = s.lip_seminorm;
    return s;
  }

 private:
  double a_ = 0.0, b_ = 1.0, dt_ = 1.0;
  int m_ = 0, n_ = 1;
  std::vector<double> v_;
};

// Weighted inner product <f,g> = \int f.g exp(-2 rho t) dt, exact per cell.
// Cells where both factors vanish identically are skipped so that huge
// weights exp(2 rho h) on the pre-history side cannot poison zero segments.
inline double weighted_l2_inner(const GridFunction& f, const GridFunction& g,
                                double rho) {
  if (f.dim() != g.dim() || f.cells() != g.cells())
    throw DimensionMismatch("weighted_l2_inner: incompatible grids");
  const double lambda = 2.0 * rho;
  double mom[4];
  detail::exp_moments(lambda, f.dt(), mom);
  double acc = 0.0;
  for (int i = 0; i < f.cells(); ++i) {
    double c0 = 0.0, c1 = 0.0, c2 = 0.0;
    for (int j = 0; j < f.dim(); ++j) {
      const double p = f.value(i, j), q = g.value(i, j);
      const double sp = f.slope(i, j), sq_ = g.slope(i, j);
      c0 += p * q;
      c1 += p * sq_ + q * sp;
      c2 += sp * sq_;
    }
    if (c0 == 0.0 && c1 == 0.0 && c2 == 0.0) continue;
    acc += std::exp(-lambda * f.node_time(i)) * (c0 * mom[0] + c1 * mom[1] + c2 * mom[2]);
  }
  return acc;
}

inline double weighted_l2_norm(const GridFunction& f, double rho) {
  return std::sqrt(std::max(0.0, weighted_l2_inner(f, f, rho)));
}

// Weighted L2 norm of the (piecewise-constant) derivative.
inline double weighted_derivative_l2_norm(const GridFunction& f, double rho) {
  const double lambda = 2.0 * rho;
  double mom[4];
  detail::exp_moments(lambda, f.dt(), mom);
  double acc = 0.0;
  for (int i = 0; i < f.cells(); ++i) {
    double s2 = 0.0;
    for (int j = 0; j < f.dim(); ++j) s2 += detail::sq(f.slope(i, j));
    if (s2 == 0.0) continue;
    acc += std::exp(-lambda * f.node_time(i)) * s2 * mom[0];
  }
  return std::sqrt(std::max(0.0, acc));
}

inline double weighted_h1_inner(const GridFunction& f, const GridFunction& g,
                                double rho) {
  if (f.dim() != g.dim() || f.cells() != g.cells())
    throw DimensionMismatch("weighted_h1_inner: incompatible grids");
  const double lambda = 2.0 * rho;
  double mom[4];
  detail::exp_moments(lambda, f.dt(), mom);
  double acc = 0.0;
  for (int i = 0; i < f.cells(); ++i) {
    double c0 = 0.0, c1 = 0.0, c2 = 0.0, cd = 0.0;
    for (int j = 0; j < f.dim(); ++j) {
      const double p = f.value(i, j), q = g.value(i, j);
      const double sp = f.slope(i, j), sq_ = g.slope(i, j);
      c0 += p * q;
      c1 += p * sq_ + q * sp;
      c2 += sp * sq_;
      cd += sp * sq_;
    }
    if (c0 == 0.0 && c1 == 0.0 && c2 == 0.0 && cd == 0.0) continue;
    acc += std::exp(-lambda * f.node_time(i)) *
           (c0 * mom[0] + c1 * mom[1] + c2 * mom[2] + cd * mom[0]);
  }
  return acc;
}

inline double weighted_h1_norm(const GridFunction& f, double rho) {
  return std::sqrt(std::max(0.0, weighted_h1_inner(f, f, rho)));
}

// Nodal difference of two functions on the same grid.
inline GridFunction nodal_difference(const GridFunction& f, const GridFunction& g) {
  if (f.dim() != g.dim() || f.cells() != g.cells())
    throw DimensionMismatch("nodal_difference: incompatible grids");
  std::vector<double> vals(f.values().size());
  for (size_t i = 0; i < vals.size(); ++i) vals[i] = f.values()[i] - g.values()[i];
  return GridFunction::make(f.a(), f.b(), f.dt(), std::move(vals), f.dim());
}

// Extends phi on [-h,0] by the constant phi(0) to [-h,T].
inline GridFunction extend_constant(const GridFunction& phi, double T) {
  if (std::abs(phi.b()) > 1e-12 * std::max(1.0, std::abs(phi.a())))
    throw OutOfDomain("extend_constant: phi must live on [-h,0]");
  if (!(T > 0.0)) throw OutOfDomain("extend_constant: T must be positive");
  const double k_raw = T / phi.dt();
  const auto k = static_cast<long>(std::llround(k_raw));
  if (k < 1 || std::abs(k_raw - static_cast<double>(k)) > 1e-12 * std::max(1.0, k_raw))
    throw NonIntegralGrid("extend_constant: T is not a multiple of dt");
  const int n = phi.dim();
  std::vector<double> vals;
  vals.reserve((phi.nodes() + k) * n);
  vals.assign(phi.values().begin(), phi.values().end());
  for (long i = 0; i < k; ++i)
    for (int j = 0; j < n; ++j) vals.push_back(phi.value(phi.cells(), j));
  return GridFunction::make(phi.a(), T, phi.dt(), std::move(vals), n);
}

// Exact antiderivative \int_0^t f at the nodes (trapezoid is exact for
// piecewise-linear data), zero at and before t = 0, re-interpreted as a
// piecewise-linear function.
inline GridFunction integrate_from_zero(const GridFunction& f) {
  const double ri = (0.0 - f.a()) / f.dt();
  const auto i0l = static_cast<long>(std::llround(ri));
  if (i0l < 0 || i0l > f.cells() ||
      std::abs(ri - static_cast<double>(i0l)) > 1e-9 * std::max(1.0, std::abs(ri)))
    throw NonIntegralGrid("integrate_from_zero: 0 is not a grid node");
  const int i0 = static_cast<int>(i0l);
  const int n = f.dim();
  std::vector<double> vals(f.values().size(), 0.0);
  for (int j = 0; j < n; ++j) {
    double acc = 0.0;
    for (int i = i0; i < f.cells(); ++i) {
      acc += 0.5 * f.dt() * (f.value(i, j) + f.value(i + 1, j));
      vals[static_cast<size_t>(i + 1) * n + j] = acc;
    }
  }
  return GridFunction::make(f.a(), f.b(), f.dt(), std::move(vals), n);
}

// A window of length h anchored at grid node `anchor`: semantically the
// function [-h,0] -> R^n, u |-> parent(t_anchor + u). Cheap view; the
// anchor time is a node so windows are pure index shifts.
class WindowView {
 public:
  WindowView(const GridFunction& parent, int anchor, int window_cells)
      : parent_(&parent), anchor_(anchor), mh_(window_cells) {
    if (anchor < window_cells || anchor > parent.cells())
      throw OutOfDomain("WindowView: window exceeds parent domain");
  }

  double h() const { return mh_ * parent_->dt(); }
  double dt() const { return parent_->dt(); }
  int cells() const { return mh_; }
  int dim() const { return parent_->dim(); }
  double anchor_time() const { return parent_->node_time(anchor_); }
  const GridFunction& parent() const { return *parent_; }
  int anchor() const { return anchor_; }

  // u in [-h, 0]
  void eval_into(double u, double* out) const {
    const double tol = 1e-12 * std::max(1.0, h());
    if (u < -h() - tol || u > tol) throw OutOfDomain("WindowView::eval: u outside [-h,0]");
    parent_->eval_into(anchor_time() + std::clamp(u, -h(), 0.0), out);
  }

  std::vector<double> eval(double u) const {
    std::vector<double> out(dim());
    eval_into(u, out.data());
    return out;
  }

  double eval1(double u) const {
    if (dim() != 1) throw DimensionMismatch("WindowView::eval1: not scalar");
    double out;
    eval_into(u, &out);
    return out;
  }

  double value(int i, int j = 0) const {  // node i of the window, 0..mh
    return parent_->value(anchor_ - mh_ + i, j);
  }

  Seminorms seminorms() const {
    Seminorms s;
    const int base = anchor_ - mh_;
    for (int i = 0; i <= mh_; ++i) {
      double nn = 0.0;
      for (int j = 0; j < dim(); ++j) nn += detail::sq(parent_->value(base + i, j));
      s.sup_norm = std::max(s.sup_norm, std::sqrt(nn));
    }
    for (int i = 0; i < mh_; ++i) {
      double sn = 0.0;
      for (int j = 0; j < dim(); ++j) sn += detail::sq(parent_->slope(base + i, j));
      s.lip_seminorm = std::max(s.lip_seminorm, std::sqrt(sn));
    }
    s.sup_derivative = s.lip_seminorm;
    return s;
  }

  // Copy out as a standalone GridFunction on [-h, 0].
  GridFunction materialize() const {
    const int n = dim();
    std::vector<double> vals(static_cast<size_t>(mh_ + 1) * n);
    const int base = anchor_ - mh_;
    for (int i = 0; i <= mh_; ++i)
      for (int j = 0; j < n; ++j) vals[static_cast<size_t>(i) * n + j] = parent_->value(base + i, j);
    return GridFunction::make(-h(), 0.0, parent_->dt(), std::move(vals), n);
  }

 private:
  const GridFunction* parent_;
  int anchor_;
  int mh_;
};

// View of f on [-h,T] shifted to anchor time s (a grid node in [0,T]).
inline WindowView window(const GridFunction& f, double s) {
  if (!(f.a() < 0.0))
    throw OutOfDomain("window: parent domain must start at -h < 0");
  const double mh_raw = -f.a() / f.dt();
  const auto mh = static_cast<long>(std::llround(mh_raw));
  if (std::abs(mh_raw - static_cast<double>(mh)) > 1e-9 * std::max(1.0, mh_raw))
    throw NonIntegralGrid("window: h is not a multiple of dt");
  const double tol = 1e-12 * std::max({1.0, std::abs(f.a()), std::abs(f.b())});
  if (s < -tol || s > f.b() + tol) throw OutOfDomain("window: s outside [0,T]");
  const double ri = (s - f.a()) / f.dt();
  const auto anchor = static_cast<long>(std::llround(ri));
  if (std::abs(ri - static_cast<double>(anchor)) > 1e-9 * std::max(1.0, ri))
    throw MisalignedWindow("window: s = " + std::to_string(s) + " is not a grid node");
  return WindowView(f, static_cast<int>(anchor), static_cast<int>(mh));
}

// Wraps a standalone pre-history-shaped function on [-h,0] as a window.
inline WindowView as_window(const GridFunction& w) {
  return WindowView(w, w.cells(), w.cells());
}

// ---------------------------------------------------------------------------
// Serialization: CSV (t, x_1..x_n; 16 significant digits) and a structured
// record {a, b, dt, n, values}.

inline std::string format_g16(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16g", v);
  return buf;
}

inline std::string to_csv(const GridFunction& f) {
  std::ostringstream os;
  os << "t";
  for (int j = 1; j <= f.dim(); ++j) os << ",x_" << j;
  os << "\n";
  for (int i = 0; i <= f.cells(); ++i) {
    os << format_g16(f.node_time(i));
    for (int j = 0; j < f.dim(); ++j) os << "," << format_g16(f.value(i, j));
    os << "\n";
  }
  return os.str();
}

inline GridFunction from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::vector<double> times;
  std::vector<double> vals;
  int n = -1;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (first) {  // header
      first = false;
      if (line.rfind("t", 0) == 0) continue;
    }
    std::vector<double> row;
    size_t pos = 0;
    while (pos <= line.size()) {
      size_t comma = line.find(',', pos);
      if (comma == std::string::npos) comma = line.size();
      row.push_back(std::stod(line.substr(pos, comma - pos)));
      pos = comma + 1;
    }
    if (row.size() < 2) throw ConfigError("from_csv: row with fewer than 2 columns");
    if (n < 0) n = static_cast<int>(row.size()) - 1;
    if (static_cast<int>(row.size()) - 1 != n)
      throw DimensionMismatch("from_csv: ragged rows");
    times.push_back(row[0]);
    vals.insert(vals.end(), row.begin() + 1, row.end());
  }
  if (times.size() < 2) throw ConfigError("from_csv: need at least two rows");
  const double a = times.front(), b = times.back();
  const double dt = (b - a) / static_cast<double>(times.size() - 1);
  for (size_t i = 0; i < times.size(); ++i) {
    if (std::abs(times[i] - (a + static_cast<double>(i) * dt)) >
        1e-9 * std::max(1.0, std::abs(b - a)))
      throw NonIntegralGrid("from_csv: non-uniform time column");
  }
  return GridFunction::make(a, b, dt, std::move(vals), n);
}

}  // namespace sdde
