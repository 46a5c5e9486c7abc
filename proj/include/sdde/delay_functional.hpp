#pragma once

// Delay functionals r: (windows on [-h,0]) -> [-h,0] with Lipschitz
// metadata. Four concrete variants: constant, state-value (clipped value at
// the right endpoint), threshold crossing of an auxiliary maturation ODE,
// and the echo (signal round-trip) fixed point. The 6.x-style models speak
// in elapsed time s* >= 0; evaluators return the framework delay -s* so
// that x(t + r) = x(t - s*).

#include <atomic>
#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "sdde/convex_projection.hpp"
#include "sdde/grid_function.hpp"
#include "sdde/rng.hpp"

namespace sdde {

enum class ValidityKind { All, VBeta, WAlpha };

struct DelayFunctional {
  std::function<double(const WindowView&)> raw;
  double h = 1.0;
  double lip_hint = 0.0;  // Lipschitz constant w.r.t. the H1 window norm
  ValidityKind validity = ValidityKind::All;
  std::shared_ptr<std::atomic<bool>> clamp_fired =
      std::make_shared<std::atomic<bool>>(false);

  // Evaluate and clamp into [-h, 0]; the flag records a clamp beyond
  // floating-point dust.
  double operator()(const WindowView& w) const {
    double v = raw(w);
    const double tol = 1e-12 * std::max(1.0, h);
    if (v < -h) {
      if (v < -h - tol) clamp_fired->store(true);
      v = -h;
    } else if (v > 0.0) {
      if (v > tol) clamp_fired->store(true);
      v = 0.0;
    }
    return v;
  }

  double operator()(const GridFunction& w) const { return (*this)(as_window(w)); }
};

inline DelayFunctional constant_delay(double tau0, double h) {
  if (tau0 < -h || tau0 > 0.0)
    throw OutOfRange("constant_delay: tau0 outside [-h,0]");
  DelayFunctional r;
  r.raw = [tau0](const WindowView&) { return tau0; };
  r.h = h;
  r.lip_hint = 0.0;
  return r;
}

// r(phi) = -min{ ||phi(0)||, cap }. Lipschitz via the embedding constant
// sqrt(h) + 1/sqrt(h) (equals 3*sqrt(2)/2 at h = 2).
inline DelayFunctional state_value_delay(double cap, double h) {
  if (!(cap > 0.0) || cap > h)
    throw OutOfRange("state_value_delay: need 0 < cap <= h");
  DelayFunctional r;
  r.raw = [cap](const WindowView& w) {
    double norm2 = 0.0;
    std::vector<double> v = w.eval(0.0);
    for (double x : v) norm2 += x * x;
    return -std::min(std::sqrt(norm2), cap);
  };
  r.h = h;
  r.lip_hint = std::sqrt(h) + 1.0 / std::sqrt(h);
  return r;
}

// One trajectory of the maturation equation y' = -g(y, psi(-s)), y(0) = x2,
// integrated with the classical 4th-order one-step method until y crosses
// x1; the crossing is refined by bisection on re-integrated partial steps.
struct ThresholdCrossing {
  double s_star = 0.0;       // elapsed crossing time in [0, h]
  double y_star = 0.0;       // y(s_star), equals x1 up to tol
  double ds = 0.0;
  std::vector<double> y;     // y at 0, ds, 2*ds, ... (up to the crossing step)
};

namespace detail {

struct GBoundChecker {
  const std::function<double(double, double)>& g;
  double eps, K;
  double operator()(double y, double p) const {
    const double v = g(y, p);
    const double slack = 1e-12 * std::max(1.0, K);
    if (v < eps - slack || v > K + slack)
      throw GBoundsViolated("threshold_delay: g(y,p) = " + std::to_string(v) +
                            " outside [" + std::to_string(eps) + ", " +
                            std::to_string(K) + "]");
    return v;
  }
};

inline double rk4_step(const GBoundChecker& g, const WindowView& psi, double s,
                       double y, double step) {
  auto f = [&](double ss, double yy) { return -g(yy, psi.eval1(-ss)); };
  const double k1 = f(s, y);
  const double k2 = f(s + 0.5 * step, y + 0.5 * step * k1);
  const double k3 = f(s + 0.5 * step, y + 0.5 * step * k2);
  const double k4 = f(s + step, y + step * k3);
  return y + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace detail

inline ThresholdCrossing threshold_crossing(
    const std::function<double(double, double)>& g, const WindowView& psi,
    double eps, double K, double x1, double x2, double ds, double tol) {
  if (!(eps > 0.0) || eps > K) throw ConfigError("threshold: need 0 < eps <= K");
  if (!(x1 < x2)) throw ConfigError("threshold: need x1 < x2");
  if (!(ds > 0.0) || !(tol > 0.0)) throw ConfigError("threshold: ds, tol > 0");
  const double h = psi.h();
  detail::GBoundChecker gc{g, eps, K};

  ThresholdCrossing out;
  out.ds = ds;
  out.y.push_back(x2);
  double s = 0.0, y = x2;
  while (s < h - 1e-12 * std::max(1.0, h)) {
    const double step = std::min(ds, h - s);
    const double ynext = detail::rk4_step(gc, psi, s, y, step);
    if (ynext <= x1) {
      // bisect the partial step length; the integrand is smooth inside it
      double loa = 0.0, hib = step;
      while (hib - loa > tol) {
        const double mid = 0.5 * (loa + hib);
        const double ymid = detail::rk4_step(gc, psi, s, y, mid);
        if (ymid <= x1)
          hib = mid;
        else
          loa = mid;
      }
      const double sc = 0.5 * (loa + hib);
      out.s_star = s + sc;
      out.y_star = detail::rk4_step(gc, psi, s, y, sc);
      return out;
    }
    s += step;
    y = ynext;
    out.y.push_back(y);
  }
  // boundary crossing: the precondition h >= (x2-x1)/eps forces the
  // crossing by s = h, so a graze at the end counts as s* = h
  if (y <= x1 + 1e-9 * (x2 - x1)) {
    out.s_star = h;
    out.y_star = y;
    return out;
  }
  throw NoCrossing("threshold_crossing: y(h) = " + std::to_string(y) +
                   " stayed above x1 = " + std::to_string(x1));
}

// Threshold-crossing delay functional. lip_g (the Lipschitz constant of g)
// enters only the lip_hint, assembled from the Gronwall constants
// C = lip_g*sqrt(h)*exp(lip_g*h)*h + lip_g*h, as an upper bound C/eps.
inline DelayFunctional threshold_delay(std::function<double(double, double)> g,
                                       double eps, double K, double x1,
                                       double x2, double h, double lip_g,
                                       double ds, double tol = 1e-10) {
  if (!(eps > 0.0) || eps > K)
    throw ConfigError("threshold_delay: need 0 < eps <= K");
  if (!(x1 < x2)) throw ConfigError("threshold_delay: need x1 < x2");
  if (!(ds > 0.0)) throw ConfigError("threshold_delay: ds must be positive");
  if (h < (x2 - x1) / eps - 1e-12)
    throw ConfigError("threshold_delay: need h >= (x2-x1)/eps to guarantee the crossing");
  DelayFunctional r;
  r.raw = [g = std::move(g), eps, K, x1, x2, ds, tol](const WindowView& w) {
    return -threshold_crossing(g, w, eps, K, x1, x2, ds, tol).s_star;
  };
  r.h = h;
  r.lip_hint = (lip_g * std::sqrt(h) * std::exp(lip_g * h) * h + lip_g * h) / eps;
  return r;
}

// Echo delay: the unique s in [0,h] with c*s = phi(-s) + phi(0) + 2w,
// found by fixed-point iteration (geometric with factor (c-alpha)/c on the
// admissible set). Returns -s.
inline DelayFunctional echo_delay(double w, double w_plus, double c,
                                  double alpha, double tol = 1e-12,
                                  int max_iter = 100000) {
  WAlphaSet set{(2.0 * w + 2.0 * w_plus) / c, alpha, w, w_plus, c};
  set.validate();
  const double h = set.h;
  DelayFunctional r;
  r.raw = [w, c, h, tol, max_iter](const WindowView& win) {
    if (win.dim() != 1)
      throw DimensionMismatch("echo_delay: window must be scalar");
    double s = 0.0;
    for (int it = 0; it < max_iter; ++it) {
      const double sn = (win.eval1(-std::clamp(s, 0.0, win.h())) +
                         win.eval1(0.0) + 2.0 * w) / c;
      if (sn < -1e-9 * h || sn > h * (1.0 + 1e-9))
        throw NonConvergence("echo_delay: iterate left [0,h]; window violates the admissible set");
      const double delta = std::abs(sn - s);
      s = sn;
      if (delta < tol) return -s;
    }
    throw NonConvergence("echo_delay: no fixed point within max_iter");
  };
  r.h = h;
  r.lip_hint = (2.0 / alpha) * (std::sqrt(h) + 1.0 / std::sqrt(h));
  r.validity = ValidityKind::WAlpha;
  return r;
}

struct LipschitzEstimate {
  double max_ratio = 0.0;
  GridFunction phi, psi;  // witness pair
};

// Max over sampled pairs of |r(phi)-r(psi)| / ||phi-psi||_{H1};
// deterministic given the seed.
inline LipschitzEstimate empirical_lipschitz(
    const DelayFunctional& r, const std::function<GridFunction(Rng&)>& sampler,
    int pairs, std::uint64_t seed) {
  if (pairs < 1) throw ConfigError("empirical_lipschitz: pairs >= 1");
  LipschitzEstimate est;
  for (int k = 0; k < pairs; ++k) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(k));
    GridFunction phi = sampler(rng);
    GridFunction psi = sampler(rng);
    const double den = weighted_h1_norm(nodal_difference(phi, psi), 0.0);
    if (den < 1e-300) continue;
    const double ratio = std::abs(r(phi) - r(psi)) / den;
    if (ratio > est.max_ratio) {
      est.max_ratio = ratio;
      est.phi = std::move(phi);
      est.psi = std::move(psi);
    }
  }
  return est;
}

// Constrained sampler for the positioning set: a reflected random walk that
// stays inside the box with slopes within the bound.
inline GridFunction random_walpha_window(const WAlphaSet& set, double dt,
                                         Rng& rng) {
  set.validate();
  const auto m = static_cast<long>(std::llround(set.h / dt));
  std::vector<double> vals(static_cast<size_t>(m) + 1);
  vals[0] = rng.uniform(set.lo(), set.hi());
  for (long i = 0; i < m; ++i) {
    double step = dt * rng.uniform(-set.slope_bound(), set.slope_bound());
    double next = vals[i] + step;
    if (next > set.hi() || next < set.lo()) next = vals[i] - step;  // reflect
    vals[i + 1] = std::clamp(next, set.lo(), set.hi());
  }
  return GridFunction::make(-set.h, 0.0, dt, std::move(vals), 1);
}

}  // namespace sdde
