#pragma once

// Numerical certification of the operator-norm estimates the solver's
// contraction budget is assembled from: the pre-history (window) map, the
// integration operator, the Sobolev embedding constant, and the Poincare
// bound for functions vanishing at 0.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sdde/grid_function.hpp"
#include "sdde/rng.hpp"

namespace sdde {

struct OperatorBoundReport {
  std::string name;
  double rho = 0.0;
  int trials = 0;
  double max_observed_ratio = 0.0;
  double theoretical_bound = 0.0;
  bool pass = false;
  GridFunction witness;  // function achieving the max ratio
};

// ||Theta f|| / ||f|| with ||Theta f||^2 = \int_0^T e^{-2 rho t} W(t) dt,
// W(t) the squared unweighted L2(-h,0) norm of the window at t. For
// piecewise-linear f, W is piecewise cubic with its knots on the grid, so
// the outer integral has a closed form in the exponential moments and the
// certified inequality holds exactly (an outer trapezoid overshoots convex
// integrands by O((rho dt)^2) relative, which spike-like inputs push past
// any 1e-6 slack).
inline double theta_norm_ratio(const GridFunction& f, double rho) {
  if (!(f.a() < 0.0) || !(f.b() > 0.0))
    throw OutOfDomain("theta_norm_ratio: domain must be [-h,T] with h,T > 0");
  const double dt = f.dt();
  const double mh_raw = -f.a() / dt;
  const auto mh = static_cast<long>(std::llround(mh_raw));
  if (std::abs(mh_raw - static_cast<double>(mh)) > 1e-9 * std::max(1.0, mh_raw))
    throw NonIntegralGrid("theta_norm_ratio: h not a multiple of dt");
  const int i0 = static_cast<int>(mh);
  const int N = f.cells();

  // prefix[i] = \int over cells 0..i-1 of |f|^2 (unweighted, exact)
  std::vector<double> prefix(static_cast<size_t>(N) + 1, 0.0);
  for (int i = 0; i < N; ++i) {
    double c = 0.0;
    for (int j = 0; j < f.dim(); ++j) {
      const double p = f.value(i, j), q = f.value(i + 1, j);
      c += (p * p + p * q + q * q) / 3.0;
    }
    prefix[i + 1] = prefix[i] + dt * c;
  }

  double mom[4];
  detail::exp_moments(2.0 * rho, dt, mom);
  double num2 = 0.0;
  for (int i = i0; i < N; ++i) {
    // on [t_i, t_i + u]: W(t_i + u) = W_i + A u + B u^2/2 + C u^3/3 with
    // A, B, C the difference of the |f|^2 cell quadratics entering at the
    // leading edge (cell i) and leaving at the trailing edge (cell i - i0)
    const double Wi = prefix[i] - prefix[i - i0];
    double A = 0.0, B = 0.0, C = 0.0;
    for (int j = 0; j < f.dim(); ++j) {
      const double pl = f.value(i, j), sl = f.slope(i, j);
      const double pt = f.value(i - i0, j), st = f.slope(i - i0, j);
      A += pl * pl - pt * pt;
      B += 2.0 * (pl * sl - pt * st);
      C += sl * sl - st * st;
    }
    if (Wi == 0.0 && A == 0.0 && B == 0.0 && C == 0.0) continue;
    num2 += std::exp(-2.0 * rho * f.node_time(i)) *
            (Wi * mom[0] + A * mom[1] + 0.5 * B * mom[2] + C / 3.0 * mom[3]);
  }
  const double den = weighted_l2_norm(f, rho);
  if (den < 1e-300) throw ZeroFunction("theta_norm_ratio: zero denominator");
  return std::sqrt(std::max(0.0, num2)) / den;
}

// Integration operator on [0,T]; contract: weighted L2 norm shrinks by 1/rho.
inline GridFunction irho_apply(const GridFunction& f, double /*rho*/) {
  return integrate_from_zero(f);
}

namespace detail {

inline void update_report(OperatorBoundReport& r, double ratio,
                          const GridFunction& f) {
  if (ratio > r.max_observed_ratio) {
    r.max_observed_ratio = ratio;
    r.witness = f;
  }
}

}  // namespace detail

// Draws `trials` random functions per family (uniform nodal values plus
// adversarial spikes near t = 0, sampled exponentials exp(rho t), and
// bounded-slope walks; uniform draws sit far from the extremizers) and
// reports the worst observed ratio against each theoretical bound.
inline std::vector<OperatorBoundReport> verify_operator_bounds(
    int trials, std::uint64_t seed, const std::vector<double>& rhos,
    double h = 1.0, double T = 1.0, double dt = 1.0 / 128.0) {
  if (trials < 1) throw ConfigError("verify_operator_bounds: trials >= 1");
  std::vector<OperatorBoundReport> reports;
  const double slack = 1.0 + 1e-6;
  const auto m_pos = static_cast<long>(std::llround(T / dt));
  const int i0 = static_cast<int>(std::llround(h / dt));

  auto draw_full = [&](int t, double rho, Rng& rng) -> GridFunction {
    switch (t % 4) {
      case 0:
        return random_nodal(-h, T, dt, 1, 1.0, rng);
      case 1: {  // spike at/near t = 0
        const int node = i0 + rng.uniform_int(0, 3);
        return spike(-h, T, dt, 1, node, rng.uniform() < 0.5 ? -1.0 : 1.0);
      }
      case 2:
        return sampled_exponential(-h, T, dt, rho > 0.0 ? rho : 1.0);
      default:
        return random_slope_walk(-h, T, dt, 1, 1.0, 1.0, rng);
    }
  };

  std::uint64_t stream_id = 0;
  for (size_t ri = 0; ri < rhos.size(); ++ri) {
    const double rho = rhos[ri];
    OperatorBoundReport theta{"theta", rho, trials, 0.0,
                              1.0 / std::sqrt(2.0 * rho), false, {}};
    OperatorBoundReport irho{"irho", rho, trials, 0.0, 1.0 / rho, false, {}};
    OperatorBoundReport h10{"vanishing_poincare", rho, trials, 0.0, 1.0 / rho,
                            false, {}};
    for (int t = 0; t < trials; ++t) {
      {
        Rng rng = Rng::stream(seed, stream_id + t);
        const GridFunction f = draw_full(t, rho, rng);
        if (weighted_l2_norm(f, rho) >= 1e-300)
          detail::update_report(theta, theta_norm_ratio(f, rho), f);
      }
      {
        Rng rng = Rng::stream(seed, stream_id + trials + t);
        GridFunction f = [&]() -> GridFunction {
          switch (t % 3) {
            case 0:
              return random_nodal(0.0, T, dt, 1, 1.0, rng);
            case 1:
              return sampled_exponential(0.0, T, dt, rho);
            default:
              return random_slope_walk(0.0, T, dt, 1, 1.0, 2.0, rng);
          }
        }();
        const double den = weighted_l2_norm(f, rho);
        if (den >= 1e-300) {
          const double num = weighted_l2_norm(irho_apply(f, rho), rho);
          detail::update_report(irho, num / den, f);
        }
      }
      {
        Rng rng = Rng::stream(seed, stream_id + 2 * trials + t);
        // vanishing at 0: zero-rooted walk, exp(rho t)-1, or an early spike
        GridFunction f = [&]() -> GridFunction {
          switch (t % 3) {
            case 0: {
              std::vector<double> vals(static_cast<size_t>(m_pos) + 1, 0.0);
              for (long i = 0; i < m_pos; ++i)
                vals[i + 1] = vals[i] + dt * rng.uniform(-2.0, 2.0);
              return GridFunction::make(0.0, T, dt, std::move(vals), 1);
            }
            case 1: {
              std::vector<double> vals(static_cast<size_t>(m_pos) + 1);
              for (long i = 0; i <= m_pos; ++i)
                vals[i] = std::exp(rho * (i * dt)) - 1.0;
              return GridFunction::make(0.0, T, dt, std::move(vals), 1);
            }
            default:
              return spike(0.0, T, dt, 1, 1 + rng.uniform_int(0, 2), 1.0);
          }
        }();
        const double den = weighted_derivative_l2_norm(f, rho);
        if (den >= 1e-300)
          detail::update_report(h10, weighted_l2_norm(f, rho) / den, f);
      }
    }
    theta.pass = theta.max_observed_ratio <= theta.theoretical_bound * slack;
    irho.pass = irho.max_observed_ratio <= irho.theoretical_bound * slack;
    h10.pass = h10.max_observed_ratio <= h10.theoretical_bound * slack;
    reports.push_back(std::move(theta));
    reports.push_back(std::move(irho));
    reports.push_back(std::move(h10));
    stream_id += 3 * static_cast<std::uint64_t>(trials);
  }

  // Sobolev embedding constant on [-h,T]; rho-independent, one report.
  OperatorBoundReport sob{"sobolev", 0.0, trials, 0.0,
                          std::sqrt(h + T) + 1.0 / std::sqrt(h + T), false, {}};
  for (int t = 0; t < trials; ++t) {
    Rng rng = Rng::stream(seed, stream_id + t);
    const GridFunction f = draw_full(t, 1.0, rng);
    const double den = weighted_h1_norm(f, 0.0);
    if (den >= 1e-300)
      detail::update_report(sob, f.seminorms().sup_norm / den, f);
  }
  // embedding is exact mathematics; only fp slack needed
  sob.pass = sob.max_observed_ratio <= sob.theoretical_bound * (1.0 + 1e-10);
  reports.push_back(std::move(sob));
  return reports;
}

}  // namespace sdde
