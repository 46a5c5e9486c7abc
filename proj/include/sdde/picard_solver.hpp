#pragma once

// Projected Picard iteration in exponentially weighted H1 norms. The weight
// exp(-2 rho t) makes integration-from-zero a small operator, so one global
// contraction covers [0,T] with no time stepping; the per-node projection
// onto { slopes <= beta } keeps the delay evaluation Lipschitz, and the
// beta-continuation doubles the bound until the projection is provably
// inactive (global solution) or a cap is hit (Lipschitz blow-up).

#include <cmath>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdde/convex_projection.hpp"
#include "sdde/delay_functional.hpp"
#include "sdde/grid_function.hpp"
#include "sdde/rng.hpp"

namespace sdde {

using SddeRhs = std::function<void(double t, std::span<const double> x,
                                   std::span<const double> u,
                                   std::span<double> out)>;
using FdeRhs =
    std::function<void(double t, const WindowView& w, std::span<double> out)>;

struct SddeProblem {
  int n = 1;
  double h = 1.0;
  double T = 1.0;
  SddeRhs g;
  double L_g = 0.0;  // Lipschitz constant of g in (x,u), uniform in t
  DelayFunctional r;
  GridFunction phi;  // pre-history on [-h, 0]
};

struct FdeProblem {
  int n = 1;
  double h = 1.0;
  double T = 1.0;
  FdeRhs G;
  std::function<double(double)> L_of_beta;  // nondecreasing
  GridFunction phi;
};

enum class SolveStatus { Complete, LipschitzBlowup };

struct BetaRound {
  double beta = 0.0;
  double t_beta = 0.0;  // horizon reached before the slope hit beta
  int iterations = 0;
};

struct SolveReport {
  GridFunction solution;  // on [-h, solved_T]
  double solved_T = 0.0;
  SolveStatus status = SolveStatus::Complete;
  std::vector<BetaRound> beta_trace;
  double rho_used = 0.0;
  std::vector<double> contraction_ratios;  // successive-difference ratios
  double residual_sup = 0.0;
  double apriori_margin = 0.0;
  std::vector<std::string> warnings;
};

struct SolveOptions {
  double dt = 1e-3;
  double tol = 1e-10;  // in the rho-weighted H1 norm
  double target_q = 0.5;
  std::optional<double> beta0;
  double beta_max = 1e6;
  std::optional<double> rho;  // override; otherwise from choose_rho
  int max_picard = 500;
  double proj_tol = 1e-10;
};

inline double contraction_budget(double L, double window_factor, double rho) {
  return L * (1.0 / rho + window_factor / std::sqrt(2.0 * rho));
}

namespace detail {

inline double choose_rho_for(double L, double window_factor, double target_q) {
  const double floor_rho = 1e-6;
  if (!(target_q > 0.0 && target_q < 1.0))
    throw ConfigError("choose_rho: target_q must lie in (0,1)");
  if (L <= 0.0 || contraction_budget(L, window_factor, floor_rho) <= target_q)
    return floor_rho;
  double lo = floor_rho, hi = 1.0;
  while (contraction_budget(L, window_factor, hi) > target_q) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e300) return hi;
  }
  while (hi - lo > 1e-6 * hi) {
    const double mid = 0.5 * (lo + hi);
    if (contraction_budget(L, window_factor, mid) <= target_q)
      hi = mid;
    else
      lo = mid;
  }
  return std::max(hi, floor_rho);
}

}  // namespace detail

// Smallest rho whose contraction budget
//   q(rho) = L (1/rho + (2 sqrt(h) + beta lip_r + 1/sqrt(h)) / sqrt(2 rho))
// stays below target_q (bisection to 1e-6 relative).
inline double choose_rho(double L, double h, double beta, double lip_r,
                         double target_q = 0.5) {
  const double W = 2.0 * std::sqrt(h) + beta * lip_r + 1.0 / std::sqrt(h);
  return detail::choose_rho_for(L, W, target_q);
}

namespace detail {

struct PicardGrid {
  double h, T, dt;
  int mh, i0, N, n;
};

inline int integral_count(double len, double dt, const char* what) {
  const double raw = len / dt;
  const auto k = static_cast<long>(std::llround(raw));
  if (k < 1 || std::abs(raw - static_cast<double>(k)) > 1e-9 * std::max(1.0, raw))
    throw ConfigError(std::string(what) + " is not an integer multiple of dt");
  return static_cast<int>(k);
}

inline PicardGrid make_picard_grid(double h, double T, double dt, int n) {
  PicardGrid g;
  g.h = h;
  g.T = T;
  g.dt = dt;
  g.n = n;
  g.mh = integral_count(h, dt, "h");
  g.i0 = g.mh;
  g.N = g.mh + integral_count(T, dt, "T");
  return g;
}

inline void check_phi_alignment(const GridFunction& phi, const PicardGrid& g) {
  if (phi.dim() != g.n) throw ConfigError("phi has wrong dimension");
  if (phi.cells() != g.mh ||
      std::abs(phi.a() + g.h) > 1e-9 * std::max(1.0, g.h) ||
      std::abs(phi.b()) > 1e-9 * std::max(1.0, g.h) ||
      std::abs(phi.dt() - g.dt) > 1e-12 * g.dt)
    throw ConfigError("phi grid is misaligned with dt/h");
}

// winmax[i] = max slope norm over cells [i - mh, i - 1] (monotone deque).
inline void window_slope_max(const std::vector<double>& cell_slopes, int mh,
                             int i0, std::vector<double>& winmax) {
  const int N = static_cast<int>(cell_slopes.size());
  winmax.assign(static_cast<size_t>(N) + 1, 0.0);
  std::deque<int> dq;
  for (int j = 0; j < N; ++j) {
    while (!dq.empty() && cell_slopes[dq.back()] <= cell_slopes[j]) dq.pop_back();
    dq.push_back(j);
    const int anchor = j + 1;
    while (dq.front() < anchor - mh) dq.pop_front();
    if (anchor >= i0) winmax[anchor] = cell_slopes[dq.front()];
  }
}

// One application of the projected Picard map onto rhs values; the window
// at each node is projected onto { slopes <= beta } only when its Lipschitz
// seminorm actually exceeds beta (in the admissible regime the projection
// is the identity and this path never allocates).
template <class RhsAtNode>
void eval_rhs_nodes(const PicardGrid& grid, const GridFunction& zf, double beta,
                    double proj_tol, RhsAtNode&& rhs_at,
                    std::vector<double>& rhsvals) {
  const int n = grid.n;
  rhsvals.assign(static_cast<size_t>(grid.N + 1) * n, 0.0);
  std::vector<double> cell_slopes(grid.N);
  for (int i = 0; i < grid.N; ++i) cell_slopes[i] = zf.slope_norm(i);
  std::vector<double> winmax;
  window_slope_max(cell_slopes, grid.mh, grid.i0, winmax);
  const double beta_slack = beta * (1.0 + 1e-12);
  for (int i = grid.i0; i <= grid.N; ++i) {
    const double t = zf.node_time(i);
    double* out = &rhsvals[static_cast<size_t>(i) * n];
    const double* zrow = &zf.values()[static_cast<size_t>(i) * n];
    if (winmax[i] <= beta_slack) {
      WindowView win(zf, i, grid.mh);
      rhs_at(t, win, zrow, out);
    } else {
      WindowView raw(zf, i, grid.mh);
      GridFunction proj =
          project_vbeta(raw.materialize(), beta, proj_tol).projected;
      rhs_at(t, as_window(proj), zrow, out);
    }
  }
}

struct EngineResult {
  std::vector<double> y;
  int iterations = 0;
  std::vector<double> ratios;
};

template <class RhsAtNode>
EngineResult picard_loop(const PicardGrid& grid, const GridFunction& phihat,
                         double beta, double rho, double q, double tol,
                         int max_iter, double proj_tol, RhsAtNode&& rhs_at,
                         const std::vector<double>* y_start) {
  const int n = grid.n;
  const size_t total = static_cast<size_t>(grid.N + 1) * n;
  EngineResult res;
  res.y.assign(total, 0.0);
  if (y_start) {
    if (y_start->size() != total)
      throw DimensionMismatch("picard_loop: bad initial iterate size");
    res.y = *y_start;
    for (int i = 0; i <= grid.i0; ++i)
      for (int j = 0; j < n; ++j) res.y[static_cast<size_t>(i) * n + j] = 0.0;
  }
  const double qe = std::clamp(q, 1e-12, 0.95);
  const double threshold = tol * (1.0 - qe) / qe;

  std::vector<double> zvals(total), rhsvals, ynew(total), diff(total);
  double d_prev = -1.0;
  bool converged = false;
  for (int k = 1; k <= max_iter; ++k) {
    for (size_t idx = 0; idx < total; ++idx)
      zvals[idx] = res.y[idx] + phihat.values()[idx];
    GridFunction zf = GridFunction::make(-grid.h, grid.T, grid.dt, zvals, n);
    eval_rhs_nodes(grid, zf, beta, proj_tol, rhs_at, rhsvals);

    std::fill(ynew.begin(), ynew.end(), 0.0);
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int i = grid.i0; i < grid.N; ++i) {
        acc += 0.5 * grid.dt *
               (rhsvals[static_cast<size_t>(i) * n + j] +
                rhsvals[static_cast<size_t>(i + 1) * n + j]);
        ynew[static_cast<size_t>(i + 1) * n + j] = acc;
      }
    }

    for (size_t idx = 0; idx < total; ++idx) diff[idx] = ynew[idx] - res.y[idx];
    GridFunction df = GridFunction::make(-grid.h, grid.T, grid.dt, diff, n);
    const double d = weighted_h1_norm(df, rho);

    if (k >= 2 && d_prev > 1e-300) res.ratios.push_back(d / d_prev);
    res.y.swap(ynew);
    res.iterations = k;
    if (d == 0.0 || d <= threshold) {
      converged = true;
      break;
    }
    d_prev = d;
  }
  if (!converged)
    throw MaxIterExceeded(
        "picard_loop: weighted difference did not reach the geometric "
        "stopping bound; the contraction estimate is likely violated at this "
        "discretization");
  return res;
}

inline GridFunction assemble_solution(const PicardGrid& grid,
                                      const GridFunction& phihat,
                                      const std::vector<double>& y) {
  std::vector<double> vals(y.size());
  for (size_t idx = 0; idx < y.size(); ++idx)
    vals[idx] = y[idx] + phihat.values()[idx];
  return GridFunction::make(-grid.h, grid.T, grid.dt, std::move(vals), grid.n);
}

inline void sampled_lipschitz_check(const SddeProblem& p) {
  Rng rng(0x481);
  const double R = p.phi.seminorms().sup_norm + 1.0;
  std::vector<double> x(p.n), y(p.n), u(p.n), v(p.n), gx(p.n), gy(p.n);
  for (int trial = 0; trial < 64; ++trial) {
    const double t = rng.uniform(0.0, p.T);
    double dx = 0.0, du = 0.0;
    for (int j = 0; j < p.n; ++j) {
      x[j] = rng.uniform(-R, R);
      y[j] = rng.uniform(-R, R);
      u[j] = rng.uniform(-R, R);
      v[j] = rng.uniform(-R, R);
      dx += sq(x[j] - y[j]);
      du += sq(u[j] - v[j]);
    }
    p.g(t, x, u, gx);
    p.g(t, y, v, gy);
    double dg = 0.0;
    for (int j = 0; j < p.n; ++j) dg += sq(gx[j] - gy[j]);
    const double bound = p.L_g * (std::sqrt(dx) + std::sqrt(du));
    if (std::sqrt(dg) > bound * (1.0 + 1e-9) + 1e-14)
      throw ConfigError("sampled check failed: g is not L_g-Lipschitz in the spatial arguments");
  }
}

inline double rhs_norm_at_phi(const SddeProblem& p) {
  WindowView w = as_window(p.phi);
  const double tau = p.r(w);
  std::vector<double> u = w.eval(tau);
  std::vector<double> x = w.eval(0.0);
  std::vector<double> out(p.n);
  p.g(0.0, x, u, out);
  double s = 0.0;
  for (double o : out) s += sq(o);
  return std::sqrt(s);
}

// rho values beyond this make exp(-2 rho T) underflow past 1e-280 and the
// weighted norm blind to late times.
inline double rho_cap(double T) { return 280.0 * std::log(10.0) / (2.0 * T); }

}  // namespace detail

// One application of the projected fixed-point map F to an iterate y
// (zero on [-h,0]).
inline GridFunction picard_apply(const GridFunction& y, const SddeProblem& p,
                                 double beta, double proj_tol = 1e-10) {
  const auto grid = detail::make_picard_grid(p.h, p.T, y.dt(), p.n);
  detail::check_phi_alignment(p.phi, grid);
  if (y.cells() != grid.N)
    throw ConfigError("picard_apply: y grid does not span [-h,T]");
  for (int i = 0; i <= grid.i0; ++i)
    for (int j = 0; j < p.n; ++j)
      if (y.value(i, j) != 0.0)
        throw ConfigError("picard_apply: y must vanish on [-h,0]");
  const GridFunction phihat = extend_constant(p.phi, p.T);
  std::vector<double> zvals(y.values().size());
  for (size_t idx = 0; idx < zvals.size(); ++idx)
    zvals[idx] = y.values()[idx] + phihat.values()[idx];
  GridFunction zf = GridFunction::make(-p.h, p.T, grid.dt, std::move(zvals), p.n);

  std::vector<double> u(p.n), rhsvals;
  auto rhs_at = [&](double t, const WindowView& win, const double* zrow,
                    double* out) {
    const double tau = p.r(win);
    win.eval_into(tau, u.data());
    p.g(t, std::span<const double>(zrow, p.n), u, std::span<double>(out, p.n));
  };
  detail::eval_rhs_nodes(grid, zf, beta, proj_tol, rhs_at, rhsvals);
  GridFunction rhs = GridFunction::make(-p.h, p.T, grid.dt, std::move(rhsvals), p.n);
  return integrate_from_zero(rhs);
}

struct PicardResult {
  GridFunction y;
  int iterations = 0;
  std::vector<double> ratios;
};

// Iterates y_{k+1} = F(y_k) from y0 (default 0) until the a-posteriori
// geometric bound ||y_{k+1}-y_k|| <= tol (1-q)/q holds in the rho-weighted
// H1 norm.
inline PicardResult picard_solve_projected(const SddeProblem& p, double beta,
                                           double rho, double tol = 1e-10,
                                           int max_iter = 500,
                                           const GridFunction* y0 = nullptr,
                                           double dt = 1e-3) {
  const auto grid =
      detail::make_picard_grid(p.h, p.T, y0 ? y0->dt() : dt, p.n);
  detail::check_phi_alignment(p.phi, grid);
  const GridFunction phihat = extend_constant(p.phi, p.T);
  const double q = contraction_budget(
      p.L_g, 2.0 * std::sqrt(p.h) + beta * p.r.lip_hint + 1.0 / std::sqrt(p.h),
      rho);
  std::vector<double> u(p.n);
  auto rhs_at = [&](double t, const WindowView& win, const double* zrow,
                    double* out) {
    const double tau = p.r(win);
    win.eval_into(tau, u.data());
    p.g(t, std::span<const double>(zrow, p.n), u, std::span<double>(out, p.n));
  };
  const std::vector<double>* ystart = y0 ? &y0->values() : nullptr;
  auto res = detail::picard_loop(grid, phihat, beta, rho, q, tol, max_iter,
                                 1e-10, rhs_at, ystart);
  GridFunction yf =
      GridFunction::make(-p.h, p.T, grid.dt, std::move(res.y), p.n);
  return {std::move(yf), res.iterations, std::move(res.ratios)};
}

namespace detail {

// Shared continuation loop. g0_norm is ||rhs at the pre-history||, the
// strict-inequality threshold for beta0; the contraction budget uses
// L (1/rho + W/sqrt(2 rho)) with W = 2 sqrt(h) + beta lip_r + 1/sqrt(h) for
// the delay form and W = 1 for the functional form.
template <class RhsAtNode>
SolveReport continuation_solve(const PicardGrid& grid, const GridFunction& phi,
                               const SolveOptions& opts, RhsAtNode&& rhs_at,
                               double g0_norm, double lip_r, double L_sdde,
                               const std::function<double(double)>& L_of_beta,
                               bool fde_budget) {
  SolveReport report;
  const GridFunction phihat = extend_constant(phi, grid.T);

  double beta = opts.beta0.value_or(0.0);
  if (!opts.beta0) {
    // 1.25 headroom over the strict-inequality threshold
    beta = 1.25 * std::max(phi.seminorms().lip_seminorm, g0_norm);
    beta = std::max(beta, 1e-6);
  }
  if (!(beta > 0.0)) throw ConfigError("solve: beta0 must be positive");

  bool complete = false;
  GridFunction x;
  EngineResult last;
  double rho = 0.0;
  while (true) {
    const double L = fde_budget ? L_of_beta(beta) : L_sdde;
    const double W = fde_budget ? 1.0
                                : 2.0 * std::sqrt(grid.h) + beta * lip_r +
                                      1.0 / std::sqrt(grid.h);
    if (opts.rho) {
      rho = *opts.rho;
    } else {
      rho = detail::choose_rho_for(L, W, opts.target_q);
      const double cap = detail::rho_cap(grid.T);
      if (rho > cap) {
        rho = cap;
        report.warnings.push_back(
            "rho capped at " + std::to_string(cap) +
            "; contraction budget q = " +
            std::to_string(contraction_budget(L, W, rho)) +
            " exceeds target_q at this beta");
      }
    }
    if (std::exp(-2.0 * rho * grid.T) < 1e-280)
      report.warnings.push_back(
          "exp(-2 rho T) underflows 1e-280; weighted norms are blind to late times");
    const double q = contraction_budget(L, W, rho);

    last = detail::picard_loop(grid, phihat, beta, rho, q, opts.tol,
                               opts.max_picard, opts.proj_tol, rhs_at, nullptr);
    x = assemble_solution(grid, phihat, last.y);

    // scan the solution slopes on [0,T]
    int first_hit = -1;
    for (int i = grid.i0; i < grid.N; ++i) {
      if (x.slope_norm(i) >= beta * (1.0 - 1e-9)) {
        first_hit = i;
        break;
      }
    }
    if (first_hit < 0) {
      report.beta_trace.push_back({beta, grid.T, last.iterations});
      complete = true;
      break;
    }
    const double t_beta = x.node_time(first_hit);
    report.beta_trace.push_back({beta, t_beta, last.iterations});
    beta *= 2.0;
    if (beta > opts.beta_max) break;
  }

  report.rho_used = rho;
  report.contraction_ratios = last.ratios;
  if (complete) {
    report.status = SolveStatus::Complete;
    report.solved_T = grid.T;
    report.solution = std::move(x);
  } else {
    report.status = SolveStatus::LipschitzBlowup;
    report.solved_T = report.beta_trace.back().t_beta;
    const int keep =
        grid.i0 + static_cast<int>(std::llround(report.solved_T / grid.dt));
    if (keep <= grid.i0) {
      report.solved_T = 0.0;
      report.solution = phi;
    } else {
      std::vector<double> vals(x.values().begin(),
                               x.values().begin() +
                                   static_cast<size_t>(keep + 1) * grid.n);
      report.solution = GridFunction::make(-grid.h, report.solved_T, grid.dt,
                                           std::move(vals), grid.n);
    }
  }
  return report;
}

}  // namespace detail

// Max over interior nodes of || central-difference slope - g(t, x(t),
// x(t + r(x_(t)))) ||; windows unprojected.
inline double residual(const GridFunction& x, const SddeProblem& p) {
  const auto grid = detail::make_picard_grid(p.h, x.b(), x.dt(), p.n);
  std::vector<double> u(p.n), gv(p.n);
  double worst = 0.0;
  for (int i = grid.i0 + 1; i < grid.N; ++i) {
    WindowView win(x, i, grid.mh);
    const double tau = p.r(win);
    win.eval_into(tau, u.data());
    p.g(x.node_time(i),
        std::span<const double>(&x.values()[static_cast<size_t>(i) * p.n], p.n),
        u, gv);
    double err = 0.0;
    for (int j = 0; j < p.n; ++j) {
      const double slope_c =
          (x.value(i + 1, j) - x.value(i - 1, j)) / (2.0 * x.dt());
      err += detail::sq(slope_c - gv[j]);
    }
    worst = std::max(worst, std::sqrt(err));
  }
  return worst;
}

inline double residual(const GridFunction& x, const FdeProblem& p) {
  const auto grid = detail::make_picard_grid(p.h, x.b(), x.dt(), p.n);
  std::vector<double> gv(p.n);
  double worst = 0.0;
  for (int i = grid.i0 + 1; i < grid.N; ++i) {
    WindowView win(x, i, grid.mh);
    p.G(x.node_time(i), win, gv);
    double err = 0.0;
    for (int j = 0; j < p.n; ++j) {
      const double slope_c =
          (x.value(i + 1, j) - x.value(i - 1, j)) / (2.0 * x.dt());
      err += detail::sq(slope_c - gv[j]);
    }
    worst = std::max(worst, std::sqrt(err));
  }
  return worst;
}

struct AprioriCheck {
  double margin = 0.0;
  bool pass = false;
};

// Exponential bound ||x(t)|| <= (||phi||_inf + \int_0^t ||g(s,0,0)||) e^{2Lt}.
inline AprioriCheck apriori_bound_check(const GridFunction& x,
                                        const SddeProblem& p) {
  const auto grid = detail::make_picard_grid(p.h, x.b(), x.dt(), p.n);
  const double phi_sup = p.phi.seminorms().sup_norm;
  std::vector<double> zero(p.n, 0.0), gv(p.n);
  double integral = 0.0, margin = std::numeric_limits<double>::infinity();
  double prev_norm = 0.0, bound_end = 0.0;
  for (int i = grid.i0; i <= grid.N; ++i) {
    p.g(x.node_time(i), zero, zero, gv);
    double gn = 0.0;
    for (double v : gv) gn += detail::sq(v);
    gn = std::sqrt(gn);
    if (i > grid.i0) integral += 0.5 * x.dt() * (prev_norm + gn);
    prev_norm = gn;
    const double bound =
        (phi_sup + integral) * std::exp(2.0 * p.L_g * x.node_time(i));
    bound_end = bound;
    margin = std::min(margin, bound - x.node_norm(i));
  }
  return {margin, margin >= -1e-9 * bound_end};
}

inline AprioriCheck apriori_bound_check(const GridFunction& x,
                                        const FdeProblem& p, double L) {
  const auto grid = detail::make_picard_grid(p.h, x.b(), x.dt(), p.n);
  const double phi_sup = p.phi.seminorms().sup_norm;
  GridFunction zero_window =
      GridFunction::constant(-p.h, 0.0, x.dt(), std::vector<double>(p.n, 0.0));
  std::vector<double> gv(p.n);
  double integral = 0.0, margin = std::numeric_limits<double>::infinity();
  double prev_norm = 0.0, bound_end = 0.0;
  for (int i = grid.i0; i <= grid.N; ++i) {
    p.G(x.node_time(i), as_window(zero_window), gv);
    double gn = 0.0;
    for (double v : gv) gn += detail::sq(v);
    gn = std::sqrt(gn);
    if (i > grid.i0) integral += 0.5 * x.dt() * (prev_norm + gn);
    prev_norm = gn;
    const double bound = (phi_sup + integral) * std::exp(2.0 * L * x.node_time(i));
    bound_end = bound;
    margin = std::min(margin, bound - x.node_norm(i));
  }
  return {margin, margin >= -1e-9 * bound_end};
}

// Largest grid node T_eps with
//   sup_{s in [-h,0]} ||x(s+t) - phi(s)|| + ||x'(t) - g(0,phi(0),phi(r(phi)))||
// <= eps on [0, T_eps] (forward-difference slope).
inline double permanence_teps(const GridFunction& x, const SddeProblem& p,
                              double eps) {
  if (!(eps > 0.0)) throw OutOfRange("permanence_teps: eps must be positive");
  const auto grid = detail::make_picard_grid(p.h, x.b(), x.dt(), p.n);
  WindowView phiw = as_window(p.phi);
  const double tau = p.r(phiw);
  std::vector<double> u = phiw.eval(tau);
  std::vector<double> x0 = phiw.eval(0.0);
  std::vector<double> g0(p.n);
  p.g(0.0, x0, u, g0);

  int last_ok = grid.i0 - 1;
  for (int i = grid.i0; i < grid.N; ++i) {
    double sup = 0.0;
    for (int k = 0; k <= grid.mh; ++k) {
      double d2 = 0.0;
      for (int j = 0; j < p.n; ++j)
        d2 += detail::sq(x.value(i - grid.mh + k, j) - p.phi.value(k, j));
      sup = std::max(sup, std::sqrt(d2));
    }
    double sl = 0.0;
    for (int j = 0; j < p.n; ++j)
      sl += detail::sq((x.value(i + 1, j) - x.value(i, j)) / x.dt() - g0[j]);
    if (sup + std::sqrt(sl) <= eps)
      last_ok = i;
    else
      break;
  }
  if (last_ok < grid.i0) return 0.0;
  if (last_ok == grid.N - 1) return x.b();
  return x.node_time(last_ok);
}

inline SolveReport solve_sdde(const SddeProblem& p, const SolveOptions& opts) {
  const auto grid = detail::make_picard_grid(p.h, p.T, opts.dt, p.n);
  detail::check_phi_alignment(p.phi, grid);
  if (!std::isfinite(p.r.lip_hint))
    throw ConfigError("delay functional needs a finite Lipschitz hint");
  if (std::abs(p.r.h - p.h) > 1e-9 * std::max(1.0, p.h))
    throw ConfigError("delay functional horizon disagrees with the problem h");
  detail::sampled_lipschitz_check(p);

  std::vector<double> u(p.n);
  auto rhs_at = [&](double t, const WindowView& win, const double* zrow,
                    double* out) {
    const double tau = p.r(win);
    win.eval_into(tau, u.data());
    p.g(t, std::span<const double>(zrow, p.n), u, std::span<double>(out, p.n));
  };
  const double g0 = detail::rhs_norm_at_phi(p);
  static const std::function<double(double)> kNoL = [](double) { return 0.0; };
  SolveReport report = detail::continuation_solve(grid, p.phi, opts, rhs_at,
                                                  g0, p.r.lip_hint, p.L_g,
                                                  kNoL, false);
  report.residual_sup = residual(report.solution, p);
  report.apriori_margin = apriori_bound_check(report.solution, p).margin;
  return report;
}

inline SolveReport solve_fde(const FdeProblem& p, const SolveOptions& opts) {
  const auto grid = detail::make_picard_grid(p.h, p.T, opts.dt, p.n);
  detail::check_phi_alignment(p.phi, grid);
  for (double b : {0.5, 1.0, 2.0, 4.0, 8.0})
    if (p.L_of_beta(2.0 * b) < p.L_of_beta(b))
      throw ConfigError("L_of_beta must be nondecreasing");

  auto rhs_at = [&](double t, const WindowView& win, const double* /*zrow*/,
                    double* out) { p.G(t, win, std::span<double>(out, p.n)); };
  auto g_at_phi = [&]() {
    std::vector<double> out(p.n);
    p.G(0.0, as_window(p.phi), out);
    double s = 0.0;
    for (double v : out) s += detail::sq(v);
    return std::sqrt(s);
  };
  const double g0 = g_at_phi();
  SolveReport report = detail::continuation_solve(grid, p.phi, opts, rhs_at,
                                                  g0, 0.0, 0.0, p.L_of_beta,
                                                  true);
  report.residual_sup = residual(report.solution, p);
  const double beta_final = report.beta_trace.back().beta;
  report.apriori_margin =
      apriori_bound_check(report.solution, p, p.L_of_beta(beta_final)).margin;
  return report;
}

struct DependenceStudy {
  double sup_diff = 0.0;
  double ratio = 0.0;
};

// Solves the same problem with pre-histories phi and psi and reports the
// sup distance of the two solutions over [0,T] against ||phi-psi||_inf.
inline DependenceStudy continuous_dependence_study(const SddeProblem& p,
                                                   const GridFunction& phi,
                                                   const GridFunction& psi,
                                                   const SolveOptions& opts) {
  SddeProblem a = p;
  a.phi = phi;
  SddeProblem b = p;
  b.phi = psi;
  const SolveReport ra = solve_sdde(a, opts);
  const SolveReport rb = solve_sdde(b, opts);
  const auto grid = detail::make_picard_grid(p.h, p.T, opts.dt, p.n);
  double sup = 0.0;
  for (int i = grid.i0; i <= grid.N; ++i) {
    double d2 = 0.0;
    for (int j = 0; j < p.n; ++j)
      d2 += detail::sq(ra.solution.value(i, j) - rb.solution.value(i, j));
    sup = std::max(sup, std::sqrt(d2));
  }
  double dphi = 0.0;
  for (int i = 0; i <= phi.cells(); ++i) {
    double d2 = 0.0;
    for (int j = 0; j < p.n; ++j)
      d2 += detail::sq(phi.value(i, j) - psi.value(i, j));
    dphi = std::max(dphi, std::sqrt(d2));
  }
  return {sup, dphi > 0.0 ? sup / dphi : 0.0};
}

}  // namespace sdde
