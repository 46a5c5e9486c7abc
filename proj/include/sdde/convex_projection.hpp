#pragma once

// Metric projection in the discrete H1(-h,0) inner product onto the two
// convex sets the solution theory needs: slopes bounded by beta (per-cell
// Euclidean balls, solved by accelerated projected gradient) and the
// positioning set (value box plus slope bound, solved by ADMM with two
// clamp blocks and a tridiagonal solve per iteration). Compositions
// f o P_C extend Lipschitz maps from C to the whole space with the same
// Lipschitz constant.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "sdde/grid_function.hpp"
#include "sdde/rng.hpp"

namespace sdde {

struct VBetaSet {
  double h = 1.0;
  double beta = 1.0;

  bool contains(const GridFunction& phi) const {
    return phi.seminorms().lip_seminorm <= beta + 1e-12 * std::max(1.0, beta);
  }
};

struct WAlphaSet {
  double h = 1.0;
  double alpha = 0.1;
  double w = 1.0;
  double w_plus = 1.0;
  double c = 1.0;

  void validate() const {
    if (!(alpha > 0.0) || alpha >= std::min({c, w, w_plus}))
      throw EmptySetParameters("WAlphaSet: need 0 < alpha < min{c, w, w+}");
  }

  double lo() const { return -w + alpha; }
  double hi() const { return w_plus - alpha; }
  double slope_bound() const { return c - alpha; }

  bool contains(const GridFunction& phi) const {
    if (phi.dim() != 1) return false;
    const double box_tol = 1e-12 * std::max({1.0, w, w_plus});
    for (int i = 0; i <= phi.cells(); ++i) {
      const double v = phi.value(i);
      if (v < lo() - box_tol || v > hi() + box_tol) return false;
    }
    return phi.seminorms().lip_seminorm <=
           slope_bound() + 1e-12 * std::max(1.0, slope_bound());
  }
};

struct ProjectionResult {
  GridFunction projected;
  int iterations = 0;
  double kkt_residual = 0.0;
  bool active = false;  // input was already a member, returned unchanged
};

namespace detail {

// Quadratic machinery for the V_beta projection in the coordinates
// (v0, d_1..d_m) = (left nodal value, cell slope vectors). The objective is
// the squared H1 distance to phi; the constraint set is a product of
// per-cell balls ||d_i|| <= beta with v0 free.
struct VBetaQuadratic {
  int m, n;
  double dt;
  std::vector<double> phi_nodes;   // (m+1)*n
  std::vector<double> phi_slopes;  // m*n

  explicit VBetaQuadratic(const GridFunction& phi)
      : m(phi.cells()), n(phi.dim()), dt(phi.dt()), phi_nodes(phi.values()) {
    phi_slopes.resize(static_cast<size_t>(m) * n);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        phi_slopes[static_cast<size_t>(i) * n + j] = phi.slope(i, j);
  }

  size_t size() const { return static_cast<size_t>(m + 1) * n; }

  // nodes z(u); u layout: [v0 | d_1 | ... | d_m]
  void nodes(const std::vector<double>& u, std::vector<double>& z) const {
    z.resize(size());
    for (int j = 0; j < n; ++j) z[j] = u[j];
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        z[(i + 1) * static_cast<size_t>(n) + j] =
            z[i * static_cast<size_t>(n) + j] + dt * u[(i + 1) * static_cast<size_t>(n) + j];
  }

  double objective(const std::vector<double>& u, bool against_phi) const {
    std::vector<double> z;
    nodes(u, z);
    double q = 0.0;
    for (int i = 0; i < m; ++i) {
      double c0 = 0.0, c1 = 0.0, c2 = 0.0, sd = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p = z[i * static_cast<size_t>(n) + j] -
                         (against_phi ? phi_nodes[i * static_cast<size_t>(n) + j] : 0.0);
        const double q1 = z[(i + 1) * static_cast<size_t>(n) + j] -
                          (against_phi ? phi_nodes[(i + 1) * static_cast<size_t>(n) + j] : 0.0);
        const double ds = u[(i + 1) * static_cast<size_t>(n) + j] -
                          (against_phi ? phi_slopes[i * static_cast<size_t>(n) + j] : 0.0);
        c0 += p * p;
        c1 += p * q1;
        c2 += q1 * q1;
        sd += ds * ds;
      }
      q += dt / 3.0 * (c0 + c1 + c2) + dt * sd;
    }
    return q;
  }

  // gradient of the objective at u (against phi when requested)
  void gradient(const std::vector<double>& u, bool against_phi,
                std::vector<double>& g) const {
    std::vector<double> z;
    nodes(u, z);
    std::vector<double> e(size());
    for (size_t k = 0; k < size(); ++k)
      e[k] = z[k] - (against_phi ? phi_nodes[k] : 0.0);
    // mass-matrix gradient with respect to the nodal error
    std::vector<double> ge(size(), 0.0);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        const double ei = e[i * static_cast<size_t>(n) + j];
        const double ej = e[(i + 1) * static_cast<size_t>(n) + j];
        ge[i * static_cast<size_t>(n) + j] += dt / 3.0 * (2.0 * ei + ej);
        ge[(i + 1) * static_cast<size_t>(n) + j] += dt / 3.0 * (2.0 * ej + ei);
      }
    }
    g.assign(size(), 0.0);
    // v0 sees every node; d_k sees nodes k..m plus its own stiffness term
    std::vector<double> suffix(static_cast<size_t>(n), 0.0);
    for (int i = m; i >= 1; --i) {
      for (int j = 0; j < n; ++j) {
        suffix[j] += ge[i * static_cast<size_t>(n) + j];
        const double ds = u[i * static_cast<size_t>(n) + j] -
                          (against_phi ? phi_slopes[(i - 1) * static_cast<size_t>(n) + j] : 0.0);
        g[i * static_cast<size_t>(n) + j] = dt * suffix[j] + 2.0 * dt * ds;
      }
    }
    for (int j = 0; j < n; ++j) g[j] = suffix[j] + ge[j];
  }

  // Largest Hessian eigenvalue by power iteration (the map u -> grad(u)
  // with phi = 0 is the Hessian).
  double lipschitz_constant(Rng& rng) const {
    std::vector<double> u(size()), g;
    for (auto& v : u) v = rng.uniform(-1.0, 1.0);
    double lam = 1.0;
    for (int it = 0; it < 80; ++it) {
      gradient(u, false, g);
      double norm = 0.0;
      for (double v : g) norm += v * v;
      norm = std::sqrt(norm);
      if (norm < 1e-300) break;
      double newlam = norm;
      for (size_t k = 0; k < u.size(); ++k) u[k] = g[k] / norm;
      if (it > 20 && std::abs(newlam - lam) < 1e-4 * lam) {
        lam = newlam;
        break;
      }
      lam = newlam;
    }
    return lam * 1.05;
  }

  void clamp_balls(std::vector<double>& u, double beta) const {
    for (int i = 1; i <= m; ++i) {
      double s2 = 0.0;
      for (int j = 0; j < n; ++j) s2 += sq(u[i * static_cast<size_t>(n) + j]);
      const double s = std::sqrt(s2);
      if (s > beta) {
        const double f = beta / s;
        for (int j = 0; j < n; ++j) u[i * static_cast<size_t>(n) + j] *= f;
      }
    }
  }
};

inline void thomas_factor(std::vector<double>& diag,
                          const std::vector<double>& off) {
  const size_t n = diag.size();
  for (size_t i = 1; i < n; ++i) diag[i] -= off[i - 1] * off[i - 1] / diag[i - 1];
}

// Solves the SPD tridiagonal system given the modified diagonal from
// thomas_factor (LDL^T without storing L explicitly).
inline void thomas_solve(const std::vector<double>& fdiag,
                         const std::vector<double>& off, std::vector<double>& x) {
  const size_t n = fdiag.size();
  for (size_t i = 1; i < n; ++i) x[i] -= off[i - 1] / fdiag[i - 1] * x[i - 1];
  x[n - 1] /= fdiag[n - 1];
  for (size_t i = n - 1; i-- > 0;) x[i] = x[i] / fdiag[i] - off[i] / fdiag[i] * x[i + 1];
}

}  // namespace detail

// H1 projection onto { slopes bounded by beta }. Accelerated projected
// gradient (monotone-restart FISTA) with step 1/L from power iteration;
// stops when the gradient-mapping norm drops below tol. Inputs already in
// the set are returned unchanged.
inline ProjectionResult project_vbeta(const GridFunction& phi, double beta,
                                      double tol = 1e-10, int max_iter = 100000) {
  if (!(beta > 0.0)) throw OutOfRange("project_vbeta: beta must be positive");
  if (!(tol > 0.0)) throw OutOfRange("project_vbeta: tol must be positive");
  VBetaSet set{-phi.a(), beta};
  if (set.contains(phi)) return {phi, 0, 0.0, true};

  detail::VBetaQuadratic qp(phi);
  const int n = qp.n;

  // start from the input's own (v0, slopes), slopes clamped
  std::vector<double> x(qp.size());
  for (int j = 0; j < n; ++j) x[j] = phi.value(0, j);
  for (int i = 1; i <= qp.m; ++i)
    for (int j = 0; j < n; ++j)
      x[i * static_cast<size_t>(n) + j] = phi.slope(i - 1, j);
  qp.clamp_balls(x, beta);

  Rng rng(0x5dde);
  const double L = qp.lipschitz_constant(rng);
  const double step = 1.0 / L;

  std::vector<double> y = x, xprev = x, g;
  double t_acc = 1.0;
  double q_prev = qp.objective(x, true);
  double kkt = std::numeric_limits<double>::infinity();
  int it = 0;
  for (; it < max_iter; ++it) {
    qp.gradient(y, true, g);
    xprev.swap(x);
    x = y;
    for (size_t k = 0; k < x.size(); ++k) x[k] -= step * g[k];
    qp.clamp_balls(x, beta);

    const double q_now = qp.objective(x, true);
    if (q_now > q_prev) {  // restart momentum
      t_acc = 1.0;
      y = x;
    } else {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_acc * t_acc));
      const double mom = (t_acc - 1.0) / t_next;
      y = x;
      for (size_t k = 0; k < x.size(); ++k) y[k] += mom * (x[k] - xprev[k]);
      t_acc = t_next;
    }
    q_prev = std::min(q_prev, q_now);

    if (it % 5 == 0 || it > max_iter - 2) {
      qp.gradient(x, true, g);
      std::vector<double> xp = x;
      for (size_t k = 0; k < xp.size(); ++k) xp[k] -= step * g[k];
      qp.clamp_balls(xp, beta);
      double gm = 0.0;
      for (size_t k = 0; k < xp.size(); ++k) gm += detail::sq(L * (x[k] - xp[k]));
      kkt = std::sqrt(gm);
      if (kkt < tol) {
        ++it;
        break;
      }
    }
  }
  if (kkt >= tol && it >= max_iter)
    throw NonConvergence("project_vbeta: gradient mapping " +
                         std::to_string(kkt) + " after max_iter");

  std::vector<double> z;
  qp.nodes(x, z);
  GridFunction proj = GridFunction::make(phi.a(), phi.b(), phi.dt(),
                                         std::move(z), n);
  return {std::move(proj), it, kkt, false};
}

// H1 projection onto the positioning set (nodal values in the box, slopes
// bounded). Consensus ADMM: one clamp block per constraint family, a
// tridiagonal solve per iteration, over-relaxation 1.7, penalty rebalancing.
inline ProjectionResult project_walpha(const GridFunction& phi,
                                       const WAlphaSet& set, double tol = 1e-10,
                                       int max_iter = 100000) {
  set.validate();
  if (!(tol > 0.0)) throw OutOfRange("project_walpha: tol must be positive");
  if (phi.dim() != 1)
    throw DimensionMismatch("project_walpha: set is scalar-valued");
  if (set.contains(phi)) return {phi, 0, 0.0, true};

  const int m = phi.cells();
  const int nn = m + 1;
  const double dt = phi.dt();
  const double lo = set.lo(), hi = set.hi(), sb = set.slope_bound();

  // H = 2(M + K), tridiagonal
  std::vector<double> hdiag(nn, 0.0), hoff(m, 0.0);
  for (int i = 0; i < m; ++i) {
    hdiag[i] += 2.0 * (dt / 3.0 + 1.0 / dt);
    hdiag[i + 1] += 2.0 * (dt / 3.0 + 1.0 / dt);
    hoff[i] += 2.0 * (dt / 6.0 - 1.0 / dt);
  }
  std::vector<double> hphi(nn, 0.0);
  for (int i = 0; i < nn; ++i) {
    hphi[i] = hdiag[i] * phi.value(i);
    if (i > 0) hphi[i] += hoff[i - 1] * phi.value(i - 1);
    if (i < m) hphi[i] += hoff[i] * phi.value(i + 1);
  }

  double hscale = 0.0;
  for (int i = 0; i < nn; ++i) hscale += hdiag[i];
  hscale /= nn;
  double sig1 = hscale, sig2 = hscale * dt * dt;

  std::vector<double> fdiag, x(phi.values()), z1(x), u1(nn, 0.0);
  std::vector<double> z2(m), u2(m, 0.0), dx(m), rhs(nn);
  for (int i = 0; i < m; ++i) z2[i] = std::clamp(phi.slope(i), -sb, sb);
  for (int i = 0; i < nn; ++i) z1[i] = std::clamp(z1[i], lo, hi);

  auto refactor = [&]() {
    fdiag.assign(nn, 0.0);
    for (int i = 0; i < nn; ++i) fdiag[i] = hdiag[i] + sig1;
    for (int i = 0; i < m; ++i) {
      fdiag[i] += sig2 / (dt * dt);
      fdiag[i + 1] += sig2 / (dt * dt);
    }
    std::vector<double> toff(m);
    for (int i = 0; i < m; ++i) toff[i] = hoff[i] - sig2 / (dt * dt);
    detail::thomas_factor(fdiag, toff);
    return toff;
  };
  std::vector<double> toff = refactor();

  const double relax = 1.7;
  const double scale = std::max(1.0, phi.seminorms().sup_norm);
  double rp = 0.0, rd = 0.0;
  int it = 0;
  for (; it < max_iter; ++it) {
    // x-update: (H + sig1 I + sig2 D^T D) x = H phi + sig1(z1-u1) + sig2 D^T(z2-u2)
    for (int i = 0; i < nn; ++i) rhs[i] = hphi[i] + sig1 * (z1[i] - u1[i]);
    for (int i = 0; i < m; ++i) {
      const double w2 = sig2 * (z2[i] - u2[i]) / dt;
      rhs[i] -= w2;
      rhs[i + 1] += w2;
    }
    x = rhs;
    detail::thomas_solve(fdiag, toff, x);
    for (int i = 0; i < m; ++i) dx[i] = (x[i + 1] - x[i]) / dt;

    rd = 0.0;
    for (int i = 0; i < nn; ++i) {
      const double xr = relax * x[i] + (1.0 - relax) * z1[i];
      const double z1n = std::clamp(xr + u1[i], lo, hi);
      rd += detail::sq(sig1 * (z1n - z1[i]));
      u1[i] = xr + u1[i] - z1n;
      z1[i] = z1n;
    }
    for (int i = 0; i < m; ++i) {
      const double dr = relax * dx[i] + (1.0 - relax) * z2[i];
      const double z2n = std::clamp(dr + u2[i], -sb, sb);
      rd += detail::sq(sig2 * (z2n - z2[i]) / dt);
      u2[i] = dr + u2[i] - z2n;
      z2[i] = z2n;
    }
    rd = std::sqrt(rd);

    rp = 0.0;
    for (int i = 0; i < nn; ++i) rp += detail::sq(x[i] - z1[i]);
    for (int i = 0; i < m; ++i) rp += detail::sq(dt * (dx[i] - z2[i]));
    rp = std::sqrt(rp);

    if (rp < tol * scale && rd < tol * scale) {
      ++it;
      break;
    }
    if (it % 64 == 63) {  // penalty rebalancing
      bool changed = false;
      if (rp > 10.0 * rd) {
        sig1 *= 2.0;
        sig2 *= 2.0;
        for (auto& v : u1) v *= 0.5;
        for (auto& v : u2) v *= 0.5;
        changed = true;
      } else if (rd > 10.0 * rp) {
        sig1 *= 0.5;
        sig2 *= 0.5;
        for (auto& v : u1) v *= 2.0;
        for (auto& v : u2) v *= 2.0;
        changed = true;
      }
      if (changed) toff = refactor();
    }
  }
  if (!(rp < tol * scale && rd < tol * scale))
    throw NonConvergence("project_walpha: residuals (" + std::to_string(rp) +
                         ", " + std::to_string(rd) + ") after max_iter");

  // snap to exact feasibility: box clamp cannot increase slopes, then a
  // forward sweep limits any residual slope excess while staying in the box
  std::vector<double> zf(nn);
  for (int i = 0; i < nn; ++i) zf[i] = std::clamp(x[i], lo, hi);
  for (int i = 0; i < m; ++i)
    zf[i + 1] = std::clamp(zf[i + 1], zf[i] - sb * dt, zf[i] + sb * dt);

  GridFunction proj = GridFunction::make(phi.a(), phi.b(), dt, std::move(zf), 1);
  return {std::move(proj), it, std::max(rp, rd), false};
}

// F = f o P_C: extends a map defined (and Lipschitz) on C to every grid
// function, with the same Lipschitz constant; F restricted to C equals f.
template <class F, class Projector>
auto extend_via_projection(F f, Projector project) {
  return [f = std::move(f), project = std::move(project)](const GridFunction& phi) {
    return f(project(phi));
  };
}

struct ProjectionPropertyReport {
  std::string name;
  int trials = 0;
  double worst = 0.0;
  double allowed = 0.0;
  bool pass = false;
};

// Seeded property checks for both projections: idempotence, member fixed
// points, non-expansiveness in the H1 norm, and the variational inequality
// against sampled members.
inline std::vector<ProjectionPropertyReport> verify_projection_properties(
    int trials, std::uint64_t seed, double tol = 1e-12) {
  const double beta = 1.0;
  const double h = 1.0, dt = 1.0 / 16.0;
  const WAlphaSet set{h, 0.2, 1.0, 1.0, 2.0};
  auto dist = [](const GridFunction& a, const GridFunction& b) {
    return weighted_h1_norm(nodal_difference(a, b), 0.0);
  };

  ProjectionPropertyReport idem{"vbeta_idempotence", trials, 0.0, 1e-10, false};
  ProjectionPropertyReport fixd{"vbeta_member_fixed", trials, 0.0, 0.0, false};
  ProjectionPropertyReport nonx{"vbeta_nonexpansive", trials, 0.0, 1e-9, false};
  ProjectionPropertyReport vari{"vbeta_variational", trials, 0.0, 1e-8, false};
  ProjectionPropertyReport widem{"walpha_idempotence", trials, 0.0, 1e-9, false};
  ProjectionPropertyReport wnonx{"walpha_nonexpansive", trials, 0.0, 1e-9, false};

  for (int k = 0; k < trials; ++k) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(k));
    auto a = random_nodal(-h, 0.0, dt, 1, 3.0, rng);
    auto b = random_nodal(-h, 0.0, dt, 1, 3.0, rng);
    auto pa = project_vbeta(a, beta, tol).projected;
    auto pb = project_vbeta(b, beta, tol).projected;
    idem.worst = std::max(idem.worst,
                          dist(project_vbeta(pa, beta, tol).projected, pa));
    // re-projecting a member must take the exact-identity fast path
    auto fixed = project_vbeta(pa, beta);
    fixd.worst = std::max(fixd.worst, fixed.active ? dist(fixed.projected, pa)
                                                   : 1.0);
    nonx.worst = std::max(nonx.worst, dist(pa, pb) - dist(a, b));
    auto member = random_vbeta_window(h, dt, 1, beta, 2.0, rng);
    vari.worst = std::max(vari.worst,
                          weighted_h1_inner(nodal_difference(a, pa),
                                            nodal_difference(member, pa), 0.0));
    auto wa = project_walpha(a, set, tol).projected;
    auto wb = project_walpha(b, set, tol).projected;
    widem.worst = std::max(widem.worst,
                           dist(project_walpha(wa, set, tol).projected, wa));
    wnonx.worst = std::max(wnonx.worst, dist(wa, wb) - dist(a, b));
  }
  for (auto* r : {&idem, &fixd, &nonx, &vari, &widem, &wnonx})
    r->pass = r->worst <= r->allowed;
  return {idem, fixd, nonx, vari, widem, wnonx};
}

}  // namespace sdde
