#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sdde/picard_solver.hpp"
#include "sdde/scenarios.hpp"

using namespace sdde;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

SddeProblem zero_rhs_problem(double dt, const std::vector<double>& phi_val) {
  SddeProblem p;
  p.n = static_cast<int>(phi_val.size());
  p.h = 1.0;
  p.T = 1.0;
  p.g = [](double, std::span<const double>, std::span<const double>,
           std::span<double> out) {
    for (auto& v : out) v = 0.0;
  };
  p.L_g = 0.0;
  p.r = constant_delay(-0.5, 1.0);
  p.phi = GridFunction::constant(-1.0, 0.0, dt, phi_val);
  return p;
}

// the sharpness example's dynamics with a Lipschitz pre-history
SddeProblem counterexample_lipschitz_phi(double dt, double T) {
  SddeProblem p;
  p.n = 1;
  p.h = 2.0;
  p.T = T;
  p.g = [](double, std::span<const double>, std::span<const double> u,
           std::span<double> out) { out[0] = -u[0]; };
  p.L_g = 1.0;
  p.r = state_value_delay(2.0, 2.0);
  p.phi = GridFunction::constant(-2.0, 0.0, dt, {1.0});
  return p;
}

double scalar_bisect_rho(double L, double W, double target) {
  // independent oracle for the smallest rho with L(1/rho + W/sqrt(2 rho)) <= q
  double lo = 1e-9, hi = 1e12;
  for (int it = 0; it < 200; ++it) {
    const double mid = std::sqrt(lo * hi);
    const double q = L * (1.0 / mid + W / std::sqrt(2.0 * mid));
    (q <= target ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace

TEST_CASE("choose_rho") {
  REQUIRE(choose_rho(0.0, 1.0, 1.0, 0.0) == 1e-6);

  // L=1, h=1, beta=1, lip_r=0: q(rho) = 1/rho + 3/sqrt(2 rho) = 1/2
  const double rho = choose_rho(1.0, 1.0, 1.0, 0.0, 0.5);
  const double oracle = scalar_bisect_rho(1.0, 3.0, 0.5);
  REQUIRE_THAT(rho, WithinRel(oracle, 1e-4));
  REQUIRE(contraction_budget(1.0, 3.0, rho) <= 0.5);

  // q scales linearly in L, so the required rho is monotone in L
  for (double L : {0.5, 1.0, 2.0, 4.0})
    REQUIRE(choose_rho(2.0 * L, 1.0, 1.0, 0.5) >= choose_rho(L, 1.0, 1.0, 0.5));
}

TEST_CASE("picard_apply: fixed point at zero rhs and forced constant rhs") {
  auto p0 = zero_rhs_problem(0.125, {2.0});
  auto y = GridFunction::constant(-1.0, 1.0, 0.125, {0.0});
  auto Fy = picard_apply(y, p0, 1.0);
  for (int i = 0; i <= Fy.cells(); ++i) REQUIRE(Fy.value(i) == 0.0);

  SddeProblem pc = p0;
  pc.g = [](double, std::span<const double>, std::span<const double>,
            std::span<double> out) { out[0] = 3.0; };
  auto Fc = picard_apply(y, pc, 1.0);
  REQUIRE_THAT(Fc.eval1(1.0), WithinAbs(3.0, 1e-13));
  REQUIRE_THAT(Fc.eval1(0.5), WithinAbs(1.5, 1e-13));
  REQUIRE(Fc.eval1(-0.5) == 0.0);

  auto ybad = GridFunction::constant(-1.0, 1.0, 0.125, {1.0});
  REQUIRE_THROWS_AS(picard_apply(ybad, p0, 1.0), ConfigError);
}

TEST_CASE("picard_apply: contraction ratio on the example problem") {
  const double dt = 0.01, T = 0.2;
  auto p = counterexample_lipschitz_phi(dt, T);
  const double beta = 1.25;
  const double rho = choose_rho(p.L_g, p.h, beta, p.r.lip_hint, 0.5);
  const double q = contraction_budget(
      p.L_g, 2.0 * std::sqrt(p.h) + beta * p.r.lip_hint + 1.0 / std::sqrt(p.h),
      rho);
  REQUIRE(q <= 0.5 * (1.0 + 1e-6));

  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    auto mk = [&](Rng& r) {
      auto f = random_slope_walk(-p.h, T, dt, 1, 0.0, 3.0, r);
      std::vector<double> v = f.values();
      const int i0 = static_cast<int>(std::llround(p.h / dt));
      const double shift = v[i0];
      for (int i = 0; i <= f.cells(); ++i) v[i] = i <= i0 ? 0.0 : v[i] - shift;
      return GridFunction::make(-p.h, T, dt, std::move(v), 1);
    };
    auto yu = mk(rng);
    auto yv = mk(rng);
    auto Fu = picard_apply(yu, p, beta);
    auto Fv = picard_apply(yv, p, beta);
    const double num = weighted_h1_norm(nodal_difference(Fu, Fv), rho);
    const double den = weighted_h1_norm(nodal_difference(yu, yv), rho);
    REQUIRE(den > 0.0);
    INFO("ratio " << num / den << " vs budget " << q);
    REQUIRE(num / den <= q + 0.05);
  }
}

TEST_CASE("picard_solve_projected: immediate convergence for zero rhs") {
  auto p = zero_rhs_problem(0.125, {1.0});
  auto res = picard_solve_projected(p, 1.0, 1.0, 1e-10, 50, nullptr, 0.125);
  REQUIRE(res.iterations == 1);
  for (int i = 0; i <= res.y.cells(); ++i) REQUIRE(res.y.value(i) == 0.0);
}

TEST_CASE("picard_solve_projected: constant delay matches method of steps") {
  auto p = detail::classical_delay_problem(1e-3, 2.0);
  const double rho = choose_rho(p.L_g, p.h, 1.25, 0.0, 0.5);
  auto res = picard_solve_projected(p, 1.25, rho, 1e-10, 100, nullptr, 1e-3);
  MethodOfStepsOracle oracle(2.0);
  const GridFunction phihat = extend_constant(p.phi, p.T);
  double sup = 0.0;
  for (int i = 0; i <= res.y.cells(); ++i) {
    const double t = res.y.node_time(i);
    if (t < 0.0) continue;
    sup = std::max(sup,
                   std::abs(res.y.value(i) + phihat.value(i) - oracle(t)));
  }
  REQUIRE(sup <= 1e-4);

  for (size_t k = 1; k < res.ratios.size(); ++k)
    REQUIRE(res.ratios[k] <= 0.55);
}

TEST_CASE("solve_sdde: counterexample dynamics with Lipschitz pre-history") {
  auto p = counterexample_lipschitz_phi(0.005, 0.2);
  SolveOptions opts;
  opts.dt = 0.005;
  auto rep = solve_sdde(p, opts);
  REQUIRE(rep.status == SolveStatus::Complete);
  REQUIRE(rep.solved_T == 0.2);
  for (size_t k = 1; k < rep.contraction_ratios.size(); ++k)
    REQUIRE(rep.contraction_ratios[k] <= 0.55);
  // pre-history exactness
  for (int i = 0; i <= p.phi.cells(); ++i)
    REQUIRE(rep.solution.value(i) == p.phi.value(i));
  REQUIRE_FALSE(p.r.clamp_fired->load());
}

TEST_CASE("solve_sdde: globally bounded rhs completes, beta <= max(beta0, 2M)") {
  SddeProblem p;
  p.n = 1;
  p.h = 1.0;
  p.T = 1.0;
  const double M = 2.0;
  p.g = [M](double t, std::span<const double> x, std::span<const double>,
            std::span<double> out) { out[0] = M * std::sin(x[0] + t); };
  p.L_g = M;
  p.r = constant_delay(-1.0, 1.0);
  p.phi = GridFunction::constant(-1.0, 0.0, 0.01, {0.5});
  SolveOptions opts;
  opts.dt = 0.01;
  auto rep = solve_sdde(p, opts);
  REQUIRE(rep.status == SolveStatus::Complete);
  const double beta0 = rep.beta_trace.front().beta;
  REQUIRE(rep.beta_trace.back().beta <= std::max(beta0, 2.0 * M) * (1.0 + 1e-12));
}

TEST_CASE("solve_sdde: beta continuation is strictly monotone, then blow-up cap") {
  // x' = 3x grows past each slope bound at a strictly later time
  SddeProblem p;
  p.n = 1;
  p.h = 0.5;
  p.T = 1.0;
  p.g = [](double, std::span<const double> x, std::span<const double>,
           std::span<double> out) { out[0] = 3.0 * x[0]; };
  p.L_g = 3.0;
  p.r = constant_delay(-0.25, 0.5);
  p.phi = GridFunction::constant(-0.5, 0.0, 0.01, {1.0});

  SolveOptions opts;
  opts.dt = 0.01;
  auto rep = solve_sdde(p, opts);
  REQUIRE(rep.status == SolveStatus::Complete);
  REQUIRE(rep.beta_trace.size() >= 3);
  for (size_t k = 0; k + 2 < rep.beta_trace.size(); ++k)
    REQUIRE(rep.beta_trace[k].t_beta < rep.beta_trace[k + 1].t_beta);

  SolveOptions capped = opts;
  capped.beta_max = 8.0;
  auto blown = solve_sdde(p, capped);
  REQUIRE(blown.status == SolveStatus::LipschitzBlowup);
  REQUIRE(blown.solved_T > 0.0);
  REQUIRE(blown.solved_T < 1.0);
  REQUIRE_THAT(blown.solution.b(), WithinAbs(blown.solved_T, 1e-12));
}

TEST_CASE("solve_sdde: genuinely state-dependent run has geometric ratios") {
  // ramp pre-history: the delayed reads land on the sloped region, so the
  // iterates feed back through the delay and the ratios are nonzero
  const double dt = 5e-3;
  SddeProblem p;
  p.n = 1;
  p.h = 2.0;
  p.T = 0.5;
  p.g = [](double, std::span<const double>, std::span<const double> u,
           std::span<double> out) { out[0] = -u[0]; };
  p.L_g = 1.0;
  p.r = state_value_delay(2.0, 2.0);
  const auto m = static_cast<long>(std::llround(2.0 / dt));
  std::vector<double> v(m + 1);
  for (long i = 0; i <= m; ++i) v[i] = 1.0 + 0.3 * (-2.0 + i * dt);
  p.phi = GridFunction::make(-2.0, 0.0, dt, std::move(v), 1);
  SolveOptions opts;
  opts.dt = dt;
  auto rep = solve_sdde(p, opts);
  REQUIRE(rep.status == SolveStatus::Complete);
  REQUIRE(rep.contraction_ratios.size() >= 2);
  for (double r : rep.contraction_ratios) {
    REQUIRE(r > 0.0);
    REQUIRE(r <= 0.55);
  }
  REQUIRE(rep.residual_sup < 5e-5);
}

TEST_CASE("fixed-point consistency of a Complete solve") {
  auto p = counterexample_lipschitz_phi(0.005, 0.2);
  SolveOptions opts;
  opts.dt = 0.005;
  auto rep = solve_sdde(p, opts);
  const GridFunction phihat = extend_constant(p.phi, p.T);
  std::vector<double> yv(rep.solution.values().size());
  for (size_t k = 0; k < yv.size(); ++k)
    yv[k] = rep.solution.values()[k] - phihat.values()[k];
  // snap the pre-history segment to exact zero
  for (int i = 0; i <= p.phi.cells(); ++i) yv[i] = 0.0;
  auto y = GridFunction::make(-p.h, p.T, 0.005, std::move(yv), 1);
  auto Fy = picard_apply(y, p, rep.beta_trace.back().beta);
  REQUIRE(weighted_h1_norm(nodal_difference(Fy, y), rep.rho_used) <=
          2.0 * opts.tol);
}

TEST_CASE("uniqueness: two starts agree in sup norm") {
  auto p = detail::classical_delay_problem(0.002, 2.0);
  const double rho = choose_rho(p.L_g, p.h, 1.25, 0.0, 0.5);
  auto a = picard_solve_projected(p, 1.25, rho, 1e-10, 100, nullptr, 0.002);

  Rng rng(17);
  auto seed_fn = random_slope_walk(-1.0, 2.0, 0.002, 1, 1.0, 1.0, rng);
  std::vector<double> v = seed_fn.values();
  const double base = v[500];
  for (int i = 0; i <= seed_fn.cells(); ++i)
    v[i] = i <= 500 ? 0.0 : v[i] - base;  // vanish on [-1,0], stay bounded
  auto y0 = GridFunction::make(-1.0, 2.0, 0.002, std::move(v), 1);
  auto b = picard_solve_projected(p, 1.25, rho, 1e-10, 100, &y0);

  double sup = 0.0;
  for (int i = 0; i <= a.y.cells(); ++i)
    sup = std::max(sup, std::abs(a.y.value(i) - b.y.value(i)));
  REQUIRE(sup <= 10.0 * 1e-10);
}

TEST_CASE("residual: exact affine solution of x' = c") {
  SddeProblem p;
  p.n = 1;
  p.h = 1.0;
  p.T = 1.0;
  p.g = [](double, std::span<const double>, std::span<const double>,
           std::span<double> out) { out[0] = 2.0; };
  p.L_g = 0.0;
  p.r = constant_delay(-1.0, 1.0);
  p.phi = GridFunction::constant(-1.0, 0.0, 0.05, {1.0});
  SolveOptions opts;
  opts.dt = 0.05;
  auto rep = solve_sdde(p, opts);
  REQUIRE(rep.residual_sup <= 1e-12);
}

TEST_CASE("residual: halving dt roughly halves the defect (order >= 1)") {
  auto run = [&](double dt) {
    auto p = detail::classical_delay_problem(dt, 2.0);
    SolveOptions opts;
    opts.dt = dt;
    opts.tol = 1e-12;
    return solve_sdde(p, opts).residual_sup;
  };
  const double r1 = run(0.01);
  const double r2 = run(0.005);
  REQUIRE(r2 <= r1 / 1.5);
}

TEST_CASE("apriori bound") {
  auto p0 = zero_rhs_problem(0.125, {2.0});
  SolveOptions opts;
  opts.dt = 0.125;
  auto rep0 = solve_sdde(p0, opts);
  auto chk0 = apriori_bound_check(rep0.solution, p0);
  REQUIRE(chk0.pass);
  REQUIRE_THAT(chk0.margin, WithinAbs(0.0, 1e-12));  // bound = ||phi||, x constant

  auto pd = detail::classical_delay_problem(0.01, 2.0);
  SolveOptions od;
  od.dt = 0.01;
  auto repd = solve_sdde(pd, od);
  auto chkd = apriori_bound_check(repd.solution, pd);
  REQUIRE(chkd.pass);
  // the bound touches ||phi||_inf at t = 0, so the margin is ~0 there
  REQUIRE(chkd.margin >= -1e-12);
}

TEST_CASE("permanence times") {
  auto p = zero_rhs_problem(0.125, {2.0});  // constant phi, frozen solution
  SolveOptions opts;
  opts.dt = 0.125;
  auto rep = solve_sdde(p, opts);
  for (double eps : {1e-6, 1e-2, 1.0})
    REQUIRE(permanence_teps(rep.solution, p, eps) == p.T);

  auto pd = detail::classical_delay_problem(0.01, 2.0);
  SolveOptions od;
  od.dt = 0.01;
  auto repd = solve_sdde(pd, od);
  REQUIRE(permanence_teps(repd.solution, pd, 1e9) == pd.T);
  double prev = -1.0;
  for (double eps : {0.01, 0.1, 1.0}) {
    const double teps = permanence_teps(repd.solution, pd, eps);
    REQUIRE(teps >= prev);
    prev = teps;
  }
}

TEST_CASE("continuous dependence") {
  auto p = detail::classical_delay_problem(0.01, 1.0);
  SolveOptions opts;
  opts.dt = 0.01;

  auto same = continuous_dependence_study(p, p.phi, p.phi, opts);
  REQUIRE(same.sup_diff <= 2.0 * opts.tol);

  const double bound = std::exp(2.0 * p.L_g * p.T) * 1.1;
  for (double delta : {1e-2, 1e-3, 1e-4}) {
    auto psi = GridFunction::constant(-1.0, 0.0, 0.01, {1.0 + delta});
    auto study = continuous_dependence_study(p, p.phi, psi, opts);
    REQUIRE(study.ratio <= bound);
    REQUIRE(study.sup_diff > 0.0);
  }

  // ratio stable under dt halving (within 10%)
  auto exp_problem = [&](double dt) {
    auto q = detail::classical_exp_problem(dt);
    return q;
  };
  auto ratio_at = [&](double dt) {
    SolveOptions o;
    o.dt = dt;
    o.tol = 1e-13;
    o.beta0 = 8.0;
    auto psi = GridFunction::constant(-1.0, 0.0, dt, {1.0 + 1e-3});
    return continuous_dependence_study(exp_problem(dt), exp_problem(dt).phi,
                                       psi, o).ratio;
  };
  const double r1 = ratio_at(0.01);
  const double r2 = ratio_at(0.005);
  REQUIRE(std::abs(r1 - r2) <= 0.1 * std::max(r1, r2));
}

TEST_CASE("grid convergence on a smooth problem (order >= 1)") {
  // T = 3 so the solution has a genuine cubic segment; up to T = 2 the
  // right-hand side is piecewise linear and the trapezoid rule is exact
  auto solve_at = [&](double dt) {
    auto p = detail::classical_delay_problem(dt, 3.0);
    SolveOptions opts;
    opts.dt = dt;
    opts.tol = 1e-12;
    return solve_sdde(p, opts).solution;
  };
  auto x1 = solve_at(0.02);
  auto x2 = solve_at(0.01);
  auto x3 = solve_at(0.005);
  auto supdist = [](const GridFunction& coarse, const GridFunction& fine) {
    double sup = 0.0;
    for (int i = 0; i <= coarse.cells(); ++i) {
      const double t = coarse.node_time(i);
      if (t < 0.0) continue;
      sup = std::max(sup, std::abs(coarse.value(i) - fine.eval1(t)));
    }
    return sup;
  };
  const double d12 = supdist(x1, x2);
  const double d23 = supdist(x2, x3);
  REQUIRE(d12 / d23 >= 1.5);
}

TEST_CASE("solve_fde: reductions to known problems") {
  // G(t, psi) = psi(0) reproduces x' = x
  FdeProblem p;
  p.n = 1;
  p.h = 1.0;
  p.T = 1.0;
  p.G = [](double, const WindowView& w, std::span<double> out) {
    out[0] = w.eval1(0.0);
  };
  p.L_of_beta = [](double) { return 2.01; };  // embedding constant ceiling
  p.phi = GridFunction::constant(-1.0, 0.0, 1e-3, {1.0});
  SolveOptions opts;
  opts.dt = 1e-3;
  opts.tol = 1e-13;
  opts.beta0 = 4.0;
  auto rep = solve_fde(p, opts);
  REQUIRE(rep.status == SolveStatus::Complete);
  REQUIRE_THAT(rep.solution.eval1(1.0), WithinAbs(std::exp(1.0), 5e-6));

  // G(t, psi) = -psi(-1) reproduces the constant-delay oracle
  FdeProblem pd;
  pd.n = 1;
  pd.h = 1.0;
  pd.T = 2.0;
  pd.G = [](double, const WindowView& w, std::span<double> out) {
    out[0] = -w.eval1(-1.0);
  };
  pd.L_of_beta = [](double) { return 2.01; };
  pd.phi = GridFunction::constant(-1.0, 0.0, 1e-3, {1.0});
  SolveOptions od;
  od.dt = 1e-3;
  od.tol = 1e-13;
  od.beta0 = 2.0;
  auto repd = solve_fde(pd, od);
  REQUIRE(repd.status == SolveStatus::Complete);
  MethodOfStepsOracle oracle(2.0);
  double sup = 0.0;
  for (int i = 0; i <= repd.solution.cells(); ++i) {
    const double t = repd.solution.node_time(i);
    if (t < 0.0) continue;
    sup = std::max(sup, std::abs(repd.solution.value(i) - oracle(t)));
  }
  REQUIRE(sup <= 1e-4);

  // bounded rhs completes
  FdeProblem pb;
  pb.n = 1;
  pb.h = 1.0;
  pb.T = 1.0;
  pb.G = [](double, const WindowView& w, std::span<double> out) {
    out[0] = std::cos(w.eval1(-0.5));
  };
  pb.L_of_beta = [](double) { return 2.01; };
  pb.phi = GridFunction::constant(-1.0, 0.0, 0.01, {0.0});
  SolveOptions ob;
  ob.dt = 0.01;
  auto repb = solve_fde(pb, ob);
  REQUIRE(repb.status == SolveStatus::Complete);
}

TEST_CASE("picard_solve_projected: MaxIterExceeded when starved") {
  auto p = detail::classical_delay_problem(0.01, 2.0);
  const double rho = choose_rho(p.L_g, p.h, 1.25, 0.0, 0.5);
  REQUIRE_THROWS_AS(picard_solve_projected(p, 1.25, rho, 1e-10, 1, nullptr, 0.01),
                    MaxIterExceeded);
}

TEST_CASE("window slope maximum matches the naive scan") {
  Rng rng(33);
  for (int trial = 0; trial < 50; ++trial) {
    const int N = 20 + rng.uniform_int(0, 60);
    const int mh = 1 + rng.uniform_int(0, 15);
    if (mh >= N) continue;
    std::vector<double> slopes(N);
    for (auto& s : slopes) s = rng.uniform(0.0, 5.0);
    std::vector<double> winmax;
    detail::window_slope_max(slopes, mh, mh, winmax);
    for (int i = mh; i <= N; ++i) {
      double naive = 0.0;
      for (int j = i - mh; j < i; ++j) naive = std::max(naive, slopes[j]);
      REQUIRE(winmax[i] == naive);
    }
  }

  // the fast-path gate agrees with the per-window seminorm
  auto f = random_nodal(-1.0, 1.0, 0.125, 2, 2.0, rng);
  std::vector<double> slopes(f.cells());
  for (int i = 0; i < f.cells(); ++i) slopes[i] = f.slope_norm(i);
  std::vector<double> winmax;
  detail::window_slope_max(slopes, 8, 8, winmax);
  for (int i = 8; i <= f.cells(); ++i) {
    WindowView win(f, i, 8);
    REQUIRE(winmax[i] == win.seminorms().lip_seminorm);
  }
}

TEST_CASE("config errors") {
  auto p = zero_rhs_problem(0.125, {1.0});
  SolveOptions opts;
  opts.dt = 0.3;  // h/dt not integral
  REQUIRE_THROWS_AS(solve_sdde(p, opts), ConfigError);

  // claimed L_g far below the actual Lipschitz constant
  SddeProblem bad = p;
  bad.g = [](double, std::span<const double> x, std::span<const double>,
             std::span<double> out) { out[0] = 100.0 * x[0]; };
  bad.L_g = 0.5;
  SolveOptions ok;
  ok.dt = 0.125;
  REQUIRE_THROWS_AS(solve_sdde(bad, ok), ConfigError);

  // delay horizon must match the problem horizon
  SddeProblem wrongh = p;
  wrongh.r = constant_delay(-0.25, 0.5);
  REQUIRE_THROWS_AS(solve_sdde(wrongh, ok), ConfigError);
}
