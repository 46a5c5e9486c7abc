#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <optional>
#include <vector>

#include "sdde/convex_projection.hpp"
#include "sdde/delay_functional.hpp"
#include "sdde/rng.hpp"

using namespace sdde;
using Catch::Matchers::WithinAbs;

#include "projection_oracles.hpp"

using test_oracles::h1_dist;
using test_oracles::vbeta_oracle;
using test_oracles::walpha_oracle;

TEST_CASE("project_vbeta: fast paths") {
  auto ramp = GridFunction::make(-1.0, 0.0, 0.5, {-1.0, -0.5, 0.0});
  auto res = project_vbeta(ramp, 2.0);
  REQUIRE(res.active);
  for (int i = 0; i <= ramp.cells(); ++i)
    REQUIRE(res.projected.value(i) == ramp.value(i));

  auto c = GridFunction::constant(-1.0, 0.0, 0.25, {7.0});
  REQUIRE(project_vbeta(c, 0.5).active);
}

TEST_CASE("project_vbeta: matches the active-set oracle (frozen case)") {
  // slope-1 ramp against beta = 1/2 on two cells
  auto ramp = GridFunction::make(-1.0, 0.0, 0.5, {-1.0, -0.5, 0.0});
  auto res = project_vbeta(ramp, 0.5, 1e-12);
  auto oracle = vbeta_oracle(ramp, 0.5);
  REQUIRE(h1_dist(res.projected, oracle) < 1e-8);
  REQUIRE(res.projected.seminorms().lip_seminorm <= 0.5 * (1.0 + 1e-12));
}

TEST_CASE("project_vbeta: matches the oracle on random 8-node grids") {
  Rng rng(314);
  for (int trial = 0; trial < 25; ++trial) {
    auto phi = random_nodal(-1.0, 0.0, 1.0 / 7.0, 1, 2.0, rng);
    const double beta = rng.uniform(0.3, 2.0);
    auto res = project_vbeta(phi, beta, 1e-12);
    auto oracle = vbeta_oracle(phi, beta);
    INFO("trial " << trial << " beta " << beta);
    REQUIRE(h1_dist(res.projected, oracle) < 1e-8);
  }
}

TEST_CASE("project_vbeta: idempotence, non-expansiveness, variational inequality") {
  Rng rng(2718);
  const double beta = 1.0;
  for (int trial = 0; trial < 60; ++trial) {
    auto phi = random_nodal(-1.0, 0.0, 1.0 / 16.0, 1 + trial % 2, 3.0, rng);
    auto psi = random_nodal(-1.0, 0.0, 1.0 / 16.0, phi.dim(), 3.0, rng);
    auto p1 = project_vbeta(phi, beta, 1e-12);
    auto p2 = project_vbeta(psi, beta, 1e-12);

    // idempotence
    auto pp = project_vbeta(p1.projected, beta, 1e-12);
    REQUIRE(h1_dist(pp.projected, p1.projected) < 1e-10);

    // non-expansiveness
    REQUIRE(h1_dist(p1.projected, p2.projected) <=
            h1_dist(phi, psi) * (1.0 + 1e-9) + 1e-10);

    // variational inequality against sampled members
    auto member = random_vbeta_window(1.0, 1.0 / 16.0, phi.dim(), beta, 2.0, rng);
    auto d1 = nodal_difference(phi, p1.projected);
    auto d2 = nodal_difference(member, p1.projected);
    const double vi = weighted_h1_inner(d1, d2, 0.0);
    REQUIRE(vi <= 10.0 * 1e-10 * std::max(1.0, weighted_h1_norm(d1, 0.0) *
                                                   weighted_h1_norm(d2, 0.0)) +
                      1e-9);
  }
}

TEST_CASE("project_vbeta: NonConvergence when iterations are exhausted") {
  auto steep = GridFunction::make(-1.0, 0.0, 0.25, {0.0, 2.0, -1.0, 3.0, 0.5});
  REQUIRE_THROWS_AS(project_vbeta(steep, 0.5, 1e-14, 2), NonConvergence);
}

TEST_CASE("project_walpha: fast path and parameter validation") {
  WAlphaSet set{1.0, 0.1, 1.0, 1.0, 1.0};
  auto zero = GridFunction::constant(-1.0, 0.0, 0.25, {0.0});
  auto res = project_walpha(zero, set);
  REQUIRE(res.active);

  WAlphaSet bad{1.0, 1.0, 1.0, 1.0, 1.0};  // alpha = c
  REQUIRE_THROWS_AS(project_walpha(zero, bad), EmptySetParameters);
}

TEST_CASE("project_walpha: constant above the box, 2-cell grid vs oracle") {
  WAlphaSet set{1.0, 0.1, 1.0, 1.0, 1.0};
  auto phi = GridFunction::constant(-1.0, 0.0, 0.5, {1.0});  // == w_plus
  auto res = project_walpha(phi, set, 1e-12);
  auto oracle = walpha_oracle(phi, set);
  REQUIRE(h1_dist(res.projected, oracle) < 1e-8);
  REQUIRE(set.contains(res.projected));
}

TEST_CASE("project_walpha: random small grids vs oracle") {
  Rng rng(777);
  WAlphaSet set{1.0, 0.25, 1.0, 0.8, 1.5};
  for (int trial = 0; trial < 20; ++trial) {
    auto phi = random_nodal(-1.0, 0.0, 1.0 / 3.0, 1, 2.0, rng);
    auto res = project_walpha(phi, set, 1e-12);
    auto oracle = walpha_oracle(phi, set);
    INFO("trial " << trial);
    REQUIRE(h1_dist(res.projected, oracle) < 1e-8);
    REQUIRE(set.contains(res.projected));
  }
}

TEST_CASE("project_walpha: idempotence and non-expansiveness") {
  Rng rng(555);
  WAlphaSet set{1.0, 0.2, 1.0, 1.0, 2.0};
  for (int trial = 0; trial < 40; ++trial) {
    auto phi = random_nodal(-1.0, 0.0, 1.0 / 8.0, 1, 2.0, rng);
    auto psi = random_nodal(-1.0, 0.0, 1.0 / 8.0, 1, 2.0, rng);
    auto p1 = project_walpha(phi, set, 1e-12);
    auto p2 = project_walpha(psi, set, 1e-12);
    auto pp = project_walpha(p1.projected, set, 1e-12);
    REQUIRE(h1_dist(pp.projected, p1.projected) < 1e-9);
    REQUIRE(h1_dist(p1.projected, p2.projected) <=
            h1_dist(phi, psi) * (1.0 + 1e-9) + 1e-9);
  }
}

TEST_CASE("extend_via_projection") {
  const double beta = 1.0;
  auto projector = [&](const GridFunction& f) {
    return project_vbeta(f, beta, 1e-12).projected;
  };
  auto supf = [](const GridFunction& f) { return f.seminorms().sup_norm; };
  auto F = extend_via_projection(supf, projector);

  Rng rng(12);
  // fixed on members
  auto member = random_vbeta_window(1.0, 1.0 / 8.0, 1, beta, 1.0, rng);
  REQUIRE_THAT(F(member), WithinAbs(supf(member), 1e-12));

  // constant map extends to a constant
  auto cf = extend_via_projection([](const GridFunction&) { return 4.5; }, projector);
  auto wild = random_nodal(-1.0, 0.0, 1.0 / 8.0, 1, 9.0, rng);
  REQUIRE(cf(wild) == 4.5);

  // the extension keeps the Lipschitz constant of f on the set: here
  // |sup(a)-sup(b)| <= sup|a-b| <= (sqrt(h)+1/sqrt(h)) ||a-b||_{H1} = 2||.||,
  // and the same bound must hold for F over arbitrary pairs
  double ratio_inside = 0.0, ratio_extended = 0.0;
  for (int k = 0; k < 200; ++k) {
    auto a = random_vbeta_window(1.0, 1.0 / 8.0, 1, beta, 1.0, rng);
    auto b = random_vbeta_window(1.0, 1.0 / 8.0, 1, beta, 1.0, rng);
    const double d = h1_dist(a, b);
    if (d > 1e-12)
      ratio_inside = std::max(ratio_inside, std::abs(supf(a) - supf(b)) / d);
  }
  for (int k = 0; k < 200; ++k) {
    auto a = random_nodal(-1.0, 0.0, 1.0 / 8.0, 1, 3.0, rng);
    auto b = random_nodal(-1.0, 0.0, 1.0 / 8.0, 1, 3.0, rng);
    const double d = h1_dist(a, b);
    if (d > 1e-12)
      ratio_extended = std::max(ratio_extended, std::abs(F(a) - F(b)) / d);
  }
  REQUIRE(ratio_inside <= 2.0 * (1.0 + 1e-6));
  REQUIRE(ratio_extended <= 2.0 * (1.0 + 1e-6));
}
