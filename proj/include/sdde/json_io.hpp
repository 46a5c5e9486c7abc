#pragma once

// Structured-text records (JSON syntax) for grid functions and reports.
// ordered_json keeps key order stable so identical runs produce
// byte-identical documents.

#include <string>
#include <vector>

#include <json.hpp>

#include "sdde/grid_function.hpp"
#include "sdde/picard_solver.hpp"
#include "sdde/scenarios.hpp"
#include "sdde/weighted_calculus.hpp"

namespace sdde {

using Json = nlohmann::ordered_json;

inline Json grid_to_json(const GridFunction& f) {
  Json j;
  j["a"] = f.a();
  j["b"] = f.b();
  j["dt"] = f.dt();
  j["n"] = f.dim();
  Json rows = Json::array();
  for (int i = 0; i <= f.cells(); ++i) {
    Json row = Json::array();
    for (int k = 0; k < f.dim(); ++k) row.push_back(f.value(i, k));
    rows.push_back(std::move(row));
  }
  j["values"] = std::move(rows);
  return j;
}

inline GridFunction grid_from_json(const Json& j) {
  const double a = j.at("a").get<double>();
  const double b = j.at("b").get<double>();
  const double dt = j.at("dt").get<double>();
  const int n = j.at("n").get<int>();
  std::vector<double> vals;
  for (const auto& row : j.at("values")) {
    if (row.is_array()) {
      for (const auto& v : row) vals.push_back(v.get<double>());
    } else {
      vals.push_back(row.get<double>());
    }
  }
  return GridFunction::make(a, b, dt, std::move(vals), n);
}

inline Json to_json(const OperatorBoundReport& r) {
  Json j;
  j["name"] = r.name;
  j["rho"] = r.rho;
  j["trials"] = r.trials;
  j["max_ratio"] = r.max_observed_ratio;
  j["bound"] = r.theoretical_bound;
  j["pass"] = r.pass;
  return j;
}

inline Json to_json(const ProjectionPropertyReport& r) {
  Json j;
  j["name"] = r.name;
  j["trials"] = r.trials;
  j["worst"] = r.worst;
  j["allowed"] = r.allowed;
  j["pass"] = r.pass;
  return j;
}

inline Json to_json(const SolveReport& r) {
  Json j;
  j["status"] = r.status == SolveStatus::Complete ? "Complete" : "LipschitzBlowup";
  j["solved_T"] = r.solved_T;
  Json trace = Json::array();
  for (const auto& b : r.beta_trace) {
    Json e;
    e["beta"] = b.beta;
    e["T_beta"] = b.t_beta;
    e["iterations"] = b.iterations;
    trace.push_back(std::move(e));
  }
  j["beta_trace"] = std::move(trace);
  j["rho"] = r.rho_used;
  j["ratios"] = r.contraction_ratios;
  j["residual_sup"] = r.residual_sup;
  j["apriori_margin"] = r.apriori_margin;
  j["warnings"] = r.warnings;
  return j;
}

inline Json to_json(const CounterexampleReport& r) {
  Json j;
  j["x1_residual_sup"] = r.x1_residual_sup;
  j["x2_residual_sup"] = r.x2_residual_sup;
  j["residuals_pass"] = r.residuals_pass;
  Json studies = Json::array();
  for (const auto& s : r.studies) {
    Json e;
    e["dt"] = s.dt;
    e["phi_lip"] = s.phi_lip;
    e["status"] = s.status == SolveStatus::Complete ? "Complete" : "LipschitzBlowup";
    e["beta_final"] = s.beta_final;
    e["beta_rounds"] = s.beta_rounds;
    e["dist_x1"] = s.dist_x1;
    e["dist_x2"] = s.dist_x2;
    studies.push_back(std::move(e));
  }
  j["studies"] = std::move(studies);
  j["lip_dts"] = r.lip_dts;
  j["lip_values"] = r.lip_values;
  j["lip_growth_consistent"] = r.lip_growth_consistent;
  return j;
}

inline Json to_json(const ClassicalReport& r) {
  Json j;
  j["dt"] = r.dt;
  j["err_exp"] = r.err_exp;
  j["err_delay"] = r.err_delay;
  j["err_exp_half"] = r.err_exp_half;
  j["err_delay_half"] = r.err_delay_half;
  j["factor_exp"] = r.factor_exp;
  j["factor_delay"] = r.factor_delay;
  j["exp_pass"] = r.exp_pass;
  j["delay_pass"] = r.delay_pass;
  j["refinement_pass"] = r.refinement_pass;
  return j;
}

inline Json to_json(const PositioningReport& r) {
  Json j;
  j["solve"] = to_json(r.solve);
  Json perm = Json::array();
  for (auto [eps, teps] : r.permanence) {
    Json e;
    e["eps"] = eps;
    e["T_eps"] = teps;
    perm.push_back(std::move(e));
  }
  j["permanence"] = std::move(perm);
  j["proj_active_fraction"] = r.proj_active_fraction;
  j["s_min"] = r.s_min;
  j["s_max"] = r.s_max;
  j["complete"] = r.complete;
  j["s_in_range"] = r.s_in_range;
  j["apriori_pass"] = r.apriori_pass;
  j["permanence_monotone"] = r.permanence_monotone;
  j["delay_clamp_fired"] = r.delay_clamp_fired;
  return j;
}

inline Json to_json(const BiologyReport& r) {
  Json j;
  j["solve"] = to_json(r.solve);
  j["max_crossing"] = r.max_crossing;
  j["crossing_within_h"] = r.crossing_within_h;
  j["expfactor_discrepancy"] = r.expfactor_discrepancy;
  j["complete"] = r.complete;
  j["apriori_pass"] = r.apriori_pass;
  return j;
}

}  // namespace sdde
