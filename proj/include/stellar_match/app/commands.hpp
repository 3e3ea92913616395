#pragma once

// Batch commands behind the command-line front end. Each returns an exit
// code and a short JSON summary for stdout; files go to the output directory.

#include <algorithm>
#include <cmath>
#include <iostream>
#include <string>
#include <vector>

#include "stellar_match/app/config.hpp"
#include "stellar_match/app/io.hpp"
#include "stellar_match/distortion.hpp"
#include "stellar_match/lane_emden.hpp"
#include "stellar_match/matching.hpp"
#include "stellar_match/surface_fit.hpp"
#include "stellar_match/tov.hpp"
#include "stellar_match/version.hpp"

namespace stellar_match::app {

struct CommandResult {
  int exit_code = 0;
  json summary;
};

struct RunContext {
  RunConfig config;
  unsigned threads = 1;
  std::ostream* warnings = &std::cerr;
};

namespace command_detail {

/// Non-finite numbers as strings so they survive JSON.
inline json jnum(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

inline json diagnostics_json(const std::map<std::string, double>& d) {
  json out = json::object();
  for (const auto& [k, v] : d) out[k] = jnum(v);
  return out;
}

inline void warn(const RunContext& ctx, const std::string& kind, const std::string& message) {
  json w;
  w["warning"] = {{"kind", kind}, {"message", message}};
  *ctx.warnings << w.dump() << "\n";
}

const std::array<std::string, 7> kTrajectoryColumns{"r", "m", "P", "rho", "h", "F", "H"};

inline void write_trajectory(OutputDir& out, const RunConfig& cfg, const TovTrajectory& traj) {
  const auto rows = trajectory_rows(traj);
  if (cfg.wants("csv")) out.write_csv("trajectory.csv", kTrajectoryColumns, rows);
  if (cfg.wants("json")) out.write_table_json("trajectory.json", kTrajectoryColumns, rows);
}

inline json junction_json(const JunctionReport& rep) {
  json gaps = json::array();
  for (const auto& g : rep.gaps) {
    gaps.push_back({{"coefficient", g.coefficient},
                    {"derivative", g.derivative},
                    {"interior", jnum(g.interior)},
                    {"exterior", jnum(g.exterior)},
                    {"scaled_gap", jnum(g.scaled_gap)},
                    {"tolerance", g.tolerance},
                    {"pass", g.pass}});
  }
  return {{"order", rep.order}, {"pass", rep.pass}, {"gaps", gaps}};
}

inline json fit_json(const EllipsoidFit& f) {
  return {{"a0", f.a0},
          {"a1", f.a1},
          {"rms_residual", f.rms_residual},
          {"max_residual", f.max_residual},
          {"iterations", f.iterations}};
}

inline json stratification_json(const StratificationReport& r) {
  json levels = json::array();
  for (const auto& lf : r.levels) {
    json l = fit_json(lf.fit);
    l["level"] = lf.level;
    l["normalized_rms"] = lf.normalized_rms;
    levels.push_back(l);
  }
  json boundary = fit_json(r.boundary.fit);
  boundary["normalized_rms"] = r.boundary.normalized_rms;
  return {{"b", r.b},
          {"levels", levels},
          {"boundary", boundary},
          {"roundoff_floor", r.roundoff_floor},
          {"non_ellipsoidal", r.non_ellipsoidal}};
}

}  // namespace command_detail

/// Checks the EOS inequalities over the requested density range.
inline CommandResult cmd_eos_check(const RunContext& ctx, OutputDir& out) {
  using namespace command_detail;
  const auto& cfg = ctx.config;
  const auto eos = cfg.make_eos();
  const double rho_valid = eos.validity_density();
  const bool bounded = std::isfinite(rho_valid);
  json rep;
  rep["nonrelativistic"] = eos.nonrelativistic();
  rep["pure_polytrope"] = eos.pure_polytrope();
  rep["gamma_warning"] = eos.gamma_warning();
  rep["bounded"] = bounded;
  rep["validity_density"] = jnum(rho_valid);
  rep["validity_pressure"] = jnum(bounded ? eos.pressure_formula(rho_valid) : rho_valid);
  rep["validity_enthalpy"] = jnum(bounded ? eos.enthalpy_formula(rho_valid) : rho_valid);
  bool valid = rho_valid > 0.0;
  if (cfg.eos.rho_max) {
    rep["requested_density"] = *cfg.eos.rho_max;
    valid = valid && *cfg.eos.rho_max <= rho_valid * (1.0 + 1e-12);
  } else {
    rep["requested_density"] = nullptr;
  }
  rep["valid"] = valid;
  if (eos.gamma_warning()) warn(ctx, "gamma_range", "gamma outside (6/5, 2)");

  // Table up to the requested range, or the validity bound, or rho = 1.
  const double top = cfg.eos.rho_max.value_or(bounded ? rho_valid : 1.0);
  std::vector<std::array<double, 5>> rows;
  for (int i = 0; i <= 60; ++i) {
    const double rho = top * std::pow(10.0, -6.0 + 6.0 * i / 60.0);
    const double cs2 = eos.sound_speed_formula(rho);
    const double h = rho <= rho_valid ? eos.enthalpy_formula(rho)
                                      : std::numeric_limits<double>::quiet_NaN();
    rows.push_back({rho, eos.pressure_formula(rho), h, cs2, rho <= rho_valid ? 1.0 : 0.0});
  }
  const std::array<std::string, 5> cols{"rho", "P", "h", "cs2", "valid"};
  if (cfg.wants("csv")) out.write_csv("eos_table.csv", cols, rows);
  if (cfg.wants("json")) out.write_table_json("eos_table.json", cols, rows);
  out.write_json("eos_check.json", rep);
  return {valid ? 0 : 1, rep};
}

inline CommandResult cmd_shoot_center(const RunContext& ctx, OutputDir& out) {
  using namespace command_detail;
  const auto& cfg = ctx.config;
  const auto eos = cfg.make_eos();
  const double P_O = cfg.shoot.p_center;
  const auto shot = shoot_from_center(eos, P_O, cfg.tov);
  const auto& traj = shot.trajectory;
  json rep;
  rep["direction"] = "center";
  rep["p_center"] = P_O;
  rep["exit"] = to_string(traj.exit());
  rep["success"] = shot.surface.has_value();
  if (shot.surface) {
    rep["surface"] = {{"R", shot.surface->R},
                      {"M", shot.surface->M},
                      {"g_s", shot.surface->g_s},
                      {"compactness", jnum(eos.nonrelativistic()
                                               ? 2.0 * shot.surface->M / shot.surface->R
                                               : 2.0 * shot.surface->M /
                                                     (eos.c_sq() * shot.surface->R))}};
    rep["junction"] = junction_json(junction_check(metric_coefficients(traj), 2));
  } else {
    rep["surface"] = nullptr;
  }
  if (eos.nonrelativistic() && eos.pure_polytrope()) {
    const double n = eos.index().n;
    if (n < 5.0) {
      const auto le = solve_lane_emden(n);
      const double rho = eos.density_of_pressure(P_O);
      const double a = natural_length(eos, rho);
      rep["lane_emden"] = {{"n", n},
                           {"a", a},
                           {"R", a * le.xi1()},
                           {"M", 4.0 * kPi * rho * a * a * a * le.mu1()}};
    }
  }
  rep["diagnostics"] = diagnostics_json(traj.diagnostics());
  write_trajectory(out, cfg, traj);
  out.write_json("classification.json", rep);
  return {0, rep};
}

inline CommandResult cmd_shoot_boundary(const RunContext& ctx, OutputDir& out) {
  using namespace command_detail;
  const auto& cfg = ctx.config;
  if (!cfg.shoot.radius || !cfg.shoot.mass) {
    throw ConfigError("shoot-boundary needs shoot.radius and shoot.mass");
  }
  const auto eos = cfg.make_eos();
  const auto data = make_surface(eos, *cfg.shoot.radius, *cfg.shoot.mass);
  const auto shot = shoot_from_boundary(eos, data, cfg.tov);
  const auto& c = shot.classification;
  json rep;
  rep["direction"] = "boundary";
  rep["radius"] = data.R;
  rep["mass"] = data.M;
  rep["case"] = c.kind ? json(to_string(*c.kind)) : json(nullptr);
  rep["label"] = c.label();
  rep["exit"] = to_string(c.exit);
  rep["r_exit"] = jnum(c.r_exit);
  rep["p_exit"] = jnum(c.P_exit);
  rep["m_exit"] = jnum(c.m_exit);
  rep["p_center"] = c.P_center ? jnum(*c.P_center) : json(nullptr);
  rep["gates"] = {{"r_floor", c.r_floor},
                  {"m_floor", c.m_floor},
                  {"p_ceiling", c.P_ceiling},
                  {"slope_floor", c.slope_floor},
                  {"p_ref", c.P_ref}};
  rep["diagnostics"] = diagnostics_json(c.diagnostics);
  write_trajectory(out, cfg, shot.trajectory);
  out.write_json("classification.json", rep);
  return {0, rep};
}

inline CommandResult cmd_match(const RunContext& ctx, OutputDir& out) {
  using namespace command_detail;
  const auto& cfg = ctx.config;
  const auto& w = cfg.sweep;
  const auto eos = cfg.make_eos();
  ScanOptions sopt;
  sopt.boundary_tol = w.boundary_tol;
  sopt.max_spacing = w.max_spacing;
  sopt.threads = ctx.threads;
  sopt.tov = cfg.tov;
  const auto scan = scan_components(eos, {w.p_min, w.p_max, w.points}, sopt);
  const double k_scale = eos.nonrelativistic() ? 1.0 : 1.0 / eos.c_sq();

  json components = json::array();
  std::vector<std::array<double, 4>> all_rows;
  const std::array<std::string, 4> cols{"P_O", "R", "M", "2M/R"};
  for (const auto& c : scan.curves) {
    std::vector<std::array<double, 4>> rows;
    for (const auto& p : c.points) rows.push_back({p.P_O, p.R, p.M, 2.0 * p.M * k_scale / p.R});
    const std::string name = "curve_" + std::to_string(c.id);
    if (cfg.wants("csv")) out.write_csv(name + ".csv", cols, rows);
    if (cfg.wants("json")) out.write_table_json(name + ".json", cols, rows);
    all_rows.insert(all_rows.end(), rows.begin(), rows.end());
    components.push_back({{"id", c.id},
                          {"points", c.points.size()},
                          {"p_lo", c.P_lo},
                          {"p_hi", c.P_hi},
                          {"p_lo_fail", c.P_lo_fail},
                          {"p_hi_fail", c.P_hi_fail},
                          {"lo_label", c.lo_label},
                          {"hi_label", c.hi_label}});
  }
  if (cfg.wants("csv")) out.write_csv("curves.csv", cols, all_rows);
  json grid = json::array();
  for (const auto& s : scan.grid) {
    grid.push_back({{"p_o", s.P_O}, {"success", s.success}, {"label", s.label}});
  }

  json summary;
  summary["components"] = components;
  summary["grid"] = grid;
  summary["r_ref"] = scan.R_ref;
  summary["m_ref"] = scan.M_ref;

  const bool rectangle = w.r_min && w.r_max && w.k_min && w.k_max;
  if (scan.curves.empty() && !rectangle) {
    summary["note"] = "no successful central pressure on the grid; the set of matching "
                      "curves is empty and no sweep was run";
    summary["sweep"] = nullptr;
    out.write_jsonl("sweep.jsonl", {});
    out.write_json("summary.json", summary);
    return {0, summary};
  }
  if (scan.curves.empty()) summary["note"] = "no successful central pressure on the grid";

  SamplerConfig sc;
  sc.kind = w.sampler == "grid" ? SamplerKind::Grid : SamplerKind::Random;
  sc.seed = w.seed;
  sc.count = w.count;
  sc.exclusion = w.exclusion;
  sc.on_curve = w.on_curve;
  sc.R_min = w.r_min;
  sc.R_max = w.r_max;
  sc.k_min = w.k_min;
  sc.k_max = w.k_max;
  SweepOptions swo;
  swo.delta_near = w.delta_near;
  swo.delta_far = w.delta_far;
  swo.threads = ctx.threads;
  swo.tov = cfg.tov;
  const auto rep = ae_failure_sweep(eos, scan, sc, swo);

  std::vector<json> records;
  auto record = [&](const SweepSample& s, bool on_curve) {
    json r;
    r["sample"] = s.index;
    r["case"] = s.label;
    r["distance"] = jnum(s.distance);
    r["on_curve"] = on_curve;
    r["r"] = s.R;
    r["m"] = s.M;
    r["component"] = s.component;
    if (s.P_O) r["p_o"] = *s.P_O;
    records.push_back(r);
  };
  for (const auto& s : rep.samples) record(s, false);
  for (const auto& s : rep.on_curve) record(s, true);
  out.write_jsonl("sweep.jsonl", records);

  const auto& s = rep.summary;
  summary["sweep"] = {{"sampler", w.sampler},
                      {"seed", w.seed},
                      {"rectangle",
                       {{"r_min", s.R_min}, {"r_max", s.R_max}, {"k_min", s.k_min}, {"k_max", s.k_max}}},
                      {"samples", s.samples},
                      {"far_samples", s.far_samples},
                      {"far_case11", s.far_case11},
                      {"far_case11_fraction",
                       s.far_samples ? double(s.far_case11) / double(s.far_samples) : 0.0},
                      {"case11", s.case11},
                      {"case11_near", s.case11_near},
                      {"case11_only_near", s.case11_only_near},
                      {"max_case11_distance", s.max_case11_distance},
                      {"on_curve", s.on_curve},
                      {"on_curve_case11", s.on_curve_case11},
                      {"delta_near", w.delta_near},
                      {"delta_far", w.delta_far},
                      {"labels", s.labels}};
  out.write_json("summary.json", summary);
  return {0, summary};
}

inline CommandResult cmd_surface(const RunContext& ctx, OutputDir& out) {
  using namespace command_detail;
  const auto& cfg = ctx.config;
  const auto& D = cfg.distortion;
  const double n = cfg.polytropic_index();
  const auto dist = solve_distortion(solve_lane_emden(n));
  const auto zeta = uniform_zeta_grid(D.zeta_points);

  json rep;
  rep["n"] = n;
  rep["xi1"] = dist.xi1();
  rep["mu1"] = dist.mu1();
  rep["A2"] = dist.A2();
  rep["c0"] = dist.c0();
  rep["c1"] = dist.c1();
  rep["c2"] = dist.c2();
  rep["psi2_at_surface"] = dist.psi2().value_at_surface();
  rep["h0_at_surface"] = dist.h0().value_at_surface();

  json fits = json::array();
  std::vector<double> scaling_b;
  for (std::size_t i = 0; i < D.b.size(); ++i) {
    const double b = D.b[i];
    const auto curve = surface_curve(dist, b, zeta);
    if (curve.first_order_advisory) {
      warn(ctx, "first_order_advisory",
           "b = " + format_number(b) + " exceeds 0.05; first-order theory is not trusted there");
    }
    const auto fit = fit_ellipsoid(curve.zeta, curve.xi);
    std::vector<std::array<double, 2>> srows;
    for (std::size_t k = 0; k < curve.zeta.size(); ++k) srows.push_back({curve.zeta[k], curve.xi[k]});
    const auto rrows = fit_residuals(fit, curve.zeta, curve.xi);
    const std::string tag = std::to_string(i);
    if (cfg.wants("csv")) {
      out.write_csv("surface_" + tag + ".csv", std::array<std::string, 2>{"zeta", "Xi1"}, srows);
      out.write_csv("residuals_" + tag + ".csv",
                    std::array<std::string, 4>{"zeta", "r", "r_fit", "residual"}, rrows);
    }
    json f = fit_json(fit);
    f["index"] = i;
    f["b"] = b;
    f["first_order_advisory"] = curve.first_order_advisory;
    fits.push_back(f);
    if (b > 0.0 && b <= 0.05) scaling_b.push_back(b);
  }
  rep["fits"] = fits;

  std::sort(scaling_b.begin(), scaling_b.end());
  scaling_b.erase(std::unique(scaling_b.begin(), scaling_b.end()), scaling_b.end());
  try {
    const auto sc = residual_scaling(dist, scaling_b, zeta);
    json pts = json::array();
    for (const auto& p : sc.points) pts.push_back({{"b", p.b}, {"rms_residual", p.rms_residual}});
    rep["scaling"] = {{"points", pts},
                      {"slope", sc.slope},
                      {"intercept", sc.intercept},
                      {"slope_half_width", sc.slope_half_width},
                      {"degenerate", sc.degenerate},
                      {"slope_two", !sc.degenerate && std::abs(sc.slope - 2.0) <= 0.1}};
  } catch (const InvalidArgument& e) {
    rep["scaling"] = {{"skipped", e.what()}};
  }

  rep["stratification"] = stratification_json(
      stratification_report(dist, D.stratification_b, D.levels, zeta));
  rep["stratification_control"] =
      stratification_json(stratification_report(dist, 0.0, D.levels, zeta));
  out.write_json("surface.json", rep);
  return {0, rep};
}

inline json version_info() {
  return {{"name", "stellar_match"}, {"version", kVersion}};
}

}  // namespace stellar_match::app
