#pragma once

// Spherically symmetric hydrostatic equilibrium (TOV system) in geometric
// units G = 1 with the speed of light c kept as a parameter.
//
//   dm/dr = 4 pi r^2 rho
//   du/dr = -(m + 4 pi r^3 P / c^2) / (r^2 (1 - 2m / (c^2 r)))
//
// with u = c^2 h the enthalpy in velocity-squared units. For c = infinity
// this is Newtonian hydrostatics du/dr = -m / r^2 and u is the Newtonian
// enthalpy. The public state reports the variable the equation of state
// works with (h, or u when nonrelativistic).

#include <algorithm>
#include <array>
#include <cfloat>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "stellar_match/eos.hpp"
#include "stellar_match/errors.hpp"
#include "stellar_match/ode.hpp"

namespace stellar_match {

inline constexpr double kPi = std::numbers::pi;

struct TovState {
  double r = 0.0;
  double m = 0.0;
  /// Enthalpy in the equation of state's variable (u when nonrelativistic).
  double h = 0.0;
  double P = 0.0;
  double rho = 0.0;
};

struct TovDerivative {
  double dm_dr = 0.0;
  double dh_dr = 0.0;
};

struct SurfaceData {
  double R = 0.0;
  double M = 0.0;
  /// -dh/dr at R in the equation of state's enthalpy variable.
  double g_s = 0.0;
};

enum class Direction { Outward, Inward };

enum class ExitReason {
  Surface,           ///< outward: enthalpy reached zero
  RadiusGuard,       ///< outward: r exceeded r_max
  PressureExtremum,  ///< inward: m + 4 pi r^3 P / c^2 reached zero
  PressureCeiling,   ///< inward: P exceeded the ceilings
  ReachedFloor,      ///< inward: r reached r_floor
  Horizon,           ///< 1 - 2m/(c^2 r) reached zero
  EosRange,          ///< left the equation-of-state validity range
  DomainViolation,   ///< an accepted step left the domain D
  IntegrationFailure
};

inline const char* to_string(ExitReason e) {
  switch (e) {
    case ExitReason::Surface: return "surface";
    case ExitReason::RadiusGuard: return "radius_guard";
    case ExitReason::PressureExtremum: return "pressure_extremum";
    case ExitReason::PressureCeiling: return "pressure_ceiling";
    case ExitReason::ReachedFloor: return "reached_floor";
    case ExitReason::Horizon: return "horizon";
    case ExitReason::EosRange: return "eos_range";
    case ExitReason::DomainViolation: return "domain_violation";
    case ExitReason::IntegrationFailure: return "integration_failure";
  }
  return "unknown";
}

enum class Case { Case00, Case01, Case10, Case11 };

inline const char* to_string(Case c) {
  switch (c) {
    case Case::Case00: return "Case00";
    case Case::Case01: return "Case01";
    case Case::Case10: return "Case10";
    case Case::Case11: return "Case11";
  }
  return "unknown";
}

/// Gates that turn the asymptotic case definitions into finite tests. All
/// factors are relative to R, M and P_ref = P(3M / (4 pi R^3)).
struct Thresholds {
  double r_floor = 1e-6;
  double m_floor = 1e-5;
  double p_ceiling = 1e6;
  double slope_floor = 1e-8;
  /// Successive ceilings used to extrapolate the blow-up radius.
  double ceiling_step = 10.0;
};

struct TovOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  /// Center offset r0 in units of the natural length a.
  double r0_factor = 1e-6;
  /// Surface offset dr in units of R.
  double dr_factor = 1e-6;
  /// Outward guard r_max in units of a.
  double r_max_factor = 1e3;
  /// Radius (in units of R) of the inner Richardson point for P_center.
  double richardson_radius = 0.02;
  Thresholds thresholds;
};

namespace tov_detail {

using Y = ode::Vec<2>;  // (m, u)

inline double u_of_h(const EosSpec& eos, double h) {
  return eos.nonrelativistic() ? h : h * eos.c_sq();
}
inline double h_of_u(const EosSpec& eos, double u) {
  return eos.nonrelativistic() ? u : u / eos.c_sq();
}
inline double inv_c2(const EosSpec& eos) { return eos.nonrelativistic() ? 0.0 : 1.0 / eos.c_sq(); }

inline FluidState fluid(const EosSpec& eos, double u) {
  return eos.state_of_enthalpy(h_of_u(eos, u));
}

/// (rho, P) -> (dm/dr, du/dr); NaN outside D.
inline Y rhs(const EosSpec& eos, double r, double m, double rho, double P) {
  const double k = inv_c2(eos);
  const double lapse = 1.0 - 2.0 * m * k / r;
  if (!(lapse > 0.0) || !std::isfinite(rho)) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {nan, nan};
  }
  return {4.0 * kPi * r * r * rho, -(m + 4.0 * kPi * r * r * r * P * k) / (r * r * lapse)};
}

inline Y rhs_u(const EosSpec& eos, double r, const Y& y) {
  const auto f = fluid(eos, y[1]);
  return rhs(eos, r, y[0], f.rho, f.pressure);
}

/// Density from pressure without the range check (pure polytropes only, or
/// inside the validity range).
inline std::optional<double> enthalpy_u_of_pressure(const EosSpec& eos, double p) {
  double rho;
  if (eos.pure_polytrope() || eos.nonrelativistic()) {
    rho = std::pow(p / eos.A(), 1.0 / eos.gamma());
  } else if (eos.pressure_in_range(p)) {
    rho = eos.density_of_pressure(p);
  } else {
    return std::nullopt;
  }
  return u_of_h(eos, eos.enthalpy_formula(rho));
}

}  // namespace tov_detail

/// The right-hand side in the equation of state's enthalpy variable.
inline TovDerivative tov_rhs(const EosSpec& eos, const TovState& s) {
  if (!(s.r > 0.0)) throw DomainError("TOV right-hand side needs r > 0");
  const auto d = tov_detail::rhs(eos, s.r, s.m, s.rho, s.P);
  if (!std::isfinite(d[1])) throw DomainError("state outside the domain D (1 - 2m/r <= 0)");
  return {d[0], tov_detail::h_of_u(eos, d[1])};
}

inline TovState make_state(const EosSpec& eos, double r, double m, double u) {
  const auto f = tov_detail::fluid(eos, u);
  return {r, m, tov_detail::h_of_u(eos, u), f.pressure, f.rho};
}

/// a = sqrt(A gamma / (4 pi (gamma - 1))) rho_O^((gamma - 2) / 2).
inline double natural_length(const EosSpec& eos, double rho_center) {
  const double g = eos.gamma();
  return std::sqrt(eos.A() * g / (4.0 * kPi * (g - 1.0))) * std::pow(rho_center, 0.5 * (g - 2.0));
}

/// Regular-center series start, truncation error O(r0^4).
inline TovState center_start(const EosSpec& eos, double P_O, double r0) {
  if (!(P_O > 0.0)) throw InvalidArgument("central pressure must be positive");
  if (!(r0 > 0.0)) throw InvalidArgument("center offset must be positive");
  const double rho = eos.density_of_pressure(P_O);  // range-checked
  const double u_O = tov_detail::u_of_h(eos, eos.enthalpy_formula(rho));
  const double k = tov_detail::inv_c2(eos);
  const double m = 4.0 * kPi / 3.0 * rho * r0 * r0 * r0;
  const double u = u_O - 2.0 * kPi / 3.0 * (rho + 3.0 * P_O * k) * r0 * r0;
  return make_state(eos, r0, m, u);
}

inline void check_admissible(const EosSpec& eos, double R, double M) {
  if (!(R > 0.0) || !std::isfinite(R)) throw InvalidArgument("boundary radius must be positive");
  if (!(M > 0.0) || !std::isfinite(M)) throw InvalidArgument("boundary mass must be positive");
  if (!(1.0 - 2.0 * M * tov_detail::inv_c2(eos) / R > 0.0)) {
    throw InvalidArgument("boundary data not admissible: 1 - 2M/R must be positive");
  }
}

inline SurfaceData make_surface(const EosSpec& eos, double R, double M) {
  check_admissible(eos, R, M);
  const double k = tov_detail::inv_c2(eos);
  const double g_u = M / (R * R * (1.0 - 2.0 * M * k / R));
  return {R, M, tov_detail::h_of_u(eos, g_u)};
}

/// Inward start at r = R - dr from the vacuum-side expansion
///   u(R - s) = g s + s^2 M (2R - 2M/c^2) / (2 (R^2 - 2MR/c^2)^2),
///   m(R - s) = M - 4 pi R^2 rho(u) s / (n + 1).
inline TovState surface_start(const EosSpec& eos, const SurfaceData& surf, double dr) {
  check_admissible(eos, surf.R, surf.M);
  if (!(dr > 0.0 && dr < surf.R)) throw InvalidArgument("surface offset must lie in (0, R)");
  const double k = tov_detail::inv_c2(eos);
  const double R = surf.R, M = surf.M;
  const double g = M / (R * R * (1.0 - 2.0 * M * k / R));
  const double q = R * R - 2.0 * M * R * k;
  const double u = g * dr + 0.5 * dr * dr * M * (2.0 * R - 2.0 * M * k) / (q * q);
  const double rho = tov_detail::fluid(eos, u).rho;
  const double n = 1.0 / (eos.gamma() - 1.0);
  const double m = M - 4.0 * kPi * R * R * rho * dr / (n + 1.0);
  return make_state(eos, R - dr, m, u);
}

/// An integrated path in r with continuous output of (m, u).
class TovTrajectory {
 public:
  TovTrajectory(EosSpec eos, Direction dir, ode::DenseSolution<2> sol, TovState start)
      : eos_(std::move(eos)), dir_(dir), sol_(std::move(sol)), start_(start) {}

  const EosSpec& eos() const { return eos_; }
  Direction direction() const { return dir_; }
  ExitReason exit() const { return exit_; }
  void set_exit(ExitReason e) { exit_ = e; }
  const ode::DenseSolution<2>& solution() const { return sol_; }
  ode::DenseSolution<2>& solution() { return sol_; }
  const TovState& start() const { return start_; }
  bool empty() const { return sol_.empty(); }

  double r_begin() const { return start_.r; }
  double r_end() const { return sol_.empty() ? start_.r : sol_.t_end(); }

  /// Central values (outward trajectories): series below r0.
  void set_center(double P_O, double rho_O, double u_O) {
    center_ = std::array<double, 3>{P_O, rho_O, u_O};
  }
  bool has_center() const { return center_.has_value(); }
  double central_pressure() const { return center_ ? (*center_)[0] : 0.0; }

  void set_surface(const SurfaceData& s) { surface_ = s; }
  const std::optional<SurfaceData>& surface() const { return surface_; }

  bool contains(double r) const {
    const double lo = std::min(r_begin(), r_end());
    const double hi = std::max(r_begin(), r_end());
    if (center_ && r >= 0.0 && r <= hi) return true;
    return r >= lo && r <= hi;
  }

  TovState state_at(double r) const {
    if (!contains(r)) throw InvalidArgument("trajectory evaluated outside its radius range");
    if (center_ && r < r_begin()) {
      const auto [P_O, rho, u_O] = *center_;
      const double k = tov_detail::inv_c2(eos_);
      return make_state(eos_, r, 4.0 * kPi / 3.0 * rho * r * r * r,
                        u_O - 2.0 * kPi / 3.0 * (rho + 3.0 * P_O * k) * r * r);
    }
    if (sol_.empty()) return start_;
    const auto y = sol_(r);
    return make_state(eos_, r, y[0], y[1]);
  }

  /// u = c^2 h (or the Newtonian enthalpy).
  double u_at(double r) const { return tov_detail::u_of_h(eos_, state_at(r).h); }

  /// States at the start and at every accepted step end.
  std::vector<TovState> states() const {
    std::vector<TovState> out{start_};
    for (const auto& s : sol_.steps()) out.push_back(make_state(eos_, s.t1(), s.y1[0], s.y1[1]));
    return out;
  }

  /// Diagnostics accumulated while stepping.
  std::map<std::string, double>& diagnostics() { return diag_; }
  const std::map<std::string, double>& diagnostics() const { return diag_; }

 private:
  EosSpec eos_;
  Direction dir_;
  ode::DenseSolution<2> sol_;
  TovState start_;
  ExitReason exit_ = ExitReason::IntegrationFailure;
  std::optional<std::array<double, 3>> center_;
  std::optional<SurfaceData> surface_;
  std::map<std::string, double> diag_;
};

struct ShootClassification {
  /// Empty when the run left through an exit the taxonomy does not cover.
  std::optional<Case> kind;
  ExitReason exit = ExitReason::IntegrationFailure;
  double r_exit = 0.0;
  /// +infinity for the blow-up cases.
  double P_exit = 0.0;
  double m_exit = 0.0;
  std::optional<double> P_center;
  Thresholds thresholds;
  /// Absolute values of the gates used in this run.
  double r_floor = 0.0, m_floor = 0.0, P_ceiling = 0.0, slope_floor = 0.0, P_ref = 0.0;
  std::map<std::string, double> diagnostics;

  bool is(Case c) const { return kind && *kind == c; }
  std::string label() const { return kind ? to_string(*kind) : to_string(exit); }
};

struct CenterShot {
  std::optional<SurfaceData> surface;
  TovTrajectory trajectory;
};

struct BoundaryShot {
  ShootClassification classification;
  TovTrajectory trajectory;
};

namespace tov_detail {

/// Step observer enforcing the domain D and dP/dr < 0 on accepted steps.
struct StepMonitor {
  const EosSpec* eos;
  std::map<std::string, double>* diag;
  bool violated = false;

  bool operator()(const ode::DenseStep<2>& s) {
    const double r = s.t1();
    const double m = s.y1[0], u = s.y1[1];
    const double k = inv_c2(*eos);
    const double lapse = 1.0 - 2.0 * m * k / r;
    auto& d = *diag;
    d["accepted_steps"] += 1.0;
    if (!(r > 0.0) || !(lapse > 0.0)) {
      violated = true;
      return false;
    }
    if (u > 0.0) {
      const auto f = fluid(*eos, u);
      if (!(f.rho + f.pressure * k > 0.0) || !(f.pressure > 0.0)) {
        violated = true;
        return false;
      }
      const double bracket = m + 4.0 * kPi * r * r * r * f.pressure * k;
      const double dPdr = -(f.rho + f.pressure * k) * bracket / (r * r * lapse);
      if (!(dPdr < 0.0)) {
        violated = true;
        return false;
      }
      if (h_of_u(*eos, u) > eos->enthalpy_limit() * (1.0 + 1e-12)) d["beyond_validity"] = 1.0;
    }
    return true;
  }
};

inline double trapped_horizon(const EosSpec& eos, double r, const Y& y) {
  return 1.0 - 2.0 * y[0] * inv_c2(eos) / r - 1e-12;
}

inline void append(ode::DenseSolution<2>& into, const ode::DenseSolution<2>& more) {
  for (const auto& s : more.steps()) into.push_back(s);
}

}  // namespace tov_detail

/// Outward shot from the regular center until the enthalpy vanishes.
inline CenterShot shoot_from_center(const EosSpec& eos, double P_O, const TovOptions& opt = {}) {
  using namespace tov_detail;
  if (!(P_O > 0.0) || !std::isfinite(P_O)) {
    throw InvalidArgument("central pressure must be positive");
  }
  const double rho_O = eos.density_of_pressure(P_O);  // throws beyond validity
  const double u_O = u_of_h(eos, eos.enthalpy_formula(rho_O));
  const double a = natural_length(eos, rho_O);
  const double r0 = opt.r0_factor * a;
  const auto start = center_start(eos, P_O, r0);

  ode::Options<2> o;
  o.rtol = opt.rtol;
  o.atol = opt.atol;
  o.scale = {4.0 * kPi * rho_O * a * a * a, u_O};
  std::vector<ode::Event<2>> events{
      {"surface", [](double, const Y& y) { return y[1]; }, -1},
      {"horizon", [&eos](double r, const Y& y) { return trapped_horizon(eos, r, y); }, -1}};
  TovTrajectory traj(eos, Direction::Outward, {}, start);
  traj.set_center(P_O, rho_O, u_O);
  StepMonitor monitor{&eos, &traj.diagnostics()};
  auto res = ode::integrate<2>([&eos](double r, const Y& y) { return rhs_u(eos, r, y); }, r0,
                               Y{start.m, u_of_h(eos, start.h)}, opt.r_max_factor * a, o,
                               events, std::ref(monitor));
  traj.solution() = std::move(res.solution);
  std::optional<SurfaceData> surf;
  if (monitor.violated) {
    traj.set_exit(ExitReason::DomainViolation);
  } else if (res.status == ode::Status::Event && res.event_index == 0) {
    traj.set_exit(ExitReason::Surface);
    surf = make_surface(eos, res.t, res.y[0]);
    traj.set_surface(*surf);
  } else if (res.status == ode::Status::Event) {
    traj.set_exit(ExitReason::Horizon);
  } else if (res.status == ode::Status::ReachedEnd) {
    traj.set_exit(ExitReason::RadiusGuard);
  } else {
    traj.set_exit(ExitReason::IntegrationFailure);
  }
  return {surf, std::move(traj)};
}

/// Inward shot from the vacuum boundary data (R, M) and classification of
/// the outcome.
inline BoundaryShot shoot_from_boundary(const EosSpec& eos, const SurfaceData& data,
                                        const TovOptions& opt = {}) {
  using namespace tov_detail;
  const auto surf = make_surface(eos, data.R, data.M);
  const double R = surf.R, M = surf.M;
  const double k = inv_c2(eos);
  const auto& th = opt.thresholds;

  ShootClassification cls;
  cls.thresholds = th;
  cls.r_floor = th.r_floor * R;
  cls.m_floor = th.m_floor * M;
  const double rho_mean = 3.0 * M / (4.0 * kPi * R * R * R);
  cls.P_ref = eos.pressure_formula(rho_mean);
  cls.P_ceiling = th.p_ceiling * cls.P_ref;
  cls.slope_floor = th.slope_floor * cls.P_ref / R;

  const auto start = surface_start(eos, surf, opt.dr_factor * R);
  TovTrajectory traj(eos, Direction::Inward, {}, start);
  traj.set_surface(surf);

  ode::Options<2> o;
  o.rtol = opt.rtol;
  o.atol = opt.atol;
  o.scale = {M, u_of_h(eos, surf.g_s) * R};

  const bool series_eos = !eos.pure_polytrope() && !eos.nonrelativistic();
  const double u_valid = series_eos ? u_of_h(eos, eos.enthalpy_limit()) : 0.0;
  auto rhs_fn = [&eos](double r, const Y& y) { return rhs_u(eos, r, y); };

  // Runs one inward segment from (r, y) with the given u ceiling.
  enum Ev { kExtremum = 0, kCeiling = 1, kHorizon = 2, kRange = 3 };
  auto segment = [&](double r, const Y& y, double u_ceiling) {
    std::vector<ode::Event<2>> events{
        {"pressure_extremum",
         [&eos, k](double rr, const Y& yy) {
           return yy[0] + 4.0 * kPi * rr * rr * rr * fluid(eos, yy[1]).pressure * k;
         },
         -1},
        {"ceiling", [u_ceiling](double, const Y& yy) { return yy[1] - u_ceiling; }, +1},
        {"horizon", [&eos](double rr, const Y& yy) { return trapped_horizon(eos, rr, yy); }, -1}};
    if (series_eos) {
      events.push_back({"eos_range", [u_valid](double, const Y& yy) { return u_valid - yy[1]; }, -1});
    }
    StepMonitor monitor{&eos, &traj.diagnostics()};
    auto res = ode::integrate<2>(rhs_fn, r, y, cls.r_floor, o, events, std::ref(monitor));
    append(traj.solution(), res.solution);
    return std::make_pair(std::move(res), monitor.violated);
  };

  auto u_ceiling_at = [&](double factor) {
    const auto u = enthalpy_u_of_pressure(eos, cls.P_ceiling * factor);
    return u ? *u : std::numeric_limits<double>::infinity();
  };

  auto finish_exit = [&](ExitReason e, double r, const Y& y) {
    traj.set_exit(e);
    cls.exit = e;
    cls.r_exit = r;
    cls.m_exit = y[0];
    cls.P_exit = fluid(eos, y[1]).pressure;
  };

  // P_center from series-corrected enthalpy at two radii, Richardson-combined,
  // with the irregular m_O / r mode removed.
  auto recover_center = [&](double m_O) {
    const double r_in = std::max(opt.richardson_radius * R, 2.0 * cls.r_exit);
    auto corrected = [&](double r) {
      const auto s = traj.state_at(r);
      const double u = u_of_h(eos, s.h);
      return u - m_O / r + 2.0 * kPi / 3.0 * (s.rho + 3.0 * s.P * k) * r * r;
    };
    const double e1 = corrected(r_in);
    const double e2 = corrected(2.0 * r_in);
    const double u_c = (16.0 * e1 - e2) / 15.0;
    cls.diagnostics["richardson_radius"] = r_in;
    cls.diagnostics["richardson_spread"] = std::abs(e1 - e2) / std::max(std::abs(u_c), 1e-300);
    return fluid(eos, u_c).pressure;
  };

  auto accept_center = [&](double m_O, const char* path) {
    const double P_c = recover_center(m_O);
    cls.diagnostics["m_center_estimate"] = m_O;
    cls.diagnostics[std::string("case11_via_") + path] = 1.0;
    if (!(std::isfinite(P_c) && P_c > 0.0) || !eos.pressure_in_range(P_c)) {
      cls.diagnostics["P_center_out_of_range"] = std::isfinite(P_c) ? P_c : -1.0;
      cls.exit = ExitReason::EosRange;
      traj.set_exit(ExitReason::EosRange);
      return;
    }
    cls.kind = Case::Case11;
    cls.P_center = P_c;
  };

  double r = start.r;
  Y y{start.m, u_of_h(eos, start.h)};
  std::vector<double> ceiling_radii;
  double factor = 1.0;
  for (int seg = 0; seg < 3; ++seg, factor *= th.ceiling_step) {
    auto [res, violated] = segment(r, y, u_ceiling_at(factor));
    if (violated) {
      finish_exit(ExitReason::DomainViolation, res.t, res.y);
      break;
    }
    if (res.status == ode::Status::ReachedEnd) {
      finish_exit(ExitReason::ReachedFloor, res.t, res.y);
      if (!ceiling_radii.empty()) {
        // Still above the ceiling at r_floor.
        cls.kind = Case::Case10;
        cls.P_exit = std::numeric_limits<double>::infinity();
        cls.diagnostics["P_at_floor"] = fluid(eos, res.y[1]).pressure;
      } else if (std::abs(res.y[0]) <= cls.m_floor) {
        accept_center(res.y[0], "floor");
      } else {
        // m_O > 0 left over: the pressure keeps rising toward r = 0.
        cls.kind = Case::Case10;
        cls.diagnostics["rising_at_floor"] = 1.0;
        cls.P_exit = std::numeric_limits<double>::infinity();
      }
      break;
    }
    if (res.status != ode::Status::Event) {
      finish_exit(ExitReason::IntegrationFailure, res.t, res.y);
      break;
    }
    if (res.event_index == kExtremum) {
      finish_exit(ExitReason::PressureExtremum, res.t, res.y);
      const auto f = fluid(eos, res.y[1]);
      const double lapse = 1.0 - 2.0 * res.y[0] * k / res.t;
      const double slope = (f.rho + f.pressure * k) *
                           std::abs(res.y[0] + 4.0 * kPi * std::pow(res.t, 3) * f.pressure * k) /
                           (res.t * res.t * lapse);
      cls.diagnostics["dPdr_at_exit"] = slope;
      const double m_O = res.y[0] - 4.0 * kPi / 3.0 * f.rho * std::pow(res.t, 3);
      cls.diagnostics["m_center_estimate"] = m_O;
      if (slope > cls.slope_floor) {
        cls.diagnostics["slope_gate_failed"] = 1.0;
        break;
      }
      if (ceiling_radii.empty() && std::abs(m_O) <= cls.m_floor) {
        accept_center(m_O, "extremum");
      } else {
        cls.kind = Case::Case01;
      }
      break;
    }
    if (res.event_index == kCeiling) {
      ceiling_radii.push_back(res.t);
      cls.diagnostics["ceiling_radius_" + std::to_string(seg)] = res.t;
      finish_exit(ExitReason::PressureCeiling, res.t, res.y);
      r = res.t;
      y = res.y;
      continue;
    }
    finish_exit(res.event_index == kHorizon ? ExitReason::Horizon : ExitReason::EosRange, res.t,
                res.y);
    break;
  }

  if (ceiling_radii.size() == 3) {
    const double r1 = ceiling_radii[0], r2 = ceiling_radii[1], r3 = ceiling_radii[2];
    const double d1 = r2 - r1, d2 = r3 - r2;
    const double denom = d2 - d1;
    const double r_inf = denom != 0.0 ? r3 - d2 * d2 / denom : r3;
    cls.diagnostics["blowup_radius_estimate"] = r_inf;
    cls.kind = r_inf <= cls.r_floor ? Case::Case10 : Case::Case00;
    cls.P_exit = std::numeric_limits<double>::infinity();
    cls.r_exit = std::max(r_inf, 0.0);
    cls.exit = ExitReason::PressureCeiling;
  }
  for (const auto& [key, v] : traj.diagnostics()) cls.diagnostics[key] = v;
  return {std::move(cls), std::move(traj)};
}

// --- metric ---------------------------------------------------------------

/// Values and first two derivatives of a metric function at r_+.
struct JunctionSide {
  std::array<double, 3> e2F{};  ///< e^{2F}, d/dr, d^2/dr^2
  std::array<double, 3> e2H{};  ///< e^{2H}, d/dr, d^2/dr^2
};

struct MetricCoeffs {
  std::vector<double> r;
  std::vector<double> F;
  std::vector<double> H;
  double R = 0.0;
  double M = 0.0;
  JunctionSide interior;
  JunctionSide exterior;
};

/// Exterior Schwarzschild values at r: e^{2F} = 1 - 2M/(c^2 r), e^{2H} its inverse.
inline JunctionSide schwarzschild(double M, double r, double k) {
  const double f = 1.0 - 2.0 * M * k / r;
  const double f1 = 2.0 * M * k / (r * r);
  const double f2 = -4.0 * M * k / (r * r * r);
  JunctionSide s;
  s.e2F = {f, f1, f2};
  s.e2H = {1.0 / f, -f1 / (f * f), -f2 / (f * f) + 2.0 * f1 * f1 / (f * f * f)};
  return s;
}

/// H = -1/2 ln(1 - 2m/(c^2 r)), F = 1/2 ln(1 - 2M/(c^2 R)) - h on the accepted
/// steps of a complete outward trajectory, plus one-sided values at r_+.
/// Interior derivatives at r_+ are the limits of the TOV right-hand side.
inline MetricCoeffs metric_coefficients(const TovTrajectory& traj) {
  using namespace tov_detail;
  if (traj.direction() != Direction::Outward || traj.exit() != ExitReason::Surface ||
      !traj.surface() || !traj.has_center()) {
    throw InvalidArgument("metric coefficients need a complete center-to-surface trajectory");
  }
  const auto& eos = traj.eos();
  const auto surf = *traj.surface();
  const double R = surf.R, M = surf.M;
  const double k = inv_c2(eos);
  MetricCoeffs mc;
  mc.R = R;
  mc.M = M;
  const double F_R = 0.5 * std::log1p(-2.0 * M * k / R);
  auto push = [&](double r, double m, double h) {
    mc.r.push_back(r);
    mc.H.push_back(r > 0.0 ? -0.5 * std::log1p(-2.0 * m * k / r) : 0.0);
    mc.F.push_back(eos.nonrelativistic() ? 0.0 : F_R - h);
  };
  push(0.0, 0.0, eos.enthalpy_formula(eos.density_of_pressure(traj.central_pressure())));
  for (const auto& s : traj.states()) push(s.r, s.m, std::max(s.h, 0.0));

  mc.exterior = schwarzschild(M, R, k);

  // Interior limits with m(R) from the trajectory, rho(R) = P(R) = 0.
  const auto end = traj.solution().steps().back().y1;
  const double m = end[0];
  const double q = R * R - 2.0 * m * R * k;        // r^2 (1 - 2m/(c^2 r))
  const double u1 = -m / q;                         // du/dr
  const double u2 = m * (2.0 * R - 2.0 * m * k) / (q * q);
  const double f = 1.0 - 2.0 * m * k / R;
  auto& in = mc.interior;
  // e^{2F} = f(R) e^{-2 k u}
  in.e2F = {f, f * (-2.0 * k * u1), f * (4.0 * k * k * u1 * u1 - 2.0 * k * u2)};
  // q = 1 - 2m/(c^2 r): m' = 4 pi r^2 rho = 0, m'' = 4 pi R^2 (drho/du) u'
  const double drho_du = eos.density_slope_of_enthalpy(0.0) * (eos.nonrelativistic() ? 1.0 : k);
  const double m2 = std::isinf(drho_du) ? std::numeric_limits<double>::infinity()
                                        : 4.0 * kPi * R * R * drho_du * u1;
  const double g0 = f;
  const double g1 = 2.0 * m * k / (R * R);
  const double g2 = -2.0 * k * m2 / R - 4.0 * m * k / (R * R * R);
  in.e2H = {1.0 / g0, -g1 / (g0 * g0), -g2 / (g0 * g0) + 2.0 * g1 * g1 / (g0 * g0 * g0)};
  return mc;
}

struct JunctionGap {
  std::string coefficient;  ///< "e2F" or "e2H"
  int derivative = 0;
  double interior = 0.0;
  double exterior = 0.0;
  /// |interior - exterior| R^derivative.
  double scaled_gap = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct JunctionReport {
  int order = 0;
  std::vector<JunctionGap> gaps;
  bool pass = true;
};

/// Tolerance for a derivative of the given order: roundoff for values,
/// 1e-5 in units of R^order for derivatives.
inline double junction_tolerance(int order) { return order == 0 ? 64.0 * DBL_EPSILON : 1e-5; }

inline JunctionReport junction_check(const MetricCoeffs& mc, int order) {
  if (order < 0 || order > 2) throw InvalidArgument("junction order must be 0, 1 or 2");
  JunctionReport rep;
  rep.order = order;
  for (int d = 0; d <= order; ++d) {
    for (int which = 0; which < 2; ++which) {
      JunctionGap g;
      g.coefficient = which == 0 ? "e2F" : "e2H";
      g.derivative = d;
      g.interior = which == 0 ? mc.interior.e2F[d] : mc.interior.e2H[d];
      g.exterior = which == 0 ? mc.exterior.e2F[d] : mc.exterior.e2H[d];
      g.scaled_gap = std::abs(g.interior - g.exterior) * std::pow(mc.R, d);
      if (std::isnan(g.scaled_gap)) g.scaled_gap = std::numeric_limits<double>::infinity();
      g.tolerance = junction_tolerance(d);
      g.pass = g.scaled_gap <= g.tolerance;
      rep.pass = rep.pass && g.pass;
      rep.gaps.push_back(g);
    }
  }
  return rep;
}

/// Rows (r, m, P, rho, h, F, H) at every accepted step.
inline std::vector<std::array<double, 7>> trajectory_rows(const TovTrajectory& traj) {
  const auto& eos = traj.eos();
  const double k = tov_detail::inv_c2(eos);
  double F_R = 0.0;
  if (traj.surface()) F_R = 0.5 * std::log1p(-2.0 * traj.surface()->M * k / traj.surface()->R);
  std::vector<std::array<double, 7>> rows;
  for (const auto& s : traj.states()) {
    const double H = -0.5 * std::log1p(-2.0 * s.m * k / s.r);
    const double F = eos.nonrelativistic() ? 0.0 : F_R - s.h;
    rows.push_back({s.r, s.m, s.P, s.rho, s.h, F, H});
  }
  return rows;
}

}  // namespace stellar_match
