// Acceptance suite: one PASS/FAIL line per criterion at its pinned tolerance.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "stellar_match/distortion.hpp"
#include "stellar_match/eos.hpp"
#include "stellar_match/lane_emden.hpp"
#include "stellar_match/matching.hpp"
#include "stellar_match/surface_fit.hpp"
#include "stellar_match/tov.hpp"

namespace sm = stellar_match;
constexpr double kPi = std::numbers::pi;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<double> log_points(double lo, double hi, int n) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(lo * std::pow(hi / lo, double(i) / (n - 1)));
  return v;
}

double j2(double x) {
  if (x < 0.05) {
    const double x2 = x * x;
    return x2 / 15.0 - x2 * x2 / 210.0 + x2 * x2 * x2 / 7560.0;
  }
  return (3.0 / (x * x * x) - 1.0 / x) * std::sin(x) - 3.0 * std::cos(x) / (x * x);
}

const sm::EosSpec& rel53() {
  static const sm::EosSpec eos(5.0 / 3.0, 1.0, 1.0);
  return eos;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1 -----------------------------------------------------------------------
Outcome lane_emden_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto n1 = sm::solve_lane_emden(1.0);
  const auto n0 = sm::solve_lane_emden(0.0);
  const double e1 = std::abs(n1.xi1() - kPi), e2 = std::abs(n1.mu1() - kPi);
  const double e3 = std::abs(n0.xi1() - std::sqrt(6.0));
  const double t = seconds_since(t0);
  return {e1 < 1e-8 && e2 < 1e-8 && e3 < 1e-10 && t < 1.0,
          fmt("|xi1-pi|=%.2e |mu1-pi|=%.2e |xi1(n=0)-sqrt6|=%.2e, %.3f s", e1, e2, e3, t)};
}

// 2 -----------------------------------------------------------------------
Outcome distortion_closed_forms() {
  const auto d = sm::solve_distortion(sm::solve_lane_emden(1.0));
  double eh = 0.0, ep = 0.0;
  for (int i = 0; i <= 2000; ++i) {
    const double xi = d.xi1() * i / 2000.0;
    const double h0 = xi < 1e-4 ? xi * xi / 6.0 - std::pow(xi, 4) / 120.0 : 1.0 - std::sin(xi) / xi;
    eh = std::max(eh, std::abs(d.h0().value(xi) - h0));
    ep = std::max(ep, std::abs(d.psi2().value(xi) - 15.0 * j2(xi)));
  }
  const double eA = std::abs(d.A2() - (-kPi * kPi / 18.0));
  bool signs = true;
  std::string sign_detail;
  for (double n : {1.0, 1.5, 3.0}) {
    const auto dn = sm::solve_distortion(sm::solve_lane_emden(n));
    const bool ok = dn.A2() < 0.0 && dn.psi2().value_at_surface() > 0.0 && dn.c2() > 0.0;
    signs = signs && ok;
    sign_detail += fmt(" n=%g:%s", n, ok ? "ok" : "bad");
  }
  return {eh < 1e-8 && ep < 1e-8 && eA < 1e-8 && signs,
          fmt("max|h0 err|=%.2e max|psi2 err|=%.2e |A2 err|=%.2e, signs", eh, ep, eA) +
              sign_detail};
}

// 3 -----------------------------------------------------------------------
struct RoundTrip {
  int case11 = 0;
  double worst = 0.0;
  std::vector<sm::TovTrajectory> trajectories;
};

RoundTrip& round_trip_data() {
  static RoundTrip rt = [] {
    RoundTrip r;
    for (double P : log_points(1e-6, 1e-1, 20)) {
      auto fwd = sm::shoot_from_center(rel53(), P);
      if (!fwd.surface) {
        r.worst = INFINITY;
        continue;
      }
      auto back = sm::shoot_from_boundary(rel53(), *fwd.surface);
      const auto& c = back.classification;
      if (c.is(sm::Case::Case11) && c.P_center) {
        ++r.case11;
        r.worst = std::max(r.worst, std::abs(*c.P_center - P) / P);
      } else {
        r.worst = INFINITY;
      }
      r.trajectories.push_back(std::move(fwd.trajectory));
      r.trajectories.push_back(std::move(back.trajectory));
    }
    return r;
  }();
  return rt;
}

Outcome tov_round_trip() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& r = round_trip_data();
  const double t = seconds_since(t0);
  return {r.case11 == 20 && r.worst < 1e-5 && t < 30.0,
          fmt("%d/20 Case11, max |P_center-P_O|/P_O=%.2e, %.2f s", r.case11, r.worst, t)};
}

// 4 -----------------------------------------------------------------------
std::string summary_text(const sm::SweepReport& rep) {
  std::ostringstream os;
  os.precision(17);
  const auto& s = rep.summary;
  os << s.samples << ' ' << s.far_samples << ' ' << s.far_case11 << ' ' << s.case11 << ' '
     << s.case11_only_near << ' ' << s.on_curve << ' ' << s.on_curve_case11 << ' '
     << s.max_case11_distance;
  for (const auto& [k, v] : s.labels) os << ' ' << k << '=' << v;
  for (const auto& x : rep.samples) os << '\n' << x.R << ' ' << x.M << ' ' << x.label << ' ' << x.distance;
  for (const auto& x : rep.on_curve) os << '\n' << *x.P_O << ' ' << x.label << ' ' << x.distance;
  return os.str();
}

Outcome ae_failure_sweep() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto scan = sm::scan_components(rel53(), {1e-6, 1.0, 25});
  sm::SamplerConfig sc;
  sc.seed = 20240101;
  sc.count = 1000;
  sc.exclusion = 1e-2;
  sc.on_curve = 100;
  sm::SweepOptions one, many;
  many.threads = 3;
  const auto a = sm::ae_failure_sweep(rel53(), scan, sc, one);
  const auto b = sm::ae_failure_sweep(rel53(), scan, sc, many);
  const double t = seconds_since(t0);
  const auto& s = a.summary;
  bool far = s.samples == 1000 && s.far_samples == 1000;
  const bool identical = summary_text(a) == summary_text(b);
  return {far && s.far_case11 == 0 && s.on_curve_case11 == s.on_curve && s.on_curve == 100 &&
              s.case11_only_near && identical && t < 600.0,
          fmt("%zu curves, %zu samples at distance > 1e-2: %zu Case11; on-curve %zu/%zu Case11; "
              "reproducible=%s; %.2f s",
              scan.curves.size(), s.far_samples, s.far_case11, s.on_curve_case11, s.on_curve,
              identical ? "yes" : "no", t)};
}

// 5 -----------------------------------------------------------------------
Outcome nonrelativistic_consistency() {
  double worst = 0.0;
  for (double g : {1.5, 5.0 / 3.0, 2.0}) {
    const sm::EosSpec eos(g, 1.0, 1e4);
    const double P = 1e-3;
    const auto shot = sm::shoot_from_center(eos, P);
    if (!shot.surface) return {false, fmt("gamma=%g: no surface", g)};
    const auto le = sm::solve_lane_emden(1.0 / (g - 1.0));
    const double rho = eos.density_of_pressure(P);
    const double a = sm::natural_length(eos, rho);
    const double R = a * le.xi1(), M = 4.0 * kPi * rho * a * a * a * le.mu1();
    worst = std::max({worst, std::abs(shot.surface->R / R - 1.0), std::abs(shot.surface->M / M - 1.0)});
  }
  return {worst < 1e-4, fmt("max relative deviation from (a xi1, 4 pi rho a^3 mu1) = %.2e", worst)};
}

// 6 -----------------------------------------------------------------------
Outcome junction() {
  const auto shot = sm::shoot_from_center(rel53(), 1e-3);
  const auto rep = sm::junction_check(sm::metric_coefficients(shot.trajectory), 2);
  double worst0 = 0.0, worst12 = 0.0;
  for (const auto& g : rep.gaps) {
    double& w = g.derivative == 0 ? worst0 : worst12;
    w = std::max(w, g.scaled_gap);
  }
  // Independent of the analytic limits: one-sided second-order differences
  // of the interior solution against the exterior first derivatives.
  const auto& traj = shot.trajectory;
  const double R = shot.surface->R, M = shot.surface->M;
  const double e2F_R = 1.0 - 2.0 * M / R;
  auto e2F = [&](double r) { return e2F_R * std::exp(-2.0 * traj.state_at(r).h); };
  auto e2H = [&](double r) { return 1.0 / (1.0 - 2.0 * traj.state_at(r).m / r); };
  const double d = 1e-5 * R;
  auto one_sided = [&](auto f) { return (3.0 * f(R) - 4.0 * f(R - d) + f(R - 2.0 * d)) / (2.0 * d); };
  const auto ext = sm::schwarzschild(M, R, 1.0);
  const double fd = std::max(std::abs(one_sided(e2F) - ext.e2F[1]) * R,
                             std::abs(one_sided(e2H) - ext.e2H[1]) * R);
  return {rep.pass && fd < 1e-5,
          fmt("order 0 max gap %.2e (tol %.2e), orders 1-2 max scaled gap %.2e (tol 1e-5); "
              "finite-difference first derivatives %.2e",
              worst0, sm::junction_tolerance(0), worst12, fd)};
}

// 7 -----------------------------------------------------------------------
Outcome residual_scaling() {
  const auto d = sm::solve_distortion(sm::solve_lane_emden(1.0));
  const auto zeta = sm::uniform_zeta_grid(41);
  const auto bs = sm::log_ladder(1e-4, 1e-2, 5);
  const auto rep = sm::residual_scaling(d, bs, zeta);
  std::vector<double> r;
  for (double z : zeta) r.push_back(3.0 / std::sqrt(1.0 + 0.3 * z * z));
  const auto exact = sm::fit_ellipsoid(zeta, r);
  const bool roundoff = exact.rms_residual <= sm::roundoff_floor() * exact.a0;
  return {std::abs(rep.slope - 2.0) <= 0.1 && !rep.degenerate && roundoff,
          fmt("slope %.4f +- %.4f over b = 1e-4..1e-2 (5 points); exact ellipsoid rms/a0 = %.2e",
              rep.slope, rep.slope_half_width, exact.rms_residual / exact.a0)};
}

// 8 -----------------------------------------------------------------------
Outcome stratification() {
  const auto d = sm::solve_distortion(sm::solve_lane_emden(1.0));
  const auto zeta = sm::uniform_zeta_grid(41);
  const std::vector<double> levels{0.2, 0.5, 0.8};
  const auto rot = sm::stratification_report(d, 1e-2, levels, zeta);
  const auto ctl = sm::stratification_report(d, 0.0, levels, zeta);
  double rot_max = 0.0, ctl_max = 0.0;
  for (const auto& l : rot.levels) rot_max = std::max(rot_max, l.normalized_rms);
  for (const auto& l : ctl.levels) ctl_max = std::max(ctl_max, l.normalized_rms);
  const double floor = 10.0 * sm::roundoff_floor();
  return {rot_max > floor && ctl_max <= floor,
          fmt("b=1e-2 max normalized rms %.2e, b=0 control max %.2e, threshold %.2e", rot_max,
              ctl_max, floor)};
}

// 9 -----------------------------------------------------------------------
Outcome invariants() {
  // EOS round trips.
  double worst_eos = 0.0;
  const std::vector<sm::EosSpec> eoses{sm::EosSpec(5.0 / 3.0, 1.0, 1.0), sm::EosSpec(2.0, 1.0, 1.0),
                                       sm::EosSpec(1.5, 2.0, 1.0, {0.3, -0.1}),
                                       sm::EosSpec::nonrelativistic(5.0 / 3.0)};
  for (const auto& eos : eoses) {
    const double top = std::isfinite(eos.validity_density()) ? eos.validity_density() : 10.0;
    for (double rho : log_points(1e-8 * top, 0.999 * top, 40)) {
      const double P = eos.pressure_of_density(rho);
      worst_eos = std::max(worst_eos, std::abs(eos.density_of_pressure(P) / rho - 1.0));
      const double h = eos.enthalpy_of_pressure(P);
      worst_eos = std::max(worst_eos, std::abs(eos.pressure_of_enthalpy(h) / P - 1.0));
    }
  }
  // Monotone pressure and no domain violation along every trajectory.
  std::size_t trajectories = 0, violations = 0, domain = 0;
  auto check = [&](const sm::TovTrajectory& t) {
    ++trajectories;
    if (t.exit() == sm::ExitReason::DomainViolation) ++domain;
    auto s = t.states();
    if (t.direction() == sm::Direction::Inward) std::reverse(s.begin(), s.end());
    for (std::size_t i = 1; i < s.size(); ++i) {
      // Pressure falls outward; the last inward state may sit on dP/dr = 0.
      const bool last = t.direction() == sm::Direction::Inward && i == 1;
      if (s[i].P > 0.0 && !(s[i].P < s[i - 1].P || (last && s[i].P <= s[i - 1].P))) ++violations;
      if (!(1.0 - 2.0 * s[i].m / s[i].r > 0.0)) ++domain;
    }
  };
  for (const auto& t : round_trip_data().trajectories) check(t);
  const auto scan = sm::scan_components(rel53(), {1e-6, 1.0, 13});
  sm::SamplerConfig sc;
  sc.count = 150;
  sc.on_curve = 0;
  sc.seed = 99;
  const auto rep = sm::ae_failure_sweep(rel53(), scan, sc);
  for (const auto& x : rep.samples) check(sm::shoot_from_boundary(rel53(), {x.R, x.M, 0.0}).trajectory);
  // Parallel determinism.
  sm::SweepOptions par;
  par.threads = 4;
  const auto rep4 = sm::ae_failure_sweep(rel53(), scan, sc, par);
  const bool deterministic = summary_text(rep) == summary_text(rep4);
  return {worst_eos < 1e-10 && violations == 0 && domain == 0 && deterministic,
          fmt("EOS round trip max %.2e; %zu trajectories, %zu dP/dr violations, %zu domain "
              "violations; parallel sweep deterministic=%s",
              worst_eos, trajectories, violations, domain, deterministic ? "yes" : "no")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"Lane-Emden oracles", lane_emden_oracles},
      {"distortion closed forms and sign facts", distortion_closed_forms},
      {"TOV round trip", tov_round_trip},
      {"a.e.-failure sweep", ae_failure_sweep},
      {"nonrelativistic consistency", nonrelativistic_consistency},
      {"junction check", junction},
      {"ellipsoid residual scaling", residual_scaling},
      {"stratification illustration", stratification},
      {"invariant suites", invariants},
  };
  const auto t0 = std::chrono::steady_clock::now();
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("criterion %zu: %s  %s: %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("acceptance: %d/%zu passed in %.2f s\n", int(criteria.size()) - failed,
              criteria.size(), seconds_since(t0));
  return failed == 0 ? 0 : 1;
}
