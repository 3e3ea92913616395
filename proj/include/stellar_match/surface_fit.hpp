#pragma once

// Least-squares ellipsoid fits r = a0 / sqrt(1 + a1 zeta^2) of surface and
// level curves, and the scaling of the fit residual with the rotation
// parameter.

#include <algorithm>
#include <array>
#include <cfloat>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "stellar_match/distortion.hpp"
#include "stellar_match/errors.hpp"

namespace stellar_match {

struct EllipsoidFit {
  double a0 = 0.0;
  double a1 = 0.0;
  double rms_residual = 0.0;
  double max_residual = 0.0;
  double gradient_norm = 0.0;
  bool converged = false;
  int iterations = 0;

  double model(double zeta) const { return a0 / std::sqrt(1.0 + a1 * zeta * zeta); }
};

struct FitOptions {
  int max_iterations = 200;
  double step_tol = 1e-12;
  double gradient_tol = 1e-14;
};

namespace fit_detail {

struct Eval {
  double ssq = 0.0;
  double g0 = 0.0, g1 = 0.0;  // J^T r
  double n00 = 0.0, n01 = 0.0, n11 = 0.0;  // J^T J
};

inline Eval evaluate(std::span<const double> zeta, std::span<const double> r, double a0,
                     double a1) {
  Eval e;
  for (std::size_t i = 0; i < zeta.size(); ++i) {
    const double z2 = zeta[i] * zeta[i];
    const double s = 1.0 + a1 * z2;
    const double inv = 1.0 / std::sqrt(s);
    const double res = r[i] - a0 * inv;
    const double j0 = inv;
    const double j1 = -0.5 * a0 * z2 * inv / s;
    e.ssq += res * res;
    e.g0 += j0 * res;
    e.g1 += j1 * res;
    e.n00 += j0 * j0;
    e.n01 += j0 * j1;
    e.n11 += j1 * j1;
  }
  return e;
}

}  // namespace fit_detail

/// Damped Gauss-Newton on the normal equations with the analytic Jacobian.
/// The step is halved until the sum of squares decreases and 1 + a1 > 0.
inline EllipsoidFit fit_ellipsoid(std::span<const double> zeta, std::span<const double> r,
                                  const FitOptions& opt = {}) {
  if (zeta.size() != r.size()) throw InvalidArgument("zeta and r must have equal length");
  if (zeta.size() < 3) throw InvalidArgument("ellipsoid fit needs at least three samples");
  std::size_t i_eq = 0, i_pole = 0;
  for (std::size_t i = 0; i < zeta.size(); ++i) {
    if (!(zeta[i] >= -1.0 && zeta[i] <= 1.0)) throw InvalidArgument("zeta must lie in [-1, 1]");
    if (!(r[i] > 0.0) || !std::isfinite(r[i])) throw InvalidArgument("radii must be positive");
    if (std::abs(zeta[i]) < std::abs(zeta[i_eq])) i_eq = i;
    if (std::abs(zeta[i]) > std::abs(zeta[i_pole])) i_pole = i;
  }
  double a0 = r[i_eq];
  double a1 = 0.0;
  const double zp2 = zeta[i_pole] * zeta[i_pole];
  if (zp2 > 0.0) a1 = ((a0 / r[i_pole]) * (a0 / r[i_pole]) - 1.0) / zp2;
  if (!(1.0 + a1 > 0.0)) a1 = 0.0;

  EllipsoidFit fit;
  auto e = fit_detail::evaluate(zeta, r, a0, a1);
  for (int it = 1; it <= opt.max_iterations; ++it) {
    fit.iterations = it;
    const double det = e.n00 * e.n11 - e.n01 * e.n01;
    double d0, d1;
    if (e.n11 > 0.0 && det > 1e-300) {
      d0 = (e.n11 * e.g0 - e.n01 * e.g1) / det;
      d1 = (e.n00 * e.g1 - e.n01 * e.g0) / det;
    } else {
      // All samples on the equator: a1 is unidentifiable, keep it fixed.
      d0 = e.g0 / e.n00;
      d1 = 0.0;
    }
    const double rel_step =
        std::max(std::abs(d0) / std::abs(a0), std::abs(d1) / (1.0 + std::abs(a1)));
    double t = 1.0;
    bool accepted = false;
    for (int k = 0; k < 60; ++k, t *= 0.5) {
      const double b0 = a0 + t * d0;
      const double b1 = a1 + t * d1;
      if (!(1.0 + b1 > 0.0) || !(b0 > 0.0)) continue;
      const auto trial = fit_detail::evaluate(zeta, r, b0, b1);
      if (trial.ssq < e.ssq) {
        a0 = b0;
        a1 = b1;
        e = trial;
        accepted = true;
        break;
      }
    }
    fit.gradient_norm = std::hypot(e.g0, e.g1);
    if (rel_step < opt.step_tol || fit.gradient_norm < opt.gradient_tol) {
      fit.converged = true;
      break;
    }
    if (!accepted) {
      // No descent left along the Gauss-Newton direction: roundoff floor.
      fit.converged = rel_step < 1e-7;
      break;
    }
  }
  if (!fit.converged) {
    throw ConvergenceError("ellipsoid fit did not converge after " +
                           std::to_string(fit.iterations) + " iterations");
  }
  fit.a0 = a0;
  fit.a1 = a1;
  double sum = 0.0, worst = 0.0;
  for (std::size_t i = 0; i < zeta.size(); ++i) {
    const double res = std::abs(r[i] - fit.model(zeta[i]));
    sum += res * res;
    worst = std::max(worst, res);
  }
  fit.rms_residual = std::sqrt(sum / static_cast<double>(zeta.size()));
  fit.max_residual = worst;
  return fit;
}

/// Residual of a sample set against a fit, as rows (zeta, r, r_fit, residual).
inline std::vector<std::array<double, 4>> fit_residuals(const EllipsoidFit& fit,
                                                        std::span<const double> zeta,
                                                        std::span<const double> r) {
  std::vector<std::array<double, 4>> rows;
  rows.reserve(zeta.size());
  for (std::size_t i = 0; i < zeta.size(); ++i) {
    const double m = fit.model(zeta[i]);
    rows.push_back({zeta[i], r[i], m, r[i] - m});
  }
  return rows;
}

/// Normalised rms residual below which a fit is indistinguishable from exact.
inline double roundoff_floor() { return 16.0 * DBL_EPSILON; }

struct ScalingPoint {
  double b = 0.0;
  double rms_residual = 0.0;
  EllipsoidFit fit;
};

struct ScalingReport {
  std::vector<ScalingPoint> points;
  double slope = 0.0;
  double intercept = 0.0;
  /// 95% confidence half-width of the slope.
  double slope_half_width = 0.0;
  /// Every residual is at roundoff; slope carries no information.
  bool degenerate = false;
};

/// Ordinary least squares of log(rms) on log(b).
inline ScalingReport regress_scaling(std::vector<ScalingPoint> points) {
  ScalingReport rep;
  rep.points = std::move(points);
  const std::size_t n = rep.points.size();
  if (n < 3) throw InvalidArgument("scaling regression needs at least three b values");
  for (std::size_t i = 1; i < n; ++i) {
    if (!(rep.points[i].b > rep.points[i - 1].b)) {
      throw InvalidArgument("b values must be strictly increasing");
    }
  }
  rep.degenerate = std::all_of(rep.points.begin(), rep.points.end(), [](const ScalingPoint& p) {
    return p.rms_residual <= roundoff_floor() * p.fit.a0;
  });
  double sx = 0, sy = 0;
  std::vector<double> X(n), Y(n);
  for (std::size_t i = 0; i < n; ++i) {
    X[i] = std::log(rep.points[i].b);
    Y[i] = std::log(std::max(rep.points[i].rms_residual, DBL_MIN));
    sx += X[i];
    sy += Y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (X[i] - mx) * (X[i] - mx);
    sxy += (X[i] - mx) * (Y[i] - my);
  }
  rep.slope = sxy / sxx;
  rep.intercept = my - rep.slope * mx;
  double sse = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = Y[i] - (rep.intercept + rep.slope * X[i]);
    sse += d * d;
  }
  const double se = std::sqrt(sse / static_cast<double>(n - 2) / sxx);
  boost::math::students_t dist(static_cast<double>(n - 2));
  rep.slope_half_width = boost::math::quantile(boost::math::complement(dist, 0.025)) * se;
  return rep;
}

/// Fits the first-order surface curve for each b and regresses the residual.
inline ScalingReport residual_scaling(const DistortionSolution& dist, std::span<const double> bs,
                                      std::span<const double> zeta, const FitOptions& opt = {}) {
  if (bs.size() < 4) throw InvalidArgument("residual scaling needs at least four b values");
  if (!(bs.front() > 0.0)) throw InvalidArgument("b = 0 has an exactly spherical surface");
  if (!(bs.back() >= 100.0 * bs.front())) {
    throw InvalidArgument("b values must span at least two decades");
  }
  for (double b : bs) {
    if (b > 0.05) throw InvalidArgument("b above the first-order range (0.05)");
  }
  std::vector<ScalingPoint> pts;
  for (double b : bs) {
    const auto curve = surface_curve(dist, b, zeta);
    const auto fit = fit_ellipsoid(curve.zeta, curve.xi, opt);
    pts.push_back({b, fit.rms_residual, fit});
  }
  return regress_scaling(std::move(pts));
}

/// Geometric b ladder lo, ..., hi with the given number of points.
inline std::vector<double> log_ladder(double lo, double hi, std::size_t points) {
  if (!(lo > 0.0 && hi > lo) || points < 2) throw InvalidArgument("bad ladder");
  std::vector<double> out(points);
  for (std::size_t i = 0; i < points; ++i) {
    out[i] = lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(points - 1));
  }
  out.back() = hi;
  return out;
}

struct LevelFit {
  double level = 0.0;
  EllipsoidFit fit;
  /// rms_residual / a0.
  double normalized_rms = 0.0;
};

struct StratificationReport {
  double b = 0.0;
  std::vector<LevelFit> levels;
  /// The outer surface Xi1(zeta). Reported as a number only.
  LevelFit boundary;
  double roundoff_floor = 0.0;
  /// Some level departs from its best ellipsoid by more than 10x roundoff.
  bool non_ellipsoidal = false;
};

inline StratificationReport stratification_report(const DistortionSolution& dist, double b,
                                                  std::span<const double> levels,
                                                  std::span<const double> zeta,
                                                  const FitOptions& opt = {},
                                                  const LevelOptions& lopt = {}) {
  StratificationReport rep;
  rep.b = b;
  rep.roundoff_floor = roundoff_floor();
  for (double lv : levels) {
    const auto surf = level_surface(dist, b, lv, zeta, lopt);
    LevelFit lf{lv, fit_ellipsoid(surf.zeta, surf.xi, opt), 0.0};
    lf.normalized_rms = lf.fit.rms_residual / lf.fit.a0;
    rep.non_ellipsoidal = rep.non_ellipsoidal || lf.normalized_rms > 10.0 * rep.roundoff_floor;
    rep.levels.push_back(lf);
  }
  const auto curve = surface_curve(dist, b, zeta);
  rep.boundary.level = 0.0;
  rep.boundary.fit = fit_ellipsoid(curve.zeta, curve.xi, opt);
  rep.boundary.normalized_rms = rep.boundary.fit.rms_residual / rep.boundary.fit.a0;
  return rep;
}

}  // namespace stellar_match
