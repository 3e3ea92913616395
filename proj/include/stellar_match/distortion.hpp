#pragma once

// First-order rotational distortion of a polytrope,
//
//   Theta(xi, zeta) = theta(xi) + b [h0(xi) + A2 psi2(xi) P2(zeta)],
//
// with
//   (1/xi^2)(xi^2 h0')'   + n theta^(n-1) h0            = 1,
//   (1/xi^2)(xi^2 psi2')' + (n theta^(n-1) - 6/xi^2) psi2 = 0,
// regular at the centre, and A2 fixed by matching the P2 part of the
// gravitational potential to a decaying exterior harmonic at xi1.
//
// Beyond xi1 the profiles are continued with the density terms switched off,
// so Theta stays defined on a neighbourhood of the distorted surface.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <boost/math/tools/toms748_solve.hpp>

#include "stellar_match/errors.hpp"
#include "stellar_match/lane_emden.hpp"
#include "stellar_match/ode.hpp"

namespace stellar_match {

inline double legendre_p2(double zeta) { return 0.5 * (3.0 * zeta * zeta - 1.0); }

struct DistortionOptions {
  double tol = 1e-12;
  /// Profiles are continued out to extension * xi1.
  double extension = 1.5;
};

/// A radial perturbation profile f(xi) together with the Lane-Emden
/// function it was integrated alongside.
class RadialProfile {
 public:
  enum class Kind { Monopole, Quadrupole };

  RadialProfile(Kind kind, double n, double xi0, double xi1, double scale,
                ode::DenseSolution<4> interior, ode::DenseSolution<4> exterior)
      : kind_(kind),
        n_(n),
        xi0_(xi0),
        xi1_(xi1),
        scale_(scale),
        interior_(std::move(interior)),
        exterior_(std::move(exterior)) {}

  Kind kind() const { return kind_; }
  double xi1() const { return xi1_; }
  double xi_max() const { return exterior_.t_end(); }
  /// Leading coefficient of the centre series (1 for psi2 unless rescaled).
  double scale() const { return scale_; }

  double value(double xi) const { return eval(xi)[2]; }
  double derivative(double xi) const { return eval(xi)[3]; }
  double theta(double xi) const { return eval(xi)[0]; }
  double dtheta(double xi) const { return eval(xi)[1]; }
  /// Values exactly at xi1 from the interior leg.
  double value_at_surface() const { return interior_.steps().back().y1[2]; }
  double derivative_at_surface() const { return interior_.steps().back().y1[3]; }

  const ode::DenseSolution<4>& interior() const { return interior_; }

  /// (xi, f) on the accepted steps of the interior leg.
  std::vector<std::array<double, 2>> samples() const {
    std::vector<std::array<double, 2>> out{{0.0, 0.0}};
    for (const auto& s : interior_.steps()) {
      if (out.size() == 1) out.push_back({s.t0, s.y0[2]});
      out.push_back({s.t1(), s.y1[2]});
    }
    return out;
  }

  static ode::Vec<4> series(Kind kind, double n, double scale, double xi) {
    const double x2 = xi * xi;
    const double th = 1.0 - x2 / 6.0 + n * x2 * x2 / 120.0;
    const double dth = -xi / 3.0 + n * x2 * xi / 30.0;
    if (kind == Kind::Monopole) {
      return {th, dth, x2 / 6.0 - n * x2 * x2 / 120.0, xi / 3.0 - n * x2 * xi / 30.0};
    }
    return {th, dth, scale * (x2 - n * x2 * x2 / 14.0),
            scale * (2.0 * xi - 4.0 * n * x2 * xi / 14.0)};
  }

 private:
  ode::Vec<4> eval(double xi) const {
    if (!(xi >= 0.0) || xi > xi_max()) {
      throw InvalidArgument("distortion profile evaluated outside its range");
    }
    if (xi < xi0_) return series(kind_, n_, scale_, xi);
    if (xi <= xi1_) return interior_(std::min(xi, interior_.t_end()));
    return exterior_(xi);
  }

  Kind kind_;
  double n_;
  double xi0_;
  double xi1_;
  double scale_;
  ode::DenseSolution<4> interior_;
  ode::DenseSolution<4> exterior_;
};

namespace distortion_detail {

inline RadialProfile solve_profile(const LaneEmdenSolution& base, RadialProfile::Kind kind,
                                   double scale, const DistortionOptions& opt) {
  const double n = base.n();
  const bool mono = kind == RadialProfile::Kind::Monopole;
  auto rhs = [n, mono](double xi, const ode::Vec<4>& y) -> ode::Vec<4> {
    const double th = y[0];
    const double rho = th > 0.0 ? std::pow(th, n) : 0.0;
    const double drho = th > 0.0 ? n * std::pow(th, n - 1.0) : 0.0;
    const double f_src = mono ? 1.0 - drho * y[2]
                              : (6.0 / (xi * xi) - drho) * y[2];
    return {y[1], -rho - 2.0 * y[1] / xi, y[3], f_src - 2.0 * y[3] / xi};
  };
  ode::Options<4> o;
  // Profiles start at O(xi0^2); only relative control keeps the regular
  // mode clean.
  o.rtol = opt.tol;
  o.atol = opt.tol * 1e-12;
  o.scale = {1.0, 1.0, mono ? 1.0 : scale, mono ? 1.0 : scale};
  const double xi0 = base.series_radius();
  auto inner = ode::integrate<4>(rhs, xi0, RadialProfile::series(kind, n, scale, xi0),
                                 base.xi1(), o);
  if (inner.status != ode::Status::ReachedEnd) {
    throw ConvergenceError("distortion profile integration failed inside the star");
  }
  auto outer = ode::integrate<4>(rhs, base.xi1(), inner.y, opt.extension * base.xi1(), o);
  if (outer.status != ode::Status::ReachedEnd) {
    throw ConvergenceError("distortion profile continuation failed");
  }
  return RadialProfile(kind, n, xi0, base.xi1(), scale, std::move(inner.solution),
                       std::move(outer.solution));
}

}  // namespace distortion_detail

/// h0 with h0(0) = h0'(0) = 0.
inline RadialProfile solve_h0(const LaneEmdenSolution& base, const DistortionOptions& opt = {}) {
  return distortion_detail::solve_profile(base, RadialProfile::Kind::Monopole, 1.0, opt);
}

/// psi2 normalised to psi2 ~ normalization * xi^2 at the centre.
inline RadialProfile solve_psi2(const LaneEmdenSolution& base, double normalization = 1.0,
                                const DistortionOptions& opt = {}) {
  if (!(normalization > 0.0)) throw InvalidArgument("psi2 normalization must be positive");
  return distortion_detail::solve_profile(base, RadialProfile::Kind::Quadrupole, normalization,
                                          opt);
}

/// A2 = -(5/6) xi1^2 / (3 psi2(xi1) + xi1 psi2'(xi1)).
inline double compute_A2(const LaneEmdenSolution& base, const RadialProfile& psi2) {
  const double xi1 = base.xi1();
  const double denom = 3.0 * psi2.value_at_surface() + xi1 * psi2.derivative_at_surface();
  if (!(std::abs(denom) > 1e-300) || !std::isfinite(denom)) {
    throw DomainError("degenerate exterior matching: 3 psi2 + xi psi2' vanishes at xi1");
  }
  return -(5.0 / 6.0) * xi1 * xi1 / denom;
}

struct SurfaceCurve {
  double b = 0.0;
  std::vector<double> zeta;
  std::vector<double> xi;  ///< Xi1(zeta)
  double c0 = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  /// b above the range where first order is trusted.
  bool first_order_advisory = false;
};

struct LevelSurface {
  double level = 0.0;
  std::vector<double> zeta;
  std::vector<double> xi;  ///< xi*(zeta) with Theta(xi*, zeta) = level
};

class DistortionSolution {
 public:
  DistortionSolution(LaneEmdenSolution base, RadialProfile h0, RadialProfile psi2, double A2)
      : base_(std::move(base)), h0_(std::move(h0)), psi2_(std::move(psi2)), A2_(A2) {}

  const LaneEmdenSolution& base() const { return base_; }
  const RadialProfile& h0() const { return h0_; }
  const RadialProfile& psi2() const { return psi2_; }
  double A2() const { return A2_; }
  double xi1() const { return base_.xi1(); }
  double mu1() const { return base_.mu1(); }

  /// h0(xi) + A2 psi2(xi) P2(zeta).
  double distortion(double xi, double zeta) const {
    return h0_.value(xi) + A2_ * psi2_.value(xi) * legendre_p2(zeta);
  }
  double distortion_at_surface(double zeta) const {
    return h0_.value_at_surface() + A2_ * psi2_.value_at_surface() * legendre_p2(zeta);
  }

  double c0() const { return xi1(); }
  double c1() const {
    return xi1() * xi1() / mu1() * (h0_.value_at_surface() - 0.5 * A2_ * psi2_.value_at_surface());
  }
  double c2() const { return -1.5 * xi1() * xi1() / mu1() * A2_ * psi2_.value_at_surface(); }

  /// Xi1(zeta) = xi1 + (xi1^2/mu1) h(xi1, zeta) b.
  double surface_radius(double zeta, double b) const {
    return xi1() + xi1() * xi1() / mu1() * distortion_at_surface(zeta) * b;
  }

  /// Continued profiles reach this radius.
  double xi_max() const { return std::min(h0_.xi_max(), psi2_.xi_max()); }

 private:
  LaneEmdenSolution base_;
  RadialProfile h0_;
  RadialProfile psi2_;
  double A2_;
};

inline DistortionSolution solve_distortion(LaneEmdenSolution base,
                                           const DistortionOptions& opt = {}) {
  auto h0 = solve_h0(base, opt);
  auto psi2 = solve_psi2(base, 1.0, opt);
  const double A2 = compute_A2(base, psi2);
  return DistortionSolution(std::move(base), std::move(h0), std::move(psi2), A2);
}

inline std::vector<double> uniform_zeta_grid(std::size_t points) {
  if (points < 2) throw InvalidArgument("zeta grid needs at least two points");
  std::vector<double> z(points);
  for (std::size_t i = 0; i < points; ++i) {
    z[i] = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  return z;
}

inline SurfaceCurve surface_curve(const DistortionSolution& dist, double b,
                                  std::span<const double> zeta) {
  if (!(b >= 0.0)) throw InvalidArgument("rotation parameter b must be nonnegative");
  SurfaceCurve out;
  out.b = b;
  out.c0 = dist.c0();
  out.c1 = dist.c1();
  out.c2 = dist.c2();
  out.first_order_advisory = b > 0.05;
  out.zeta.assign(zeta.begin(), zeta.end());
  out.xi.reserve(zeta.size());
  for (double z : zeta) {
    if (z < -1.0 || z > 1.0) throw InvalidArgument("zeta must lie in [-1, 1]");
    out.xi.push_back(dist.surface_radius(z, b));
  }
  return out;
}

/// theta(xi) + b h(xi, zeta) for 0 <= xi <= Xi1(zeta).
inline double theta_distorted(const DistortionSolution& dist, double xi, double zeta,
                              double b) {
  if (!(b >= 0.0)) throw InvalidArgument("rotation parameter b must be nonnegative");
  const double top = std::max(dist.surface_radius(zeta, b), dist.xi1());
  if (!(xi >= 0.0) || xi > top * (1.0 + 1e-12) || xi > dist.xi_max()) {
    throw InvalidArgument("distorted Lane-Emden function evaluated outside the body");
  }
  return dist.h0().theta(xi) + b * dist.distortion(xi, zeta);
}

struct LevelOptions {
  /// Levels must lie in [margin, 1 - margin].
  double margin = 1e-3;
};

inline LevelSurface level_surface(const DistortionSolution& dist, double b, double level,
                                  std::span<const double> zeta, const LevelOptions& opt = {}) {
  if (!(level >= opt.margin && level <= 1.0 - opt.margin)) {
    throw InvalidArgument("level must be bounded away from 0 and 1");
  }
  LevelSurface out;
  out.level = level;
  out.zeta.assign(zeta.begin(), zeta.end());
  for (double z : zeta) {
    const double top = std::min(dist.surface_radius(z, b), dist.xi_max());
    auto f = [&](double xi) { return theta_distorted(dist, xi, z, b) - level; };
    const double f_lo = f(0.0);
    const double f_hi = f(top);
    if (!(f_lo > 0.0 && f_hi < 0.0)) {
      throw DomainError("level value not bracketed on [0, Xi1(zeta)]");
    }
    std::uintmax_t iters = 200;
    auto r = boost::math::tools::toms748_solve(f, 0.0, top, f_lo, f_hi,
                                               boost::math::tools::eps_tolerance<double>(52),
                                               iters);
    out.xi.push_back(0.5 * (r.first + r.second));
  }
  return out;
}

}  // namespace stellar_match
