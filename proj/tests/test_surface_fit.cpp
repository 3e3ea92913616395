#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "stellar_match/surface_fit.hpp"

namespace sm = stellar_match;

namespace {

struct Samples {
  std::vector<double> zeta, r;
};

Samples ellipse(double a0, double a1, std::size_t n = 201) {
  Samples s;
  s.zeta = sm::uniform_zeta_grid(n);
  for (double z : s.zeta) s.r.push_back(a0 / std::sqrt(1.0 + a1 * z * z));
  return s;
}

double ssq(const Samples& s, double a0, double a1) {
  double acc = 0;
  for (std::size_t i = 0; i < s.zeta.size(); ++i) {
    const double d = s.r[i] - a0 / std::sqrt(1.0 + a1 * s.zeta[i] * s.zeta[i]);
    acc += d * d;
  }
  return acc;
}

const sm::DistortionSolution& n1() {
  static const auto d = sm::solve_distortion(sm::solve_lane_emden(1.0));
  return d;
}

Samples quadratic(double b) {
  const auto c = sm::surface_curve(n1(), b, sm::uniform_zeta_grid(201));
  return {c.zeta, c.xi};
}

}  // namespace

TEST(FitEllipsoid, Sphere) {
  const auto s = ellipse(2.0, 0.0);
  const auto f = sm::fit_ellipsoid(s.zeta, s.r);
  EXPECT_TRUE(f.converged);
  EXPECT_DOUBLE_EQ(f.a0, 2.0);
  EXPECT_NEAR(f.a1, 0.0, 1e-15);
  EXPECT_LT(f.rms_residual, 1e-15);
}

TEST(FitEllipsoid, ExactModelRecovered) {
  const auto s = ellipse(3.0, 0.5);
  const auto f = sm::fit_ellipsoid(s.zeta, s.r);
  EXPECT_NEAR(f.a0, 3.0, 1e-13);
  EXPECT_NEAR(f.a1, 0.5, 1e-13);
  EXPECT_LT(f.rms_residual, 1e-12);
  EXPECT_LT(f.max_residual, 1e-12);
}

TEST(FitEllipsoid, ProlateAndStrongOblate) {
  for (double a1 : {-0.6, 2.5, 20.0}) {
    const auto s = ellipse(1.3, a1);
    const auto f = sm::fit_ellipsoid(s.zeta, s.r);
    EXPECT_NEAR(f.a1, a1, 1e-10 * (1 + std::abs(a1)));
    EXPECT_GT(1.0 + f.a1, 0.0);
  }
}

TEST(FitEllipsoid, QuadraticSurfaceHasResidual) {
  const auto s = quadratic(1e-2);
  const auto f = sm::fit_ellipsoid(s.zeta, s.r);
  EXPECT_GT(f.rms_residual, 1e-8);
  EXPECT_LT(f.rms_residual, 1e-3);
}

TEST(FitEllipsoid, OptimalityUnderPerturbation) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> noise(0.0, 1e-3);
  for (const auto& base : {quadratic(1e-2), quadratic(3e-2), ellipse(1.0, 0.3)}) {
    Samples s = base;
    for (double& r : s.r) r += noise(rng);
    const auto f = sm::fit_ellipsoid(s.zeta, s.r);
    const double best = ssq(s, f.a0, f.a1);
    for (double d : {1e-6, -1e-6}) {
      EXPECT_GE(ssq(s, f.a0 + d, f.a1), best);
      EXPECT_GE(ssq(s, f.a0, f.a1 + d), best);
    }
  }
}

TEST(FitEllipsoid, ScaleCovariance) {
  const auto s = quadratic(2e-2);
  const auto f = sm::fit_ellipsoid(s.zeta, s.r);
  for (double lam : {0.01, 3.0, 1e4}) {
    Samples t = s;
    for (double& r : t.r) r *= lam;
    const auto g = sm::fit_ellipsoid(t.zeta, t.r);
    EXPECT_NEAR(g.a0, lam * f.a0, 1e-12 * lam * f.a0);
    EXPECT_NEAR(g.a1, f.a1, 1e-10 * std::abs(f.a1));
    EXPECT_NEAR(g.rms_residual, lam * f.rms_residual, 1e-6 * lam * f.rms_residual);
  }
}

TEST(FitEllipsoid, DependsOnlyOnZetaSquared) {
  const auto s = quadratic(1e-2);
  Samples sym = s;
  const std::size_t n = s.r.size();
  for (std::size_t i = 0; i < n; ++i) sym.r[i] = 0.5 * (s.r[i] + s.r[n - 1 - i]);
  Samples flipped = s;
  for (double& z : flipped.zeta) z = -z;
  const auto f = sm::fit_ellipsoid(s.zeta, s.r);
  const auto g = sm::fit_ellipsoid(sym.zeta, sym.r);
  const auto h = sm::fit_ellipsoid(flipped.zeta, flipped.r);
  EXPECT_NEAR(f.a0, g.a0, 1e-12);
  EXPECT_NEAR(f.a1, g.a1, 1e-12);
  EXPECT_NEAR(f.a0, h.a0, 1e-12);
  EXPECT_NEAR(f.a1, h.a1, 1e-12);
}

TEST(FitEllipsoid, BadInput) {
  std::vector<double> z{0.0, 0.5}, r{1.0, 1.0};
  EXPECT_THROW(sm::fit_ellipsoid(z, r), sm::InvalidArgument);
  std::vector<double> z3{0.0, 0.5, 2.0}, r3{1.0, 1.0, 1.0};
  EXPECT_THROW(sm::fit_ellipsoid(z3, r3), sm::InvalidArgument);
  std::vector<double> z4{0.0, 0.5, 1.0}, r4{1.0, -1.0, 1.0};
  EXPECT_THROW(sm::fit_ellipsoid(z4, r4), sm::InvalidArgument);
}

TEST(ResidualScaling, SlopeTwoForIndexOne) {
  const auto bs = sm::log_ladder(1e-4, 1e-2, 5);
  const auto rep = sm::residual_scaling(n1(), bs, sm::uniform_zeta_grid(201));
  EXPECT_NEAR(rep.slope, 2.0, 0.1);
  EXPECT_FALSE(rep.degenerate);
  EXPECT_LT(rep.slope_half_width, 0.1);
  for (const auto& p : rep.points) {
    EXPECT_GT(p.rms_residual / p.b, 0.0);
    EXPECT_LT(p.rms_residual / p.b, 1e-1);
  }
  // residual / b^2 settles to a constant.
  const double first = rep.points.front().rms_residual / std::pow(rep.points.front().b, 2);
  const double last = rep.points.back().rms_residual / std::pow(rep.points.back().b, 2);
  EXPECT_NEAR(last / first, 1.0, 0.1);
}

TEST(ResidualScaling, ExactEllipsoidDegenerate) {
  std::vector<sm::ScalingPoint> pts;
  for (double b : sm::log_ladder(1e-4, 1e-2, 5)) {
    const auto s = ellipse(3.0, 2.0 * b);
    const auto f = sm::fit_ellipsoid(s.zeta, s.r);
    EXPECT_LT(f.rms_residual / f.a0, sm::roundoff_floor());
    pts.push_back({b, f.rms_residual, f});
  }
  EXPECT_TRUE(sm::regress_scaling(pts).degenerate);
}

TEST(ResidualScaling, Preconditions) {
  const auto z = sm::uniform_zeta_grid(21);
  std::vector<double> three{1e-4, 1e-3, 1e-2};
  EXPECT_THROW(sm::residual_scaling(n1(), three, z), sm::InvalidArgument);
  std::vector<double> with_zero{0.0, 1e-3, 1e-2, 2e-2};
  EXPECT_THROW(sm::residual_scaling(n1(), with_zero, z), sm::InvalidArgument);
  std::vector<double> narrow{1e-3, 2e-3, 4e-3, 8e-3};
  EXPECT_THROW(sm::residual_scaling(n1(), narrow, z), sm::InvalidArgument);
  std::vector<double> big{1e-3, 1e-2, 5e-2, 0.1};
  EXPECT_THROW(sm::residual_scaling(n1(), big, z), sm::InvalidArgument);
}

TEST(Stratification, RotatingLevelsNotAllEllipsoids) {
  const std::vector<double> levels{0.2, 0.5, 0.8};
  const auto zeta = sm::uniform_zeta_grid(201);
  const auto rep = sm::stratification_report(n1(), 1e-2, levels, zeta);
  ASSERT_EQ(rep.levels.size(), 3u);
  EXPECT_TRUE(rep.non_ellipsoidal);
  double worst = 0;
  for (const auto& l : rep.levels) worst = std::max(worst, l.normalized_rms);
  EXPECT_GT(worst, 10.0 * rep.roundoff_floor);
  EXPECT_GT(rep.boundary.normalized_rms, 0.0);
}

TEST(Stratification, NonRotatingLevelsAreSpheres) {
  const std::vector<double> levels{0.2, 0.5, 0.8};
  const auto rep = sm::stratification_report(n1(), 0.0, levels, sm::uniform_zeta_grid(201));
  EXPECT_FALSE(rep.non_ellipsoidal);
  for (const auto& l : rep.levels) {
    EXPECT_LE(l.normalized_rms, rep.roundoff_floor);
    EXPECT_NEAR(l.fit.a1, 0.0, 1e-14);
  }
  EXPECT_EQ(rep.boundary.normalized_rms, 0.0);
}
