#pragma once

// Lane-Emden equation theta'' + (2/xi) theta' + (theta v 0)^n = 0 with
// theta(0) = 1, theta'(0) = 0.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "stellar_match/eos.hpp"
#include "stellar_match/errors.hpp"
#include "stellar_match/ode.hpp"

namespace stellar_match {

struct LaneEmdenOptions {
  double tol = 1e-12;
  /// Series start radius.
  double xi0 = 1e-4;
  /// Guard for indices without a finite zero.
  double xi_max = 1e4;
};

namespace lane_emden_detail {

inline double guarded_pow(double theta, double n) { return std::pow(std::max(theta, 0.0), n); }

inline double series_theta(double n, double xi) {
  const double x2 = xi * xi;
  return 1.0 - x2 / 6.0 + n * x2 * x2 / 120.0;
}
inline double series_dtheta(double n, double xi) {
  return -xi / 3.0 + n * xi * xi * xi / 30.0;
}

}  // namespace lane_emden_detail

class LaneEmdenSolution {
 public:
  LaneEmdenSolution(PolytropeIndex index, double xi0, double xi1, double mu1,
                    ode::DenseSolution<2> dense)
      : index_(index), xi0_(xi0), xi1_(xi1), mu1_(mu1), dense_(std::move(dense)) {}

  PolytropeIndex index() const { return index_; }
  double n() const { return index_.n; }
  /// First zero of theta.
  double xi1() const { return xi1_; }
  /// -xi1^2 theta'(xi1).
  double mu1() const { return mu1_; }
  double series_radius() const { return xi0_; }
  const ode::DenseSolution<2>& dense() const { return dense_; }

  double theta_at(double xi) const { return eval(xi)[0]; }
  double dtheta_at(double xi) const { return eval(xi)[1]; }

  /// (xi, theta, theta') at the series start and every accepted step.
  std::vector<std::array<double, 3>> samples() const {
    std::vector<std::array<double, 3>> out;
    out.push_back({0.0, 1.0, 0.0});
    for (const auto& s : dense_.steps()) {
      if (out.size() == 1) out.push_back({s.t0, s.y0[0], s.y0[1]});
      out.push_back({s.t1(), s.y1[0], s.y1[1]});
    }
    return out;
  }

 private:
  ode::Vec<2> eval(double xi) const {
    if (!(xi >= 0.0) || xi > xi1_ * (1.0 + 1e-12)) {
      throw InvalidArgument("Lane-Emden evaluation outside [0, xi1]");
    }
    if (xi < xi0_) {
      return {lane_emden_detail::series_theta(n(), xi), lane_emden_detail::series_dtheta(n(), xi)};
    }
    return dense_(std::min(xi, dense_.t_end()));
  }

  PolytropeIndex index_;
  double xi0_;
  double xi1_;
  double mu1_;
  ode::DenseSolution<2> dense_;
};

/// Integrates outward from the two-term series start and locates the first
/// zero of theta.
inline LaneEmdenSolution solve_lane_emden(double n, const LaneEmdenOptions& opt = {}) {
  using namespace lane_emden_detail;
  if (!std::isfinite(n) || n < 0.0) {
    throw InvalidArgument("polytropic index must be a finite nonnegative number");
  }
  if (n >= 5.0) {
    throw NonTermination("Lane-Emden functions with n >= 5 have no finite zero");
  }
  auto rhs = [n](double xi, const ode::Vec<2>& y) -> ode::Vec<2> {
    return {y[1], -guarded_pow(y[0], n) - 2.0 * y[1] / xi};
  };
  const double xi0 = opt.xi0;
  ode::Vec<2> y0{series_theta(n, xi0), series_dtheta(n, xi0)};
  ode::Options<2> o;
  o.rtol = opt.tol;
  o.atol = opt.tol * 1e-2;
  std::vector<ode::Event<2>> events{
      {"surface", [](double, const ode::Vec<2>& y) { return y[0]; }, -1}};
  auto res = ode::integrate<2>(rhs, xi0, y0, opt.xi_max, o, events);
  if (res.status != ode::Status::Event) {
    throw NonTermination("Lane-Emden integration reached xi_max without a zero (n = " +
                         std::to_string(n) + ")");
  }
  const double xi1 = res.t;
  const double mu1 = -xi1 * xi1 * res.y[1];
  return LaneEmdenSolution(PolytropeIndex{n}, xi0, xi1, mu1, std::move(res.solution));
}

}  // namespace stellar_match
