#pragma once

// Barotropic equation of state
//
//   P(rho) = A rho^gamma (1 + Lambda(A rho^(gamma-1) / c^2)),
//
// with Lambda a truncated power series without constant term. The natural
// variable throughout is w = A rho^(gamma-1) and its relativistic ratio
// x = w / c^2; every quantity below is a closed expression in w or x.
//
// The enthalpy reported by this header is
//   h = int_0^P dP' / (rho c^2 + P')   (relativistic mode)
//   u = int_0^P dP' / rho              (nonrelativistic mode, c = infinity)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include "stellar_match/errors.hpp"

namespace stellar_match {

/// n = 1 / (gamma - 1).
struct PolytropeIndex {
  double n = 1.0;

  static PolytropeIndex from_gamma(double gamma) {
    if (!(gamma > 1.0)) throw InvalidArgument("polytropic exponent must exceed 1");
    return PolytropeIndex{1.0 / (gamma - 1.0)};
  }
  double gamma() const { return 1.0 + 1.0 / n; }
};

struct SoundSpeed {
  double value = 0.0;
  bool valid = false;
};

/// Density and pressure at a given enthalpy.
struct FluidState {
  double rho = 0.0;
  double pressure = 0.0;
};

class EosSpec {
 public:
  static constexpr double kInfinity = std::numeric_limits<double>::infinity();

  /// c = infinity selects the nonrelativistic mode. The optional rho_limit is
  /// the configured validity range; it must lie inside the range where the
  /// truncated series keeps P > 0 and 0 < dP/drho < c^2.
  EosSpec(double gamma, double A, double c = 1.0, std::vector<double> lambda = {},
          std::optional<double> rho_limit = std::nullopt)
      : gamma_(gamma), A_(A), c_(c), lambda_(std::move(lambda)) {
    if (!(gamma > 1.0) || !std::isfinite(gamma)) {
      throw InvalidArgument("gamma must be a finite number greater than 1");
    }
    if (!(A > 0.0) || !std::isfinite(A)) throw InvalidArgument("A must be positive");
    if (!(c > 0.0)) throw InvalidArgument("c must be positive or infinite");
    for (double l : lambda_) {
      if (!std::isfinite(l)) throw InvalidArgument("lambda coefficients must be finite");
    }
    while (!lambda_.empty() && lambda_.back() == 0.0) lambda_.pop_back();
    gamma_warning_ = !(gamma > 6.0 / 5.0 && gamma < 2.0);
    x_valid_ = compute_validity_x();
    rho_valid_ = nonrelativistic() ? kInfinity : density_of_x(x_valid_);
    if (rho_limit) {
      if (!(*rho_limit > 0.0)) throw InvalidArgument("validity range must be positive");
      if (*rho_limit > rho_valid_ * (1.0 + 1e-12)) {
        std::ostringstream msg;
        msg << "requested density range " << *rho_limit
            << " exceeds the range where 0 < dP/drho < c^2 holds (rho <= " << rho_valid_
            << ")";
        throw ValidityRangeError(msg.str());
      }
      rho_limit_ = *rho_limit;
    } else {
      rho_limit_ = rho_valid_;
    }
    p_limit_ = std::isinf(rho_limit_) ? kInfinity : pressure_formula(rho_limit_);
    h_limit_ = std::isinf(rho_limit_) ? kInfinity : enthalpy_formula(rho_limit_);
    h_valid_ = std::isinf(rho_valid_) ? kInfinity : enthalpy_formula(rho_valid_);
  }

  static EosSpec nonrelativistic(double gamma, double A = 1.0) {
    return EosSpec(gamma, A, kInfinity);
  }

  double gamma() const { return gamma_; }
  double A() const { return A_; }
  double c() const { return c_; }
  double c_sq() const { return c_ * c_; }
  const std::vector<double>& lambda() const { return lambda_; }
  bool nonrelativistic() const { return std::isinf(c_); }
  bool pure_polytrope() const { return lambda_.empty(); }
  PolytropeIndex index() const { return PolytropeIndex::from_gamma(gamma_); }
  /// gamma outside (6/5, 2).
  bool gamma_warning() const { return gamma_warning_; }

  /// Largest density for which the truncated series satisfies the
  /// inequalities; infinite in nonrelativistic mode.
  double validity_density() const { return rho_valid_; }
  /// Configured range (defaults to validity_density()).
  double density_limit() const { return rho_limit_; }
  double pressure_limit() const { return p_limit_; }
  double enthalpy_limit() const { return h_limit_; }
  bool density_in_range(double rho) const { return rho <= rho_limit_ * (1.0 + 1e-12); }
  bool pressure_in_range(double p) const { return p <= pressure_limit() * (1.0 + 1e-12); }

  // --- series -------------------------------------------------------------

  double lambda_at(double x) const {
    double acc = 0.0;
    for (auto it = lambda_.rbegin(); it != lambda_.rend(); ++it) acc = (acc + *it) * x;
    return acc;
  }
  /// x * Lambda'(x).
  double x_lambda_prime(double x) const {
    double acc = 0.0;
    for (std::size_t k = lambda_.size(); k-- > 0;) {
      acc = acc * x + static_cast<double>(k + 1) * lambda_[k];
    }
    return acc * x;
  }

  double w_of_density(double rho) const { return A_ * std::pow(rho, gamma_ - 1.0); }
  double x_of_density(double rho) const {
    return nonrelativistic() ? 0.0 : w_of_density(rho) / c_sq();
  }
  double density_of_w(double w) const { return std::pow(w / A_, 1.0 / (gamma_ - 1.0)); }
  double density_of_x(double x) const { return density_of_w(x * c_sq()); }

  // --- pressure -----------------------------------------------------------

  /// Evaluates the closed form without the range check.
  double pressure_formula(double rho) const {
    if (rho <= 0.0) return 0.0;
    const double w = w_of_density(rho);
    const double x = nonrelativistic() ? 0.0 : w / c_sq();
    return rho * w * (1.0 + lambda_at(x));
  }

  double pressure_of_density(double rho) const {
    if (!(rho >= 0.0)) throw InvalidArgument("density must be nonnegative");
    require_density(rho);
    return pressure_formula(rho);
  }

  double sound_speed_formula(double rho) const {
    if (rho <= 0.0) return 0.0;
    const double w = w_of_density(rho);
    const double x = nonrelativistic() ? 0.0 : w / c_sq();
    return w * (gamma_ * (1.0 + lambda_at(x)) + (gamma_ - 1.0) * x_lambda_prime(x));
  }

  /// dP/drho; valid iff 0 < dP/drho < c^2.
  SoundSpeed sound_speed_sq(double rho) const {
    if (!(rho > 0.0)) throw InvalidArgument("sound speed requires a positive density");
    const double v = sound_speed_formula(rho);
    return {v, v > 0.0 && v < c_sq()};
  }

  double density_of_pressure(double p) const {
    if (!(p >= 0.0)) throw InvalidArgument("pressure must be nonnegative");
    if (p == 0.0) return 0.0;
    if (!pressure_in_range(p)) {
      throw ValidityRangeError("pressure above the equation-of-state validity range");
    }
    return invert_pressure(p);
  }

  // --- enthalpy -----------------------------------------------------------

  /// Integrand of h in the variable x; smooth at x = 0.
  double enthalpy_integrand(double x) const {
    const double lam = lambda_at(x);
    return (gamma_ * (1.0 + lam) + (gamma_ - 1.0) * x_lambda_prime(x)) /
           ((gamma_ - 1.0) * (1.0 + x * (1.0 + lam)));
  }

  /// Gauss-Kronrod quadrature of h (or u) up to density rho.
  double enthalpy_quadrature(double rho) const {
    if (rho <= 0.0) return 0.0;
    if (nonrelativistic()) return gamma_ / (gamma_ - 1.0) * w_of_density(rho);
    const double x = x_of_density(rho);
    return integrate_x(x);
  }

  /// Enthalpy from the closed form when Lambda vanishes, else quadrature.
  double enthalpy_formula(double rho) const {
    if (rho <= 0.0) return 0.0;
    if (nonrelativistic()) return gamma_ / (gamma_ - 1.0) * w_of_density(rho);
    if (pure_polytrope()) return gamma_ / (gamma_ - 1.0) * std::log1p(x_of_density(rho));
    return enthalpy_quadrature(rho);
  }

  /// h(P) by quadrature over the desingularised variable.
  double enthalpy_of_pressure(double p) const {
    return enthalpy_quadrature(density_of_pressure(p));
  }

  double density_of_enthalpy(double h) const {
    check_enthalpy(h);
    return density_of_enthalpy_formula(h);
  }
  double pressure_of_enthalpy(double h) const {
    check_enthalpy(h);
    return pressure_formula(density_of_enthalpy_formula(h));
  }

  /// Inverse of enthalpy_formula without range check. Returns NaN when the
  /// series EOS cannot be inverted (beyond its validity range).
  double density_of_enthalpy_formula(double h) const {
    if (h <= 0.0) return 0.0;
    if (nonrelativistic()) return density_of_w((gamma_ - 1.0) / gamma_ * h);
    if (pure_polytrope()) return density_of_x(std::expm1((gamma_ - 1.0) / gamma_ * h));
    if (h > h_valid_) return std::numeric_limits<double>::quiet_NaN();
    const double x = invert_enthalpy_x(h);
    return density_of_x(x);
  }

  FluidState state_of_enthalpy(double h) const {
    const double rho = density_of_enthalpy_formula(h);
    return {rho, pressure_formula(rho)};
  }

  /// d rho / d h, i.e. (rho c^2 + P) / c_s^2 (rho / c_s^2 nonrelativistically).
  /// At h = 0 the one-sided limit is returned: 0 for gamma < 2, infinite for
  /// gamma > 2, and the finite leading coefficient for gamma = 2.
  double density_slope_of_enthalpy(double h) const {
    if (h <= 0.0) {
      if (gamma_ < 2.0) return 0.0;
      if (gamma_ > 2.0) return kInfinity;
      // rho c^2 / (A gamma rho^(gamma-1)) at gamma = 2 with Lambda(0) = 0.
      return nonrelativistic() ? 1.0 / (2.0 * A_) : c_sq() / (2.0 * A_);
    }
    const double rho = density_of_enthalpy_formula(h);
    const double cs2 = sound_speed_formula(rho);
    if (nonrelativistic()) return rho / cs2;
    return (rho * c_sq() + pressure_formula(rho)) / cs2;
  }

 private:
  void require_density(double rho) const {
    if (!density_in_range(rho)) {
      std::ostringstream msg;
      msg << "density " << rho << " outside the equation-of-state validity range (rho <= "
          << rho_limit_ << ")";
      throw ValidityRangeError(msg.str());
    }
  }

  void check_enthalpy(double h) const {
    if (!(h >= 0.0)) throw InvalidArgument("enthalpy must be nonnegative");
    if (h > enthalpy_limit() * (1.0 + 1e-12)) {
      throw ValidityRangeError("enthalpy above the equation-of-state validity range");
    }
  }

  /// Fixed Gauss-Kronrod panels of width <= 1/4. The integrand is analytic
  /// on a neighbourhood of [0, x_valid], so one 21-point rule per panel is
  /// at roundoff; the adaptive driver's absolute error floor would otherwise
  /// force full-depth recursion for small x.
  double integrate_x(double x) const {
    if (x <= 0.0) return 0.0;
    auto f = [this](double s) { return enthalpy_integrand(s); };
    const int panels = static_cast<int>(std::min(std::ceil(x / 0.25), 4096.0));
    const double width = x / panels;
    double sum = 0.0;
    for (int i = 0; i < panels; ++i) {
      sum += boost::math::quadrature::gauss_kronrod<double, 21>::integrate(f, i * width,
                                                                          (i + 1) * width, 0);
    }
    return sum;
  }

  double invert_enthalpy_x(double h) const {
    const double hi = std::isinf(x_valid_) ? 1e6 : x_valid_;
    const double guess = std::min(std::expm1((gamma_ - 1.0) / gamma_ * h), hi);
    std::uintmax_t iters = 100;
    return boost::math::tools::newton_raphson_iterate(
        [&](double x) {
          return std::make_pair(integrate_x(x) - h, enthalpy_integrand(x));
        },
        guess, 0.0, hi, 50, iters);
  }

  double invert_pressure(double p) const {
    if (nonrelativistic() || pure_polytrope()) {
      return std::pow(p / A_, 1.0 / gamma_);
    }
    const double hi = rho_valid_;
    const double guess = std::min(std::pow(p / A_, 1.0 / gamma_), hi);
    std::uintmax_t iters = 100;
    return boost::math::tools::newton_raphson_iterate(
        [&](double rho) {
          return std::make_pair(pressure_formula(rho) - p, sound_speed_formula(rho));
        },
        guess, 0.0, hi, 50, iters);
  }

  /// Conditions of the admissible EOS at relativistic ratio x.
  bool admissible_at(double x) const {
    const double lam = lambda_at(x);
    const double shape = gamma_ * (1.0 + lam) + (gamma_ - 1.0) * x_lambda_prime(x);
    return (1.0 + lam) > 0.0 && shape > 0.0 && x * shape < 1.0;
  }

  /// Largest x with the inequalities satisfied on (0, x]: log-grid scan for
  /// the first violation, then bisection.
  double compute_validity_x() const {
    if (nonrelativistic()) return kInfinity;
    if (pure_polytrope()) return 1.0 / gamma_;
    constexpr int kSamples = 4000;
    const double lo_exp = -14.0, hi_exp = 6.0;
    double good = 0.0;
    for (int i = 0; i <= kSamples; ++i) {
      const double x = std::pow(10.0, lo_exp + (hi_exp - lo_exp) * i / kSamples);
      if (admissible_at(x)) {
        good = x;
        continue;
      }
      if (i == 0) {
        throw ValidityRangeError(
            "equation of state violates 0 < dP/drho < c^2 arbitrarily close to rho = 0");
      }
      double a = good, b = x;
      for (int it = 0; it < 200 && (b - a) > 1e-15 * b; ++it) {
        const double mid = 0.5 * (a + b);
        (admissible_at(mid) ? a : b) = mid;
      }
      return a;
    }
    return std::pow(10.0, hi_exp);
  }

  double gamma_;
  double A_;
  double c_;
  std::vector<double> lambda_;
  bool gamma_warning_ = false;
  double x_valid_ = kInfinity;
  double rho_valid_ = kInfinity;
  double rho_limit_ = kInfinity;
  double p_limit_ = kInfinity;
  double h_limit_ = kInfinity;
  double h_valid_ = kInfinity;
};

}  // namespace stellar_match
