#pragma once

// Embedded Runge-Kutta 5(4) integrator (Dormand-Prince coefficients) with
// continuous output and terminal event location. Works in either direction
// of the independent variable.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stellar_match/errors.hpp"

namespace stellar_match::ode {

template <std::size_t N>
using Vec = std::array<double, N>;

template <std::size_t N>
struct Options {
  double rtol = 1e-10;
  double atol = 1e-12;
  /// Absolute tolerance of component i is atol * scale[i].
  Vec<N> scale = filled(1.0);
  /// Zero selects the step automatically.
  double initial_step = 0.0;
  double max_step = std::numeric_limits<double>::infinity();
  std::size_t max_steps = 500000;
  /// Events are located to event_tol relative to |t|.
  double event_tol = 1e-12;

  static constexpr Vec<N> filled(double v) {
    Vec<N> out{};
    out.fill(v);
    return out;
  }
};

/// One accepted step together with its continuous extension.
template <std::size_t N>
struct DenseStep {
  double t0 = 0.0;
  double h = 0.0;
  Vec<N> y0{};
  Vec<N> y1{};
  std::array<Vec<N>, 4> coef{};

  double t1() const { return t0 + h; }

  Vec<N> operator()(double t) const {
    const double s = (t - t0) / h;
    const double s1 = 1.0 - s;
    Vec<N> y{};
    for (std::size_t i = 0; i < N; ++i) {
      y[i] = y0[i] +
             s * (coef[0][i] + s1 * (coef[1][i] + s * (coef[2][i] + s1 * coef[3][i])));
    }
    return y;
  }
};

/// Piecewise continuous solution over the accepted steps.
template <std::size_t N>
class DenseSolution {
 public:
  const std::vector<DenseStep<N>>& steps() const { return steps_; }
  bool empty() const { return steps_.empty(); }
  double t_begin() const { return steps_.front().t0; }
  double t_end() const { return steps_.back().t1(); }
  bool increasing() const { return steps_.empty() || steps_.front().h > 0.0; }

  bool contains(double t) const {
    if (steps_.empty()) return false;
    const double lo = std::min(t_begin(), t_end());
    const double hi = std::max(t_begin(), t_end());
    return t >= lo && t <= hi;
  }

  Vec<N> operator()(double t) const {
    if (!contains(t)) {
      throw InvalidArgument("dense output requested outside the integrated interval");
    }
    return locate(t)(t);
  }

  const DenseStep<N>& locate(double t) const {
    const bool inc = increasing();
    auto it = std::lower_bound(steps_.begin(), steps_.end(), t,
                               [inc](const DenseStep<N>& s, double v) {
                                 return inc ? s.t1() < v : s.t1() > v;
                               });
    if (it == steps_.end()) --it;
    return *it;
  }

  void push_back(DenseStep<N> step) { steps_.push_back(std::move(step)); }
  void replace_last(DenseStep<N> step) { steps_.back() = std::move(step); }

 private:
  std::vector<DenseStep<N>> steps_;
};

/// Terminal event: integration stops at the first zero of g crossed in the
/// requested direction (+1 rising, -1 falling, 0 either).
template <std::size_t N>
struct Event {
  std::string label;
  std::function<double(double, const Vec<N>&)> g;
  int direction = 0;
};

enum class Status { ReachedEnd, Event, Stopped, MaxSteps, StepUnderflow };

template <std::size_t N>
struct Result {
  DenseSolution<N> solution;
  Status status = Status::ReachedEnd;
  int event_index = -1;
  double t = 0.0;
  Vec<N> y{};
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

namespace detail {

struct Tableau {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                          a75 = -2187.0 / 6784, a76 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
  static constexpr double d1 = -12715105075.0 / 11282082432.0,
                          d3 = 87487479700.0 / 32700410799.0,
                          d4 = -10690763975.0 / 1880347072.0,
                          d5 = 701980252875.0 / 199316789632.0,
                          d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
};

template <std::size_t N>
bool all_finite(const Vec<N>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

/// A single trial step. k1 is the derivative at (t, y) and is reused (FSAL).
template <std::size_t N>
struct Trial {
  Vec<N> y1{};
  Vec<N> k7{};
  double err = std::numeric_limits<double>::infinity();
  DenseStep<N> dense;
};

template <std::size_t N, class Rhs>
Trial<N> attempt(Rhs& rhs, double t, const Vec<N>& y, const Vec<N>& k1, double h,
                      const Options<N>& opt) {
  using T = Tableau;
  Trial<N> out;
  Vec<N> tmp{}, k2{}, k3{}, k4{}, k5{}, k6{};
  for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + h * T::a21 * k1[i];
  k2 = rhs(t + T::c2 * h, tmp);
  for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + h * (T::a31 * k1[i] + T::a32 * k2[i]);
  k3 = rhs(t + T::c3 * h, tmp);
  for (std::size_t i = 0; i < N; ++i)
    tmp[i] = y[i] + h * (T::a41 * k1[i] + T::a42 * k2[i] + T::a43 * k3[i]);
  k4 = rhs(t + T::c4 * h, tmp);
  for (std::size_t i = 0; i < N; ++i)
    tmp[i] = y[i] + h * (T::a51 * k1[i] + T::a52 * k2[i] + T::a53 * k3[i] + T::a54 * k4[i]);
  k5 = rhs(t + T::c5 * h, tmp);
  for (std::size_t i = 0; i < N; ++i)
    tmp[i] = y[i] + h * (T::a61 * k1[i] + T::a62 * k2[i] + T::a63 * k3[i] + T::a64 * k4[i] +
                         T::a65 * k5[i]);
  k6 = rhs(t + h, tmp);
  for (std::size_t i = 0; i < N; ++i)
    out.y1[i] = y[i] + h * (T::a71 * k1[i] + T::a73 * k3[i] + T::a74 * k4[i] +
                            T::a75 * k5[i] + T::a76 * k6[i]);
  if (!all_finite(out.y1)) return out;
  out.k7 = rhs(t + h, out.y1);
  if (!all_finite(out.k7)) return out;

  double acc = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const double e = h * (T::e1 * k1[i] + T::e3 * k3[i] + T::e4 * k4[i] + T::e5 * k5[i] +
                          T::e6 * k6[i] + T::e7 * out.k7[i]);
    const double sk = opt.atol * opt.scale[i] +
                      opt.rtol * std::max(std::abs(y[i]), std::abs(out.y1[i]));
    acc += (e / sk) * (e / sk);
  }
  out.err = std::sqrt(acc / static_cast<double>(N));
  if (!std::isfinite(out.err)) out.err = std::numeric_limits<double>::infinity();

  DenseStep<N>& d = out.dense;
  d.t0 = t;
  d.h = h;
  d.y0 = y;
  d.y1 = out.y1;
  for (std::size_t i = 0; i < N; ++i) {
    const double ydiff = out.y1[i] - y[i];
    const double bspl = h * k1[i] - ydiff;
    d.coef[0][i] = ydiff;
    d.coef[1][i] = bspl;
    d.coef[2][i] = ydiff - h * out.k7[i] - bspl;
    d.coef[3][i] = h * (T::d1 * k1[i] + T::d3 * k3[i] + T::d4 * k4[i] + T::d5 * k5[i] +
                        T::d6 * k6[i] + T::d7 * out.k7[i]);
  }
  return out;
}

template <std::size_t N, class Rhs>
double initial_step(Rhs& rhs, double t, const Vec<N>& y, const Vec<N>& f0, double dir,
                    const Options<N>& opt) {
  double d0 = 0.0, d1 = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const double sk = opt.atol * opt.scale[i] + opt.rtol * std::abs(y[i]);
    d0 += (y[i] / sk) * (y[i] / sk);
    d1 += (f0[i] / sk) * (f0[i] / sk);
  }
  d0 = std::sqrt(d0 / N);
  d1 = std::sqrt(d1 / N);
  double h0 = (d0 < 1e-10 || d1 < 1e-10) ? 1e-6 : 0.01 * d0 / d1;
  h0 = std::min(h0, opt.max_step);
  Vec<N> y1{};
  for (std::size_t i = 0; i < N; ++i) y1[i] = y[i] + dir * h0 * f0[i];
  const Vec<N> f1 = rhs(t + dir * h0, y1);
  double d2 = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const double sk = opt.atol * opt.scale[i] + opt.rtol * std::abs(y[i]);
    d2 += ((f1[i] - f0[i]) / sk) * ((f1[i] - f0[i]) / sk);
  }
  d2 = all_finite(f1) ? std::sqrt(d2 / N) / h0 : 0.0;
  const double dm = std::max(d1, d2);
  const double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 0.2);
  return std::min({100.0 * h0, h1, opt.max_step});
}

}  // namespace detail

/// Integrates y' = rhs(t, y) from t0 toward t_end. Integration stops at
/// t_end, at the first event crossed, when on_step returns false, or on
/// failure. Trial stages whose derivative is non-finite are rejected, so a
/// right-hand side may return NaN to signal "outside the admissible set".
template <std::size_t N, class Rhs>
Result<N> integrate(Rhs&& rhs, double t0, const Vec<N>& y0, double t_end,
                    const Options<N>& opt, std::span<const Event<N>> events = {},
                    const std::function<bool(const DenseStep<N>&)>& on_step = {}) {
  Result<N> res;
  res.t = t0;
  res.y = y0;
  if (t_end == t0) return res;
  const double dir = t_end > t0 ? 1.0 : -1.0;

  double t = t0;
  Vec<N> y = y0;
  Vec<N> k1 = rhs(t, y);
  if (!detail::all_finite(k1)) {
    throw DomainError("right-hand side is not finite at the initial state");
  }
  double h = opt.initial_step > 0.0 ? opt.initial_step
                                    : detail::initial_step(rhs, t, y, k1, dir, opt);
  h = dir * std::min(h, std::abs(t_end - t0));

  std::vector<double> g_prev(events.size());
  for (std::size_t e = 0; e < events.size(); ++e) g_prev[e] = events[e].g(t, y);

  bool last_rejected = false;
  while (true) {
    if (res.accepted + res.rejected >= opt.max_steps) {
      res.status = Status::MaxSteps;
      break;
    }
    const double h_min = 16.0 * std::numeric_limits<double>::epsilon() *
                         std::max(std::abs(t), std::abs(t_end - t0));
    bool final_step = false;
    if (dir * (t + h - t_end) >= 0.0) {
      h = t_end - t;
      final_step = true;
    }
    auto trial = detail::attempt<N>(rhs, t, y, k1, h, opt);
    if (trial.err > 1.0) {
      ++res.rejected;
      const double fac = std::isfinite(trial.err)
                             ? std::clamp(0.9 * std::pow(trial.err, -0.2), 0.1, 0.9)
                             : 0.25;
      h *= fac;
      last_rejected = true;
      if (std::abs(h) < h_min) {
        res.status = Status::StepUnderflow;
        break;
      }
      continue;
    }

    ++res.accepted;
    const double t_new = final_step ? t_end : t + h;
    trial.dense.h = t_new - t;

    // Event detection over the accepted step.
    int hit = -1;
    double hit_t = 0.0;
    for (std::size_t e = 0; e < events.size(); ++e) {
      const double g1 = events[e].g(t_new, trial.y1);
      const double g0 = g_prev[e];
      const bool rising = g0 < 0.0 && g1 >= 0.0;
      const bool falling = g0 > 0.0 && g1 <= 0.0;
      const bool crossed = (events[e].direction >= 0 && rising) ||
                           (events[e].direction <= 0 && falling);
      g_prev[e] = g1;
      if (!crossed) continue;
      // Bisection on the continuous extension.
      double a = t, b = t_new;
      double ga = g0;
      const double tol = opt.event_tol * std::max({std::abs(t), std::abs(t_new), 1e-300});
      for (int it = 0; it < 200 && std::abs(b - a) > tol; ++it) {
        const double mid = 0.5 * (a + b);
        const double gm = events[e].g(mid, trial.dense(mid));
        if ((ga < 0.0) == (gm < 0.0) && gm != 0.0) {
          a = mid;
          ga = gm;
        } else {
          b = mid;
        }
      }
      const double root = 0.5 * (a + b);
      if (hit < 0 || dir * (root - hit_t) < 0.0) {
        hit = static_cast<int>(e);
        hit_t = root;
      }
    }

    if (hit >= 0) {
      // Polish: take a genuine step to the located point and refine the
      // root by secant iterations on the stepped solution.
      const auto& ev = events[static_cast<std::size_t>(hit)];
      auto stepped = [&](double tau) {
        return detail::attempt<N>(rhs, t, y, k1, tau - t, opt);
      };
      double tau = hit_t;
      auto tr = stepped(tau);
      double g_tau = ev.g(tau, tr.y1);
      const double dt_probe =
          std::max(opt.event_tol * std::max(std::abs(tau), 1e-300), 1e-6 * std::abs(h));
      double tau_b = tau - dir * dt_probe;
      auto tr_b = stepped(tau_b);
      double g_b = ev.g(tau_b, tr_b.y1);
      for (int it = 0; it < 4; ++it) {
        if (!(std::isfinite(g_tau) && std::isfinite(g_b)) || g_tau == g_b) break;
        const double next = tau - g_tau * (tau - tau_b) / (g_tau - g_b);
        if (!(dir * (next - t) > 0.0) || dir * (next - t_new) > 0.0) break;
        tau_b = tau;
        g_b = g_tau;
        tau = next;
        tr = stepped(tau);
        g_tau = ev.g(tau, tr.y1);
      }
      if (detail::all_finite(tr.y1)) {
        tr.dense.h = tau - t;
        res.solution.push_back(tr.dense);
        res.t = tau;
        res.y = tr.y1;
      } else {
        DenseStep<N> cut = trial.dense;
        res.solution.push_back(cut);
        res.t = hit_t;
        res.y = trial.dense(hit_t);
      }
      res.status = Status::Event;
      res.event_index = hit;
      return res;
    }

    res.solution.push_back(trial.dense);
    t = t_new;
    y = trial.y1;
    k1 = trial.k7;
    res.t = t;
    res.y = y;

    if (on_step && !on_step(res.solution.steps().back())) {
      res.status = Status::Stopped;
      return res;
    }
    if (final_step) {
      res.status = Status::ReachedEnd;
      return res;
    }

    double fac = trial.err > 0.0 ? 0.9 * std::pow(trial.err, -0.2) : 10.0;
    fac = std::clamp(fac, 0.2, last_rejected ? 1.0 : 10.0);
    last_rejected = false;
    h = dir * std::min(std::abs(h) * fac, opt.max_step);
  }
  return res;
}

}  // namespace stellar_match::ode
