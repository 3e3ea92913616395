#pragma once

// Matching curves C_j = {(R(P_O), M(P_O)) : P_O in O_j} from outward shots,
// scaled distance to them, and the inward-shooting sweep over admissible
// boundary data.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "stellar_match/eos.hpp"
#include "stellar_match/errors.hpp"
#include "stellar_match/tov.hpp"

namespace stellar_match {

// --- parallel helpers -----------------------------------------------------

/// Explicit request if positive, else STELLAR_MATCH_THREADS, else 1.
inline unsigned resolve_threads(int requested) {
  if (requested > 0) return static_cast<unsigned>(requested);
  if (const char* env = std::getenv("STELLAR_MATCH_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return 1;
}

/// Runs fn(i) for i in [0, n) on the given number of threads. Each index is
/// handled exactly once; the first exception is rethrown after joining.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit draw, so the
/// stream is identical across standard libraries.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// --- curves ---------------------------------------------------------------

struct MatchingCurvePoint {
  double P_O = 0.0;
  double R = 0.0;
  double M = 0.0;
};

struct MatchingCurve {
  int id = 0;
  std::vector<MatchingCurvePoint> points;
  /// Bracket of the component in P_O: the last success and the first
  /// failure beyond it (equal to the success at a grid edge).
  double P_lo = 0.0, P_hi = 0.0;
  double P_lo_fail = 0.0, P_hi_fail = 0.0;
  /// Why the component ends: the failing shot's label, or "grid_edge".
  std::string lo_label = "grid_edge";
  std::string hi_label = "grid_edge";
};

struct LogGrid {
  double lo = 1e-6;
  double hi = 1e-1;
  std::size_t points = 20;

  std::vector<double> values() const {
    if (!(lo > 0.0 && hi > lo) || points < 2) throw InvalidArgument("invalid P_O grid");
    const double decades = std::log10(hi / lo);
    if (static_cast<double>(points - 1) < 2.0 * decades - 1e-9) {
      throw InvalidArgument("P_O grid needs at least two points per decade");
    }
    std::vector<double> v(points);
    for (std::size_t i = 0; i < points; ++i) {
      v[i] = lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(points - 1));
    }
    v.back() = hi;
    return v;
  }
};

struct ScanOptions {
  /// Component boundaries are bisected to this relative width in P_O.
  double boundary_tol = 1e-4;
  /// Curves are refined until consecutive points are closer than this in
  /// scaled coordinates.
  double max_spacing = 5e-3;
  std::size_t max_points = 20000;
  unsigned threads = 1;
  TovOptions tov;
};

/// Outcome of one outward shot used by the scanner.
struct ForwardSample {
  double P_O = 0.0;
  bool success = false;
  double R = 0.0, M = 0.0;
  std::string label;
};

inline ForwardSample forward_sample(const EosSpec& eos, double P_O, const TovOptions& opt) {
  ForwardSample s;
  s.P_O = P_O;
  try {
    const auto shot = shoot_from_center(eos, P_O, opt);
    s.label = to_string(shot.trajectory.exit());
    if (shot.surface) {
      s.success = true;
      s.R = shot.surface->R;
      s.M = shot.surface->M;
    }
  } catch (const ValidityRangeError&) {
    s.label = "eos_range";
  }
  return s;
}

struct ScanResult {
  std::vector<MatchingCurve> curves;
  std::vector<ForwardSample> grid;
  /// Pooled medians over all curve points; the distance scale.
  double R_ref = 1.0;
  double M_ref = 1.0;
};

namespace matching_detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Bisects in log P_O between a success and a failure.
inline std::pair<ForwardSample, ForwardSample> bisect_boundary(const EosSpec& eos,
                                                               ForwardSample good,
                                                               ForwardSample bad,
                                                               const ScanOptions& opt) {
  for (int it = 0; it < 200; ++it) {
    if (std::abs(std::log(bad.P_O / good.P_O)) < opt.boundary_tol) break;
    const auto mid = forward_sample(eos, std::sqrt(good.P_O * bad.P_O), opt.tov);
    (mid.success ? good : bad) = mid;
  }
  return {good, bad};
}

inline double scaled_gap(const MatchingCurvePoint& a, const MatchingCurvePoint& b, double R_ref,
                         double M_ref) {
  return std::hypot((a.R - b.R) / R_ref, (a.M - b.M) / M_ref);
}

}  // namespace matching_detail

/// Shoots outward on the grid, groups consecutive successes into components,
/// bisects each interior boundary, and refines every curve.
inline ScanResult scan_components(const EosSpec& eos, const LogGrid& grid,
                                  const ScanOptions& opt = {}) {
  using namespace matching_detail;
  const auto P = grid.values();
  ScanResult out;
  out.grid.resize(P.size());
  parallel_for(P.size(), opt.threads,
               [&](std::size_t i) { out.grid[i] = forward_sample(eos, P[i], opt.tov); });

  // Components as index ranges of successes.
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (std::size_t i = 0; i < P.size(); ++i) {
    if (!out.grid[i].success) continue;
    if (!ranges.empty() && ranges.back().second + 1 == i) {
      ranges.back().second = i;
    } else {
      ranges.emplace_back(i, i);
    }
  }
  for (std::size_t c = 0; c < ranges.size(); ++c) {
    const auto [a, b] = ranges[c];
    MatchingCurve curve;
    curve.id = static_cast<int>(c);
    std::vector<ForwardSample> pts(out.grid.begin() + a, out.grid.begin() + b + 1);
    curve.P_lo = curve.P_lo_fail = P[a];
    curve.P_hi = curve.P_hi_fail = P[b];
    if (a > 0) {
      const auto [g, f] = bisect_boundary(eos, out.grid[a], out.grid[a - 1], opt);
      pts.insert(pts.begin(), g);
      curve.P_lo = g.P_O;
      curve.P_lo_fail = f.P_O;
      curve.lo_label = f.label;
    }
    if (b + 1 < P.size()) {
      const auto [g, f] = bisect_boundary(eos, out.grid[b], out.grid[b + 1], opt);
      pts.push_back(g);
      curve.P_hi = g.P_O;
      curve.P_hi_fail = f.P_O;
      curve.hi_label = f.label;
    }
    for (const auto& s : pts) curve.points.push_back({s.P_O, s.R, s.M});
    out.curves.push_back(std::move(curve));
  }
  if (out.curves.empty()) return out;

  auto update_scale = [&] {
    std::vector<double> Rs, Ms;
    for (const auto& c : out.curves) {
      for (const auto& p : c.points) {
        Rs.push_back(p.R);
        Ms.push_back(p.M);
      }
    }
    out.R_ref = median(Rs);
    out.M_ref = median(Ms);
  };
  update_scale();

  // Refinement: insert log-midpoints where consecutive points are far apart.
  // The medians move as points are added, so refine until the spacing holds
  // in the final scale.
  for (int round = 0; round < 8; ++round) {
    bool changed = false;
    for (auto& curve : out.curves) {
      for (int pass = 0; pass < 40; ++pass) {
        std::vector<std::size_t> gaps;
        for (std::size_t i = 0; i + 1 < curve.points.size(); ++i) {
          if (scaled_gap(curve.points[i], curve.points[i + 1], out.R_ref, out.M_ref) >
              opt.max_spacing) {
            gaps.push_back(i);
          }
        }
        if (gaps.empty() || curve.points.size() + gaps.size() > opt.max_points) break;
        std::vector<ForwardSample> mids(gaps.size());
        parallel_for(gaps.size(), opt.threads, [&](std::size_t k) {
          const auto& p = curve.points[gaps[k]];
          const auto& q = curve.points[gaps[k] + 1];
          mids[k] = forward_sample(eos, std::sqrt(p.P_O * q.P_O), opt.tov);
        });
        std::vector<MatchingCurvePoint> merged;
        std::size_t k = 0;
        for (std::size_t i = 0; i < curve.points.size(); ++i) {
          merged.push_back(curve.points[i]);
          if (k < gaps.size() && gaps[k] == i) {
            // A failure strictly inside a component would split it; the
            // scanner assumes interval components and keeps the chord.
            if (mids[k].success) merged.push_back({mids[k].P_O, mids[k].R, mids[k].M});
            ++k;
          }
        }
        changed = changed || merged.size() > curve.points.size();
        curve.points = std::move(merged);
      }
    }
    update_scale();
    if (!changed) break;
  }
  return out;
}

// --- distance -------------------------------------------------------------

struct CurveDistance {
  int component = -1;
  double distance = std::numeric_limits<double>::infinity();
  /// Segment index and parameter of the nearest point.
  std::size_t segment = 0;
  double t = 0.0;
};

/// Euclidean distance in (R / R_ref, M / M_ref) to the piecewise-linear
/// interpolants.
inline CurveDistance distance_to_curves(double R, double M,
                                        const std::vector<MatchingCurve>& curves, double R_ref,
                                        double M_ref) {
  if (curves.empty()) throw InvalidArgument("distance to an empty curve list");
  const double x = R / R_ref, y = M / M_ref;
  CurveDistance best;
  for (const auto& c : curves) {
    const auto& p = c.points;
    if (p.empty()) continue;
    auto consider = [&](double d, std::size_t seg, double t) {
      if (d < best.distance) best = {c.id, d, seg, t};
    };
    if (p.size() == 1) {
      consider(std::hypot(x - p[0].R / R_ref, y - p[0].M / M_ref), 0, 0.0);
      continue;
    }
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
      const double ax = p[i].R / R_ref, ay = p[i].M / M_ref;
      const double dx = p[i + 1].R / R_ref - ax, dy = p[i + 1].M / M_ref - ay;
      const double len2 = dx * dx + dy * dy;
      double t = len2 > 0.0 ? ((x - ax) * dx + (y - ay) * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      consider(std::hypot(x - (ax + t * dx), y - (ay + t * dy)), i, t);
    }
  }
  return best;
}

inline CurveDistance distance_to_curves(double R, double M, const ScanResult& scan) {
  return distance_to_curves(R, M, scan.curves, scan.R_ref, scan.M_ref);
}

// --- sweep ----------------------------------------------------------------

enum class SamplerKind { Grid, Random };

struct SamplerConfig {
  SamplerKind kind = SamplerKind::Random;
  std::uint64_t seed = 20240101;
  std::size_t count = 1000;
  /// Rectangle in (R, k = 2M/R). Unset bounds default to the bounding box of
  /// the curves.
  std::optional<double> R_min, R_max, k_min, k_max;
  /// Random samples closer than this (scaled) are redrawn; 0 keeps all.
  double exclusion = 0.0;
  /// Points drawn on the curves themselves (random P_O inside a component).
  std::size_t on_curve = 100;
};

struct SweepOptions {
  /// Case-11 must only occur below this scaled distance.
  double delta_near = 1e-4;
  /// Samples farther than this are counted as "far".
  double delta_far = 1e-2;
  unsigned threads = 1;
  TovOptions tov;
};

struct SweepSample {
  std::size_t index = 0;
  double R = 0.0, M = 0.0;
  /// Set for on-curve resamples.
  std::optional<double> P_O;
  std::string label;
  bool case11 = false;
  double distance = std::numeric_limits<double>::infinity();
  int component = -1;
};

struct SweepSummary {
  std::size_t samples = 0;
  std::size_t far_samples = 0;
  std::size_t far_case11 = 0;
  std::size_t case11 = 0;
  std::size_t case11_near = 0;
  bool case11_only_near = true;
  std::size_t on_curve = 0;
  std::size_t on_curve_case11 = 0;
  double max_case11_distance = 0.0;
  std::map<std::string, std::size_t> labels;
  double R_min = 0, R_max = 0, k_min = 0, k_max = 0;
};

struct SweepReport {
  std::vector<SweepSample> samples;
  std::vector<SweepSample> on_curve;
  SweepSummary summary;
  SweepOptions options;
  SamplerConfig sampler;
};

namespace matching_detail {

inline void classify(const EosSpec& eos, SweepSample& s, const std::vector<MatchingCurve>& curves,
                     double R_ref, double M_ref, const TovOptions& tov) {
  try {
    const auto c = shoot_from_boundary(eos, {s.R, s.M, 0.0}, tov).classification;
    s.label = c.label();
    s.case11 = c.is(Case::Case11);
  } catch (const InvalidArgument&) {
    s.label = "inadmissible";
  }
  if (!curves.empty()) {
    const auto d = distance_to_curves(s.R, s.M, curves, R_ref, M_ref);
    s.distance = d.distance;
    s.component = d.component;
  }
}

}  // namespace matching_detail

/// Classifies admissible samples by inward shooting and relates the
/// Case-11 outcomes to the distance from the matching curves.
inline SweepReport ae_failure_sweep(const EosSpec& eos, const ScanResult& scan,
                                    SamplerConfig sampler, const SweepOptions& opt = {}) {
  const auto& curves = scan.curves;
  SweepReport rep;
  rep.options = opt;
  // k = 2M/(c^2 R); the nonrelativistic mode uses 2M/R.
  const double k_scale = eos.nonrelativistic() ? 1.0 : 1.0 / eos.c_sq();

  // Default rectangle: bounding box of the curves in (R, 2M/(c^2 R)).
  double R_lo = std::numeric_limits<double>::infinity(), R_hi = 0.0;
  double k_lo = std::numeric_limits<double>::infinity(), k_hi = 0.0;
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      R_lo = std::min(R_lo, p.R);
      R_hi = std::max(R_hi, p.R);
      const double k = 2.0 * p.M * k_scale / p.R;
      k_lo = std::min(k_lo, k);
      k_hi = std::max(k_hi, k);
    }
  }
  // A degenerate axis (a vertical or horizontal curve) is widened by 25%.
  auto widen = [](double& lo, double& hi) {
    const double mid = 0.5 * (lo + hi);
    if (hi - lo <= 1e-6 * mid) {
      lo = 0.75 * mid;
      hi = 1.25 * mid;
    }
  };
  if (!curves.empty()) {
    widen(R_lo, R_hi);
    widen(k_lo, k_hi);
  }
  sampler.R_min = sampler.R_min.value_or(curves.empty() ? 1.0 : R_lo);
  sampler.R_max = sampler.R_max.value_or(curves.empty() ? 2.0 : R_hi);
  sampler.k_min = sampler.k_min.value_or(curves.empty() ? 0.01 : k_lo);
  sampler.k_max = sampler.k_max.value_or(curves.empty() ? 0.1 : k_hi);
  if (!(*sampler.R_min > 0.0 && *sampler.R_max >= *sampler.R_min && *sampler.k_min > 0.0 &&
        *sampler.k_max >= *sampler.k_min)) {
    throw InvalidArgument("sampling rectangle must have positive R and k with min <= max");
  }
  if (!eos.nonrelativistic() && !(*sampler.k_max < 1.0)) {
    throw InvalidArgument("sampling rectangle leaves the admissible set (2M/R >= 1)");
  }
  rep.sampler = sampler;
  auto to_M = [&](double R, double k) { return 0.5 * k * R / k_scale; };

  // Sample generation is sequential so the stream depends only on the seed.
  std::mt19937_64 rng(sampler.seed);
  const double Ra = *sampler.R_min, Rb = *sampler.R_max;
  const double ka = *sampler.k_min, kb = *sampler.k_max;
  rep.samples.resize(sampler.count);
  if (sampler.kind == SamplerKind::Grid) {
    const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(double(sampler.count))));
    for (std::size_t i = 0; i < sampler.count; ++i) {
      const double fx = side > 1 ? double(i % side) / double(side - 1) : 0.5;
      const double fy = side > 1 ? double(i / side) / double(side - 1) : 0.5;
      const double R = Ra + (Rb - Ra) * fx;
      rep.samples[i] = {i, R, to_M(R, ka + (kb - ka) * std::min(fy, 1.0))};
    }
  } else {
    for (std::size_t i = 0; i < sampler.count; ++i) {
      for (int attempt = 0;; ++attempt) {
        const double R = Ra + (Rb - Ra) * uniform01(rng);
        const double M = to_M(R, ka + (kb - ka) * uniform01(rng));
        const bool keep = sampler.exclusion <= 0.0 || curves.empty() ||
                          distance_to_curves(R, M, scan).distance > sampler.exclusion;
        if (keep) {
          rep.samples[i] = {i, R, M};
          break;
        }
        if (attempt > 100000) throw InvalidArgument("exclusion distance leaves no samples");
      }
    }
  }

  // On-curve resamples: random P_O inside a component, shot forward.
  if (!curves.empty()) {
    for (std::size_t i = 0; i < sampler.on_curve; ++i) {
      const auto& c = curves[static_cast<std::size_t>(uniform01(rng) * curves.size())];
      const double u = uniform01(rng);
      SweepSample s;
      s.index = i;
      s.P_O = c.P_lo * std::pow(c.P_hi / c.P_lo, u);
      rep.on_curve.push_back(s);
    }
  }

  parallel_for(rep.samples.size() + rep.on_curve.size(), opt.threads, [&](std::size_t i) {
    if (i < rep.samples.size()) {
      matching_detail::classify(eos, rep.samples[i], curves, scan.R_ref, scan.M_ref, opt.tov);
      return;
    }
    auto& s = rep.on_curve[i - rep.samples.size()];
    const auto fwd = forward_sample(eos, *s.P_O, opt.tov);
    if (!fwd.success) {
      s.label = "forward_" + fwd.label;
      return;
    }
    s.R = fwd.R;
    s.M = fwd.M;
    matching_detail::classify(eos, s, curves, scan.R_ref, scan.M_ref, opt.tov);
  });

  auto& sum = rep.summary;
  sum.R_min = Ra;
  sum.R_max = Rb;
  sum.k_min = ka;
  sum.k_max = kb;
  sum.samples = rep.samples.size();
  for (const auto& s : rep.samples) {
    ++sum.labels[s.label];
    const bool far = s.distance > opt.delta_far;
    if (far) ++sum.far_samples;
    if (!s.case11) continue;
    ++sum.case11;
    if (far) ++sum.far_case11;
    if (s.distance < opt.delta_near) {
      ++sum.case11_near;
    } else {
      sum.case11_only_near = false;
    }
    sum.max_case11_distance = std::max(sum.max_case11_distance, s.distance);
  }
  sum.on_curve = rep.on_curve.size();
  for (const auto& s : rep.on_curve) {
    if (s.case11) ++sum.on_curve_case11;
    if (s.case11 && !(s.distance < opt.delta_near)) sum.case11_only_near = false;
  }
  return rep;
}

}  // namespace stellar_match
