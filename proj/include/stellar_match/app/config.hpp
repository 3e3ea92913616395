#pragma once

// Run configuration: one JSON document with sections eos, tov, shoot, sweep,
// distortion and output. Unknown keys and wrong types are schema errors.

#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stellar_match/eos.hpp"
#include "stellar_match/errors.hpp"
#include "stellar_match/matching.hpp"
#include "stellar_match/tov.hpp"

namespace stellar_match::app {

using json = nlohmann::ordered_json;

/// Malformed or contradictory configuration (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

struct EosConfig {
  double gamma = 5.0 / 3.0;
  double A = 1.0;
  /// Infinite selects the nonrelativistic mode ("inf" in the file).
  double c = 1.0;
  std::vector<double> lambda;
  /// Requested density range for eos-check.
  std::optional<double> rho_max;
};

struct ShootConfig {
  double p_center = 1e-3;
  std::optional<double> radius;
  std::optional<double> mass;
};

struct SweepConfig {
  double p_min = 1e-6;
  double p_max = 1.0;
  std::size_t points = 25;
  double boundary_tol = 1e-4;
  double max_spacing = 5e-3;
  std::string sampler = "random";
  std::uint64_t seed = 20240101;
  std::size_t count = 1000;
  double exclusion = 1e-2;
  std::size_t on_curve = 100;
  double delta_near = 1e-4;
  double delta_far = 1e-2;
  std::optional<double> r_min, r_max, k_min, k_max;
};

struct DistortionConfig {
  std::optional<double> n;
  bool from_gamma = false;
  std::vector<double> b{1e-4, 3.1622776601683794e-4, 1e-3, 3.1622776601683794e-3, 1e-2};
  std::size_t zeta_points = 41;
  std::vector<double> levels{0.2, 0.5, 0.8};
  double stratification_b = 1e-2;
};

struct OutputConfig {
  std::string directory = "out";
  std::vector<std::string> formats{"csv", "json"};
};

struct RunConfig {
  EosConfig eos;
  TovOptions tov;
  ShootConfig shoot;
  SweepConfig sweep;
  DistortionConfig distortion;
  OutputConfig output;

  EosSpec make_eos() const { return EosSpec(eos.gamma, eos.A, eos.c, eos.lambda); }

  /// Polytropic index for the rotating-body pipeline.
  double polytropic_index() const {
    if (distortion.from_gamma) return 1.0 / (eos.gamma - 1.0);
    return distortion.n.value_or(1.0);
  }

  bool wants(const std::string& format) const {
    for (const auto& f : output.formats) {
      if (f == format) return true;
    }
    return false;
  }
};

namespace config_detail {

inline void check_keys(const json& obj, const std::string& where,
                       const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key " + where + "." + key);
  }
}

inline double number(const json& v, const std::string& path) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
  }
  if (!v.is_number()) throw ConfigError(path + " must be a number");
  return v.get<double>();
}

inline double positive(const json& v, const std::string& path) {
  const double x = number(v, path);
  if (!(x > 0.0)) throw ConfigError(path + " must be positive");
  return x;
}

inline std::size_t count(const json& v, const std::string& path) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(path + " must be a nonnegative integer");
  }
  return v.get<std::size_t>();
}

inline std::vector<double> numbers(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path + " must be an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(number(v[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

template <class T, class F>
void read(const json& obj, const char* key, T& into, F&& conv, const std::string& where) {
  if (obj.contains(key)) into = conv(obj.at(key), where + "." + key);
}

inline json num(double x) {
  if (std::isinf(x)) return "inf";
  return x;
}

template <class T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace config_detail

inline RunConfig parse_config(const json& j) {
  using namespace config_detail;
  RunConfig cfg;
  check_keys(j, "config", {"eos", "tov", "shoot", "sweep", "distortion", "output"});
  auto maybe = [](const json& obj, const char* key, double& out, const std::string& path) {
    if (obj.contains(key) && !obj.at(key).is_null()) out = positive(obj.at(key), path);
  };
  auto maybe_opt = [](const json& obj, const char* key, std::optional<double>& out,
                      const std::string& path) {
    if (obj.contains(key) && !obj.at(key).is_null()) out = positive(obj.at(key), path);
  };

  if (j.contains("eos")) {
    const auto& e = j.at("eos");
    check_keys(e, "eos", {"gamma", "A", "c", "lambda", "rho_max"});
    read(e, "gamma", cfg.eos.gamma, number, "eos");
    read(e, "A", cfg.eos.A, number, "eos");
    read(e, "c", cfg.eos.c, number, "eos");
    read(e, "lambda", cfg.eos.lambda, numbers, "eos");
    maybe_opt(e, "rho_max", cfg.eos.rho_max, "eos.rho_max");
    if (!(cfg.eos.gamma > 1.0) || !std::isfinite(cfg.eos.gamma)) {
      throw ConfigError("eos.gamma must be a finite number greater than 1");
    }
    if (!(cfg.eos.A > 0.0)) throw ConfigError("eos.A must be positive");
    if (!(cfg.eos.c > 0.0)) throw ConfigError("eos.c must be positive or \"inf\"");
  }
  if (j.contains("tov")) {
    const auto& t = j.at("tov");
    check_keys(t, "tov", {"rtol", "atol", "r0_factor", "dr_factor", "r_max_factor",
                          "richardson_radius", "thresholds"});
    maybe(t, "rtol", cfg.tov.rtol, "tov.rtol");
    maybe(t, "atol", cfg.tov.atol, "tov.atol");
    maybe(t, "r0_factor", cfg.tov.r0_factor, "tov.r0_factor");
    maybe(t, "dr_factor", cfg.tov.dr_factor, "tov.dr_factor");
    maybe(t, "r_max_factor", cfg.tov.r_max_factor, "tov.r_max_factor");
    maybe(t, "richardson_radius", cfg.tov.richardson_radius, "tov.richardson_radius");
    if (t.contains("thresholds")) {
      const auto& th = t.at("thresholds");
      check_keys(th, "tov.thresholds",
                 {"r_floor", "m_floor", "p_ceiling", "slope_floor", "ceiling_step"});
      auto& T = cfg.tov.thresholds;
      maybe(th, "r_floor", T.r_floor, "tov.thresholds.r_floor");
      maybe(th, "m_floor", T.m_floor, "tov.thresholds.m_floor");
      maybe(th, "p_ceiling", T.p_ceiling, "tov.thresholds.p_ceiling");
      maybe(th, "slope_floor", T.slope_floor, "tov.thresholds.slope_floor");
      maybe(th, "ceiling_step", T.ceiling_step, "tov.thresholds.ceiling_step");
      if (!(T.ceiling_step > 1.0)) throw ConfigError("tov.thresholds.ceiling_step must exceed 1");
    }
  }
  if (j.contains("shoot")) {
    const auto& s = j.at("shoot");
    check_keys(s, "shoot", {"p_center", "radius", "mass"});
    maybe(s, "p_center", cfg.shoot.p_center, "shoot.p_center");
    maybe_opt(s, "radius", cfg.shoot.radius, "shoot.radius");
    maybe_opt(s, "mass", cfg.shoot.mass, "shoot.mass");
  }
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    check_keys(s, "sweep", {"p_min", "p_max", "points", "boundary_tol", "max_spacing", "sampler",
                            "seed", "count", "exclusion", "on_curve", "delta_near", "delta_far",
                            "r_min", "r_max", "k_min", "k_max"});
    auto& w = cfg.sweep;
    maybe(s, "p_min", w.p_min, "sweep.p_min");
    maybe(s, "p_max", w.p_max, "sweep.p_max");
    read(s, "points", w.points, count, "sweep");
    maybe(s, "boundary_tol", w.boundary_tol, "sweep.boundary_tol");
    maybe(s, "max_spacing", w.max_spacing, "sweep.max_spacing");
    if (s.contains("sampler")) {
      if (!s.at("sampler").is_string()) throw ConfigError("sweep.sampler must be a string");
      w.sampler = s.at("sampler").get<std::string>();
      if (w.sampler != "random" && w.sampler != "grid") {
        throw ConfigError("sweep.sampler must be \"random\" or \"grid\"");
      }
    }
    if (s.contains("seed")) {
      if (!s.at("seed").is_number_unsigned()) throw ConfigError("sweep.seed must be a nonnegative integer");
      w.seed = s.at("seed").get<std::uint64_t>();
    }
    read(s, "count", w.count, count, "sweep");
    read(s, "on_curve", w.on_curve, count, "sweep");
    if (s.contains("exclusion")) {
      w.exclusion = number(s.at("exclusion"), "sweep.exclusion");
      if (!(w.exclusion >= 0.0)) throw ConfigError("sweep.exclusion must be nonnegative");
    }
    maybe(s, "delta_near", w.delta_near, "sweep.delta_near");
    maybe(s, "delta_far", w.delta_far, "sweep.delta_far");
    maybe_opt(s, "r_min", w.r_min, "sweep.r_min");
    maybe_opt(s, "r_max", w.r_max, "sweep.r_max");
    maybe_opt(s, "k_min", w.k_min, "sweep.k_min");
    maybe_opt(s, "k_max", w.k_max, "sweep.k_max");
    if (!(w.p_max > w.p_min)) throw ConfigError("sweep.p_max must exceed sweep.p_min");
  }
  if (j.contains("distortion")) {
    const auto& d = j.at("distortion");
    check_keys(d, "distortion",
               {"n", "from_gamma", "b", "zeta_points", "levels", "stratification_b"});
    auto& D = cfg.distortion;
    if (d.contains("n") && !d.at("n").is_null()) {
      D.n = number(d.at("n"), "distortion.n");
      if (!(*D.n >= 0.0 && *D.n < 5.0)) throw ConfigError("distortion.n must lie in [0, 5)");
    }
    if (d.contains("from_gamma")) {
      if (!d.at("from_gamma").is_boolean()) throw ConfigError("distortion.from_gamma must be a boolean");
      D.from_gamma = d.at("from_gamma").get<bool>();
    }
    read(d, "b", D.b, numbers, "distortion");
    read(d, "zeta_points", D.zeta_points, count, "distortion");
    read(d, "levels", D.levels, numbers, "distortion");
    if (d.contains("stratification_b")) {
      D.stratification_b = number(d.at("stratification_b"), "distortion.stratification_b");
    }
    for (double b : D.b) {
      if (!(b >= 0.0)) throw ConfigError("distortion.b values must be nonnegative");
    }
    if (D.zeta_points < 3) throw ConfigError("distortion.zeta_points must be at least 3");
    if (D.from_gamma && D.n) {
      const double derived = 1.0 / (cfg.eos.gamma - 1.0);
      if (std::abs(*D.n - derived) > 1e-12 * std::max(1.0, derived)) {
        throw ConfigError("distortion.n contradicts n = 1/(gamma - 1) from eos.gamma");
      }
    }
  }
  if (j.contains("output")) {
    const auto& o = j.at("output");
    check_keys(o, "output", {"directory", "formats"});
    if (o.contains("directory")) {
      if (!o.at("directory").is_string()) throw ConfigError("output.directory must be a string");
      cfg.output.directory = o.at("directory").get<std::string>();
    }
    if (o.contains("formats")) {
      const auto& f = o.at("formats");
      if (!f.is_array()) throw ConfigError("output.formats must be an array");
      cfg.output.formats.clear();
      for (const auto& x : f) {
        if (!x.is_string() || (x != "csv" && x != "json")) {
          throw ConfigError("output.formats entries must be \"csv\" or \"json\"");
        }
        cfg.output.formats.push_back(x.get<std::string>());
      }
    }
  }
  return cfg;
}

/// The fully resolved configuration, every default spelled out.
inline json to_json(const RunConfig& c) {
  using config_detail::num;
  using config_detail::opt;
  const auto& T = c.tov.thresholds;
  json j;
  j["eos"] = {{"gamma", c.eos.gamma}, {"A", c.eos.A}, {"c", num(c.eos.c)},
              {"lambda", c.eos.lambda}, {"rho_max", opt(c.eos.rho_max)}};
  j["tov"] = {{"rtol", c.tov.rtol},
              {"atol", c.tov.atol},
              {"r0_factor", c.tov.r0_factor},
              {"dr_factor", c.tov.dr_factor},
              {"r_max_factor", c.tov.r_max_factor},
              {"richardson_radius", c.tov.richardson_radius},
              {"thresholds",
               {{"r_floor", T.r_floor},
                {"m_floor", T.m_floor},
                {"p_ceiling", T.p_ceiling},
                {"slope_floor", T.slope_floor},
                {"ceiling_step", T.ceiling_step}}}};
  j["shoot"] = {{"p_center", c.shoot.p_center},
                {"radius", opt(c.shoot.radius)},
                {"mass", opt(c.shoot.mass)}};
  const auto& w = c.sweep;
  j["sweep"] = {{"p_min", w.p_min},       {"p_max", w.p_max},
                {"points", w.points},     {"boundary_tol", w.boundary_tol},
                {"max_spacing", w.max_spacing}, {"sampler", w.sampler},
                {"seed", w.seed},         {"count", w.count},
                {"exclusion", w.exclusion}, {"on_curve", w.on_curve},
                {"delta_near", w.delta_near}, {"delta_far", w.delta_far},
                {"r_min", opt(w.r_min)},  {"r_max", opt(w.r_max)},
                {"k_min", opt(w.k_min)},  {"k_max", opt(w.k_max)}};
  const auto& d = c.distortion;
  j["distortion"] = {{"n", opt(d.n)},
                     {"from_gamma", d.from_gamma},
                     {"b", d.b},
                     {"zeta_points", d.zeta_points},
                     {"levels", d.levels},
                     {"stratification_b", d.stratification_b}};
  j["output"] = {{"directory", c.output.directory}, {"formats", c.output.formats}};
  return j;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  try {
    return json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

/// Applies "section.key=value" (value parsed as JSON, else taken as a string).
inline void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like section.key=value: " + assignment);
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &j;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i])) (*node)[parts[i]] = json::object();
    node = &(*node)[parts[i]];
    if (!node->is_object()) throw ConfigError("override path crosses a value: " + path);
  }
  (*node)[parts.back()] = value;
}

}  // namespace stellar_match::app
