#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "stellar_match/app/commands.hpp"

namespace app = stellar_match::app;
namespace fs = std::filesystem;
using app::json;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path work(const std::string& name) {
  const fs::path p = fs::path(STELLAR_MATCH_CLI_WORKDIR) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct Run {
  int code = -1;
  std::string out, err;
  json summary() const { return json::parse(out); }
};

Run run(const fs::path& dir, const std::string& args) {
  const auto o = dir / "stdout.txt", e = dir / "stderr.txt";
  const std::string cmd = std::string("\"") + STELLAR_MATCH_CLI + "\" " + args + " > \"" +
                          o.string() + "\" 2> \"" + e.string() + "\"";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(o);
  r.err = slurp(e);
  return r;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const auto p = dir / "config.json";
  std::ofstream(p) << text;
  return p;
}

}  // namespace

// --- library pieces ------------------------------------------------------

TEST(Fnv1a, ReferenceVectors) {
  EXPECT_EQ(app::fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(app::fnv1a64("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(app::fnv1a64("foobar"), 0x85944171f73967e8ull);
  EXPECT_EQ(app::hex64(0xabcull), "0000000000000abc");
}

TEST(FormatNumber, RoundTrips) {
  for (double x : {0.1, 1.0 / 3.0, 2.0 / 3.0 * 1e-300, 6.02214076e23, -0.0, 1e-6}) {
    EXPECT_EQ(std::strtod(app::format_number(x).c_str(), nullptr), x);
  }
  EXPECT_EQ(app::format_number(0.1), "0.1");
}

TEST(Config, DefaultsRoundTripThroughJson) {
  const auto cfg = app::parse_config(json::object());
  const auto j = app::to_json(cfg);
  EXPECT_EQ(app::to_json(app::parse_config(j)), j);
  EXPECT_EQ(j["eos"]["c"], 1.0);
  EXPECT_EQ(j["sweep"]["seed"], 20240101u);
}

TEST(Config, InfiniteSpeedOfLight) {
  const auto cfg = app::parse_config(json::parse(R"({"eos": {"c": "inf"}})"));
  EXPECT_TRUE(cfg.make_eos().nonrelativistic());
  EXPECT_EQ(app::to_json(cfg)["eos"]["c"], "inf");
}

TEST(Config, SchemaErrors) {
  for (const char* bad : {R"({"eos": {"gama": 2}})", R"({"eos": {"gamma": "two"}})",
                          R"({"eos": {"gamma": 1.0}})", R"({"tov": {"rtol": -1}})",
                          R"({"sweep": {"sampler": "sobol"}})", R"({"sweep": {"count": 1.5}})",
                          R"({"sweep": {"p_min": 1, "p_max": 0.1}})", R"({"extra": {}})",
                          R"({"output": {"formats": ["xml"]}})", R"({"eos": []})",
                          R"({"distortion": {"n": 7}})"}) {
    EXPECT_THROW(app::parse_config(json::parse(bad)), app::ConfigError) << bad;
  }
}

TEST(Config, IndexFromGamma) {
  auto cfg = app::parse_config(
      json::parse(R"({"eos": {"gamma": 2}, "distortion": {"from_gamma": true, "n": 1}})"));
  EXPECT_DOUBLE_EQ(cfg.polytropic_index(), 1.0);
  EXPECT_THROW(app::parse_config(json::parse(
                   R"({"eos": {"gamma": 2}, "distortion": {"from_gamma": true, "n": 1.5}})")),
               app::ConfigError);
  cfg = app::parse_config(json::parse(R"({"distortion": {"n": 3}})"));
  EXPECT_DOUBLE_EQ(cfg.polytropic_index(), 3.0);
}

TEST(Config, Overrides) {
  json j = json::object();
  app::apply_override(j, "eos.gamma=2");
  app::apply_override(j, "eos.lambda=[0.5, 1]");
  app::apply_override(j, "output.directory=runs/a");
  EXPECT_EQ(j["eos"]["gamma"], 2);
  EXPECT_EQ(j["eos"]["lambda"].size(), 2u);
  EXPECT_EQ(j["output"]["directory"], "runs/a");
  EXPECT_THROW(app::apply_override(j, "novalue"), app::ConfigError);
}

TEST(OutputDir, LockIsExclusive) {
  const auto dir = work("lock");
  {
    app::OutputDir a(dir / "o", json::object());
    EXPECT_THROW(app::OutputDir(dir / "o", json::object()), app::IoError);
  }
  EXPECT_NO_THROW(app::OutputDir(dir / "o", json::object()));
}

TEST(OutputDir, EmbedsConfigAndHash) {
  const auto dir = work("embed");
  const json cfg = {{"k", 1}};
  std::string first;
  for (int pass = 0; pass < 2; ++pass) {
    app::OutputDir out(dir / "o", cfg);
    out.write_csv("t.csv", std::array<std::string, 2>{"a", "b"},
                  std::vector<std::array<double, 2>>{{1.0, 0.5}, {2.0, 0.25}});
    const auto text = slurp(dir / "o" / "t.csv");
    EXPECT_EQ(text.rfind("# config: {\"k\":1}\n# content_hash: ", 0), 0u);
    EXPECT_NE(text.find("a,b\n1,0.5\n2,0.25\n"), std::string::npos);
    if (pass == 0) first = text;
    else EXPECT_EQ(text, first);
  }
  app::OutputDir other(dir / "p", json{{"k", 2}});
  other.write_csv("t.csv", std::array<std::string, 2>{"a", "b"},
                  std::vector<std::array<double, 2>>{{1.0, 0.5}, {2.0, 0.25}});
  EXPECT_NE(slurp(dir / "p" / "t.csv"), first);
}

// --- binary --------------------------------------------------------------

TEST(Cli, Version) {
  const auto dir = work("version");
  const auto r = run(dir, "version");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.summary()["version"], stellar_match::kVersion);
}

TEST(Cli, UsageAndSchemaErrorsExitTwo) {
  const auto dir = work("schema");
  EXPECT_EQ(run(dir, "").code, 2);
  EXPECT_EQ(run(dir, "eos-check --bogus").code, 2);
  const auto cfg = write_config(dir, R"({"eos": {"gamma": 2, "A": -1}})");
  const auto r = run(dir, "eos-check --config " + cfg.string() + " --out " + (dir / "o").string());
  EXPECT_EQ(r.code, 2);
  const auto err = json::parse(r.err);
  EXPECT_EQ(err["error"]["kind"], "config");
  const auto broken = write_config(dir, "{ not json");
  EXPECT_EQ(run(dir, "eos-check --config " + broken.string()).code, 2);
}

TEST(Cli, EosCheck) {
  const auto dir = work("eos");
  auto r = run(dir, "eos-check --set eos.gamma=2 --set eos.rho_max=1e6 --out " +
                        (dir / "a").string());
  EXPECT_EQ(r.code, 1) << "rho up to 1e6 exceeds the causal bound rho = 1/2";
  r = run(dir, "eos-check --set eos.gamma=2 --set eos.rho_max=0.4 --out " + (dir / "b").string());
  EXPECT_EQ(r.code, 0);
  r = run(dir, "eos-check --set eos.gamma=2 --set eos.c='\"inf\"' --set eos.rho_max=1e6 --out " +
                   (dir / "c").string());
  EXPECT_EQ(r.code, 0);
  EXPECT_FALSE(r.summary()["bounded"].get<bool>());
  // A large first series coefficient bounds the range.
  r = run(dir, "eos-check --set 'eos.lambda=[1000]' --out " + (dir / "d").string());
  EXPECT_EQ(r.code, 0);
  const auto s = r.summary();
  EXPECT_TRUE(s["bounded"].get<bool>());
  EXPECT_LT(s["validity_density"].get<double>(), 0.46);
  EXPECT_TRUE(fs::exists(dir / "d" / "eos_table.csv"));
}

TEST(Cli, ShootRoundTrip) {
  const auto dir = work("roundtrip");
  auto r = run(dir, "shoot-center --p-center 1e-3 --out " + (dir / "c").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto c = r.summary();
  ASSERT_TRUE(c["success"].get<bool>());
  const double R = c["surface"]["R"], M = c["surface"]["M"];
  EXPECT_TRUE(c["junction"]["pass"].get<bool>());
  std::ostringstream args;
  args.precision(17);
  args << "shoot-boundary --radius " << R << " --mass " << M << " --out " << (dir / "b").string();
  r = run(dir, args.str());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto b = r.summary();
  EXPECT_EQ(b["case"], "Case11");
  EXPECT_NEAR(b["p_center"].get<double>() / 1e-3, 1.0, 1e-5);
  const auto traj = slurp(dir / "b" / "trajectory.csv");
  EXPECT_NE(traj.find("\nr,m,P,rho,h,F,H\n"), std::string::npos);
}

TEST(Cli, InadmissibleBoundaryExitsOne) {
  const auto dir = work("inadmissible");
  const auto r = run(dir, "shoot-boundary --radius 1 --mass 0.6 --out " + (dir / "o").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(json::parse(r.err)["error"]["kind"], "invalid_argument");
  EXPECT_EQ(run(dir, "shoot-boundary --radius 1 --out " + (dir / "p").string()).code, 2);
}

TEST(Cli, NewtonianCenterShotMatchesLaneEmden) {
  const auto dir = work("newtonian");
  const auto r = run(dir, "shoot-center --set eos.c='\"inf\"' --set eos.gamma=1.5 "
                          "--p-center 1e-2 --out " + (dir / "o").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto s = r.summary();
  EXPECT_NEAR(s["surface"]["R"].get<double>() / s["lane_emden"]["R"].get<double>(), 1.0, 1e-6);
  EXPECT_NEAR(s["surface"]["M"].get<double>() / s["lane_emden"]["M"].get<double>(), 1.0, 1e-6);
}

TEST(Cli, MatchNewtonianVerticalLine) {
  const auto dir = work("match_line");
  const auto cfg = write_config(dir, R"({
    "eos": {"gamma": 2, "c": "inf"},
    "sweep": {"p_min": 1e-4, "p_max": 1e-2, "points": 5, "count": 20, "on_curve": 5}
  })");
  const auto r = run(dir, "match --config " + cfg.string() + " --out " + (dir / "o").string());
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(dir / "o" / "curve_0.csv");
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("P_O", 0) == 0) continue;
    std::stringstream ss(line);
    std::string p, R;
    std::getline(ss, p, ',');
    std::getline(ss, R, ',');
    EXPECT_NEAR(std::stod(R), kPi / std::sqrt(2.0 * kPi), 1e-6);
    ++rows;
  }
  EXPECT_GT(rows, 5);
  const auto s = r.summary();
  EXPECT_EQ(s["sweep"]["on_curve_case11"], 5);
  EXPECT_EQ(s["sweep"]["far_case11"], 0);
}

TEST(Cli, MatchEmptySetIsNotAnError) {
  const auto dir = work("match_empty");
  const auto r = run(dir, "match --set sweep.p_min=1 --set sweep.p_max=100 --set sweep.points=5 "
                          "--out " + (dir / "o").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto s = r.summary();
  EXPECT_TRUE(s["components"].empty());
  EXPECT_TRUE(s.contains("note"));
  EXPECT_TRUE(fs::exists(dir / "o" / "curves.csv"));
}

TEST(Cli, MatchIsReproducible) {
  const auto dir = work("match_repeat");
  const std::string args = "match --seed 5 --set sweep.count=40 --set sweep.on_curve=8 --out " +
                           (dir / "o").string();
  ASSERT_EQ(run(dir, args + " --threads 1").code, 0);
  const auto summary = slurp(dir / "o" / "summary.json");
  const auto sweep = slurp(dir / "o" / "sweep.jsonl");
  ::setenv("STELLAR_MATCH_THREADS", "3", 1);
  ASSERT_EQ(run(dir, args).code, 0);
  ::unsetenv("STELLAR_MATCH_THREADS");
  EXPECT_EQ(slurp(dir / "o" / "summary.json"), summary);
  EXPECT_EQ(slurp(dir / "o" / "sweep.jsonl"), sweep);
  ASSERT_EQ(run(dir, "match --seed 6 --set sweep.count=40 --set sweep.on_curve=8 --out " +
                         (dir / "o").string()).code,
            0);
  EXPECT_NE(slurp(dir / "o" / "summary.json"), summary);
}

TEST(Cli, LockedDirectoryExitsOne) {
  const auto dir = work("locked");
  fs::create_directories(dir / "o");
  std::ofstream(dir / "o" / ".stellar_match.lock") << "";
  const auto r = run(dir, "eos-check --out " + (dir / "o").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(json::parse(r.err)["error"]["kind"], "io");
}

TEST(Cli, SurfacePipeline) {
  const auto dir = work("surface");
  const auto r = run(dir, "surface --out " + (dir / "o").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto s = r.summary();
  EXPECT_NEAR(s["A2"].get<double>(), -kPi * kPi / 18.0, 1e-8);
  EXPECT_NEAR(s["xi1"].get<double>(), kPi, 1e-8);
  const double slope = s["scaling"]["slope"];
  EXPECT_GE(slope, 1.9);
  EXPECT_LE(slope, 2.1);
  EXPECT_TRUE(s["scaling"]["slope_two"].get<bool>());
  EXPECT_TRUE(s["stratification"]["non_ellipsoidal"].get<bool>());
  EXPECT_FALSE(s["stratification_control"]["non_ellipsoidal"].get<bool>());
  for (const auto& x : {"c0", "c1", "c2", "mu1"}) EXPECT_TRUE(s.contains(x)) << x;
  EXPECT_TRUE(fs::exists(dir / "o" / "residuals_0.csv"));
}

TEST(Cli, SurfaceSphereAndAdvisory) {
  const auto dir = work("surface_b");
  const auto r = run(dir, "surface --set 'distortion.b=[0, 0.1]' --out " + (dir / "o").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto s = r.summary();
  EXPECT_LT(s["fits"][0]["rms_residual"].get<double>(), 1e-14);
  EXPECT_TRUE(s["fits"][1]["first_order_advisory"].get<bool>());
  EXPECT_NE(r.err.find("first_order_advisory"), std::string::npos);
  EXPECT_TRUE(s["scaling"].contains("skipped"));
}

TEST(Cli, HashesReproduce) {
  const auto dir = work("hash");
  ASSERT_EQ(run(dir, "surface --out " + (dir / "o").string()).code, 0);
  const auto a = json::parse(slurp(dir / "o" / "surface.json"));
  ASSERT_EQ(run(dir, "surface --out " + (dir / "o").string()).code, 0);
  const auto b = json::parse(slurp(dir / "o" / "surface.json"));
  EXPECT_EQ(a["content_hash"], b["content_hash"]);
  EXPECT_EQ(a["config"]["distortion"]["zeta_points"], 41);
  ASSERT_EQ(run(dir, "surface --set distortion.zeta_points=21 --out " + (dir / "o").string()).code, 0);
  const auto c = json::parse(slurp(dir / "o" / "surface.json"));
  EXPECT_NE(a["content_hash"], c["content_hash"]);
}
