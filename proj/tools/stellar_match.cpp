// stellar_match command-line front end.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stellar_match/app/commands.hpp"

namespace app = stellar_match::app;
using app::json;

namespace {

int report_error(const char* kind, const std::string& message, int code) {
  json e;
  e["error"] = {{"kind", kind}, {"message", message}, {"exit_code", code}};
  std::cerr << e.dump() << "\n";
  return code;
}

struct Flags {
  std::string config_path;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::optional<std::string> format;
  std::vector<std::string> overrides;
  std::optional<double> p_center, radius, mass;
};

app::RunConfig resolve(const Flags& f) {
  json j = f.config_path.empty() ? json::object() : app::read_json_file(f.config_path);
  for (const auto& o : f.overrides) app::apply_override(j, o);
  if (f.out) j["output"]["directory"] = *f.out;
  if (f.seed) j["sweep"]["seed"] = *f.seed;
  if (f.format) j["output"]["formats"] = json::array({*f.format});
  if (f.p_center) j["shoot"]["p_center"] = *f.p_center;
  if (f.radius) j["shoot"]["radius"] = *f.radius;
  if (f.mass) j["shoot"]["mass"] = *f.mass;
  return app::parse_config(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Matter-vacuum matching and rotating-polytrope surface toolkit", "stellar_match"};
  cli.require_subcommand(1);
  Flags flags;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--out", flags.out, "output directory");
    sub->add_option("--seed", flags.seed, "sweep seed");
    sub->add_option("--threads", flags.threads, "worker threads (default: STELLAR_MATCH_THREADS or 1)")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--format", flags.format, "table format")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--set", flags.overrides, "override a config value: section.key=value");
  };

  auto* eos_check = cli.add_subcommand("eos-check", "check the EOS inequalities over the range");
  auto* shoot_center = cli.add_subcommand("shoot-center", "shoot from the center");
  auto* shoot_boundary = cli.add_subcommand("shoot-boundary", "shoot inward from (R, M)");
  auto* match = cli.add_subcommand("match", "matching curves and the inward-shooting sweep");
  auto* surface = cli.add_subcommand("surface", "rotating polytrope surface and ellipsoid fits");
  auto* version = cli.add_subcommand("version", "print the version");
  for (auto* sub : {eos_check, shoot_center, shoot_boundary, match, surface}) add_common(sub);
  shoot_center->add_option("--p-center", flags.p_center, "central pressure");
  shoot_boundary->add_option("--radius", flags.radius, "boundary radius R");
  shoot_boundary->add_option("--mass", flags.mass, "boundary mass M");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), 2);
  }

  if (version->parsed()) {
    std::cout << app::version_info().dump() << "\n";
    return 0;
  }

  try {
    app::RunContext ctx;
    ctx.config = resolve(flags);
    ctx.threads = stellar_match::resolve_threads(flags.threads);
    app::OutputDir out(ctx.config.output.directory, app::to_json(ctx.config));
    app::CommandResult result;
    if (eos_check->parsed()) {
      result = app::cmd_eos_check(ctx, out);
    } else if (shoot_center->parsed()) {
      result = app::cmd_shoot_center(ctx, out);
    } else if (shoot_boundary->parsed()) {
      result = app::cmd_shoot_boundary(ctx, out);
    } else if (match->parsed()) {
      result = app::cmd_match(ctx, out);
    } else {
      result = app::cmd_surface(ctx, out);
    }
    json summary = result.summary;
    summary["files"] = out.written();
    std::cout << summary.dump() << "\n";
    return result.exit_code;
  } catch (const app::ConfigError& e) {
    return report_error(e.kind(), e.what(), 2);
  } catch (const stellar_match::Error& e) {
    return report_error(e.kind(), e.what(), 1);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), 1);
  }
}
