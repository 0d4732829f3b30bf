#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "mflow/experiment.hpp"

namespace {

struct Args {
  std::string config;
  std::optional<std::string> out;
  std::size_t threads = 0;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> format;
  std::optional<double> p;
  std::optional<std::string> system;
  bool raw = false;
};

void addCommon(CLI::App& sub, Args& a) {
  sub.add_option("--config,-c", a.config, "experiment file (JSON)")->required()->check(CLI::ExistingFile);
  sub.add_option("--out,-o", a.out, "output directory (overrides outputs.directory)");
  sub.add_option("--threads,-j", a.threads, "worker threads (0 = hardware parallelism)");
  sub.add_option("--seed", a.seed, "Monte Carlo seed base (overrides sim.seedBase)");
  sub.add_option("--format", a.format, "write only this format")->check(CLI::IsMember({"csv", "json"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mflow: cascading failures in two-layer flow networks"};
  app.require_subcommand(1);
  Args a;

  auto* curve = app.add_subcommand("curve", "final system size over the attack grid");
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo cascades over the attack grid");
  auto* critical = app.add_subcommand("critical", "critical attack size per system");
  auto* stable = app.add_subcommand("stable-set", "stable point region on a grid");
  auto* optimize = app.add_subcommand("optimize", "free-space allocation table for a budget");
  for (auto* sub : {curve, simulate, critical, stable, optimize}) addCommon(*sub, a);
  for (auto* sub : {curve, simulate}) sub->add_flag("--raw", a.raw, "also write per-run results");
  stable->add_option("--p", a.p, "attack size (overrides stableSet.p)");
  stable->add_option("--system", a.system, "system to scan when the file has several");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Usage errors share the config-error exit code; --help still exits 0.
    return app.exit(e) == 0 ? mflow::kExitOk : mflow::kExitConfig;
  }

  mflow::Overrides ov;
  ov.outDir = a.out;
  ov.seed = a.seed;
  ov.format = a.format;
  if (a.raw) ov.rawRuns = true;
  ov.stableSetP = a.p;

  mflow::RunContext ctx;
  ctx.threads = a.threads;
  ctx.log = &std::cout;
  ctx.system = a.system;

  try {
    const auto spec = mflow::loadExperiment(a.config, ov);
    if (curve->parsed()) return mflow::cmdCurve(spec, ctx);
    if (simulate->parsed()) return mflow::cmdSimulate(spec, ctx);
    if (critical->parsed()) return mflow::cmdCritical(spec, ctx);
    if (stable->parsed()) return mflow::cmdStableSet(spec, ctx);
    return mflow::cmdOptimize(spec, ctx);
  } catch (const mflow::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return mflow::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
