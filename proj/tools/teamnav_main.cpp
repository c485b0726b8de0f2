#include <iostream>

#include <CLI11.hpp>

#include "teamnav/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"teamnav: deterministic multi-agent object-navigation simulator"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run an episode from a config file");
  std::string config_path;
  std::string oracle_impl;
  std::string crash_spec;
  long seed = -1;
  run->add_option("--config", config_path, "run config (JSON)")->required();
  run->add_option("--seed", seed, "override the scenario seed");
  run->add_option("--oracle", oracle_impl, "decision oracle: rule|remote");
  run->add_option("--crash", crash_spec, "crash schedule, e.g. \"0:50,2:75\"");

  auto* replay = app.add_subcommand("replay", "verify and render a recorded trace");
  std::string trace_path;
  replay->add_option("trace", trace_path, "trace.jsonl from a run")->required();

  auto* validate = app.add_subcommand("validate-scenario", "check a scenario file");
  std::string scenario_path;
  validate->add_option("path", scenario_path, "scenario file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      teamnav::harness::RunConfig cfg = teamnav::harness::RunConfig::from_file(config_path);
      if (seed >= 0) cfg.seed = (uint64_t)seed;
      if (!oracle_impl.empty()) cfg.oracle_impl = oracle_impl;
      if (!crash_spec.empty()) cfg.crashes = teamnav::harness::parse_crash_spec(crash_spec);
      teamnav::harness::EpisodeReport report = teamnav::harness::run_episode(cfg);
      std::cout << report.to_json(true).dump(2) << "\n";
      bool ok = report.invariant_violations.empty();
      if (!ok) std::cerr << "invariant violations recorded; see report\n";
      return ok ? 0 : 1;
    }
    if (replay->parsed()) return teamnav::harness::replay(trace_path, std::cout);
    if (validate->parsed()) {
      auto problems = teamnav::harness::validate_scenario(scenario_path);
      for (const auto& p : problems) std::cout << p << "\n";
      if (problems.empty()) std::cout << "scenario ok\n";
      return problems.empty() ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
