#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fhn/config.hpp"
#include "fhn/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Stochastic FitzHugh-Nagumo pullback-attractor experiments"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  app.add_option("--config", config_path, "experiment config (key = value)");
  app.add_option("--out", out_dir, "output directory (overrides output.dir)");
  auto* seed_opt = app.add_option("--seed", seed, "noise seed (overrides the config)");
  app.add_option("--threads", threads, "worker threads; never changes results")->check(CLI::PositiveNumber);
  for (const char* name : {"noise", "simulate", "pullback", "verify", "attractor"}) app.add_subcommand(name);
  app.fallthrough();
  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  fhn::ExperimentConfig cfg;
  try {
    cfg = config_path.empty() ? fhn::parse_config("") : fhn::load_config(config_path);
    if (*seed_opt) cfg.seed = seed;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return fhn::exit_config;
  }
  try {
    const int code = fhn::run_command(command, cfg, {out_dir, threads}, std::cerr);
    std::cout << command << ": " << (code == 0 ? "pass" : code == 1 ? "check failure" : "blow-up") << "\n";
    return code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return fhn::exit_config;
  }
}
