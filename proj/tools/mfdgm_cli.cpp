#include <iostream>
#include <utility>

#include <CLI11.hpp>

#include "mfdgm/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Two-network deep Galerkin solver for mean-field games"};
  app.require_subcommand(1);
  mfdgm::CommandLine cl;
  std::uint64_t seed = 0;

  const std::pair<const char*, const char*> commands[] = {
      {"train", "train both networks and write loss, error and checkpoint files"},
      {"gradcheck", "check network derivatives and parameter gradients against finite differences"},
      {"compare", "run MFDGM and DGM-MFG over the compare seeds and summarise final errors"},
      {"traffic", "train a traffic-flow problem and dump rho, phi, u, q grids"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", cl.config_path, "experiment config file");
    sub->add_option("--preset", cl.preset, "start from a named preset (test1 test2 test3 test4 compare traffic0 traffic05)");
    sub->add_option("--seed", seed, "override the seed");
    sub->add_option("--out", cl.out_dir, "output directory (overrides MFDGM_OUT_DIR and the config)");
    if (std::string(name) == "train" || std::string(name) == "traffic")
      sub->add_option("--resume", cl.resume, "continue from a checkpoint");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : mfdgm::exit_code::config_error;
  }
  for (CLI::App* sub : app.get_subcommands()) {
    cl.command = sub->get_name();
    if (sub->count("--seed")) cl.seed = seed;
  }
  return mfdgm::run_command(cl, std::cout);
}
