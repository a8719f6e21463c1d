#include <iostream>

#include <CLI11.hpp>

#include "strnet/cli_io.hpp"

int main(int argc, char** argv) {
  CLI::App app{"strnet: elastic string networks, simulation and boundary control"};
  app.require_subcommand(1);
  strnet::io::CommandOptions opt;

  const char* commands[][2] = {
      {"analyze", "junction Laplacians, components and control feasibility"},
      {"simulate", "forward run with controlled nodes held at equilibrium"},
      {"synthesize", "construct Dirichlet controls and verify them by replay"},
      {"verify", "replay a controls CSV against the scenario target"},
      {"equilibrium", "build the equilibrium and report its residuals"},
  };
  for (auto& c : commands) {
    auto* sub = app.add_subcommand(c[0], c[1]);
    sub->add_option("--scenario", opt.scenario, "scenario or network file (JSON)")->required();
    sub->add_option("--out", opt.out_dir, "output directory")->capture_default_str();
    sub->add_flag("--svg", opt.svg, "also write SVG plots");
    sub->add_option("--threads", opt.threads, "worker threads (0: from scenario)")->check(CLI::NonNegativeNumber);
    sub->add_option("--seed", opt.seed, "seed recorded in reports");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "strnet: E_CONFIG: " << e.what() << "\n";
    return 2;
  }
  return strnet::io::run_command(app.get_subcommands().front()->get_name(), opt, std::cout, std::cerr);
}
