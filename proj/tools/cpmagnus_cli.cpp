#include <iostream>

#include <CLI11.hpp>

#include "cpmagnus/cli_runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Completely positive effective generators for periodically driven Lindblad equations"};
  app.set_version_flag("--version", std::string(cpmagnus::kVersion));
  app.require_subcommand(1, 1);

  cpmagnus::RunRequest request;
  std::string sweep;
  for (const char* name : {"decompose", "correct", "benchmark"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", request.config, "TOML experiment config")->required();
    sub->add_option("--out", request.out, "output directory")->required();
    sub->add_option("--order", request.orders, "Magnus order (repeatable), overrides config");
    sub->add_option("--omega-sweep", sweep, "lo:hi:steps");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cpmagnus::kExitConfig;
  }
  request.command = app.get_subcommands().front()->get_name();
  if (!sweep.empty()) {
    request.omega_sweep = sweep;
  }
  return cpmagnus::run_command(request, std::cerr);
}
