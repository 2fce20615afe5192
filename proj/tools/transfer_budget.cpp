// transfer-budget <plan|curve|verify|train> --config <path> --out <dir> [--workers N]

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "tbudget/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Transfer-budget planning, verification and training experiments"};
  app.require_subcommand(1);

  std::string config;
  std::string out = ".";
  int workers = 0;
  for (const char* name : {"plan", "curve", "verify", "train"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "Output directory")->capture_default_str();
    sub->add_option("--workers", workers, "Worker threads (overrides the config)")->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : tbudget::kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  return tbudget::run_command(command, config, out, workers, std::cout, std::cerr);
}
