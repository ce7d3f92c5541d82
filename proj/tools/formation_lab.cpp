#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "formation/commands.hpp"
#include "formation/errors.hpp"

namespace {

struct Options {
  std::string scenario;
  std::string out = ".";
  std::vector<double> omegas;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Options& opt) {
  cmd->add_option("--scenario", opt.scenario, "builtin scenario name or JSON file")->required();
  cmd->add_option("--out", opt.out, "output directory");
  cmd->add_option("--seed", opt.seed, "override the scenario seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distance-based formation control: simulation and checks"};
  app.require_subcommand(1);
  Options opt;

  std::string builtins;
  for (const std::string& name : formation::builtin_scenario_names()) {
    builtins += (builtins.empty() ? "" : ", ") + name;
  }
  app.footer("Builtin scenarios: " + builtins);

  CLI::App* rigidity = app.add_subcommand("rigidity", "infinitesimal rigidity of the target shape");
  CLI::App* simulate = app.add_subcommand("simulate", "integrate the closed loop, write CSV files");
  CLI::App* sweep = app.add_subcommand("sweep", "tail residual of the dithered loop across omega");
  CLI::App* verify = app.add_subcommand("verify", "run the invariant suite, write report.json");
  for (CLI::App* cmd : {rigidity, simulate, sweep, verify}) add_common(cmd, opt);
  sweep->add_option("--omega-list", opt.omegas, "strictly increasing omega values");

  CLI11_PARSE(app, argc, argv);

  try {
    formation::ScenarioConfig scenario = formation::load_scenario(opt.scenario);
    if (opt.seed) scenario.seed = *opt.seed;
    formation::CommandResult result;
    if (rigidity->parsed()) {
      result = formation::cmd_rigidity(scenario, std::cout);
      std::cout << result.report.dump(2) << "\n";
    } else if (simulate->parsed()) {
      result = formation::cmd_simulate(scenario, opt.out, std::cout);
    } else if (sweep->parsed()) {
      result = formation::cmd_sweep(scenario, opt.omegas, opt.out, std::cout);
    } else {
      result = formation::cmd_verify(scenario, opt.out, std::cout);
    }
    return result.exit_code;
  } catch (const formation::UnsupportedCase& e) {
    std::cerr << "unsupported: " << e.what() << "\n";
    return formation::kExitUnsupported;
  } catch (const formation::ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return formation::kExitInvalidInput;
  } catch (const formation::DimensionError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return formation::kExitInvalidInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
