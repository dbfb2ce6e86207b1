#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mtomd/errors.hpp"
#include "mtomd/harness.hpp"
#include "mtomd/selftest.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

std::string default_output(const mtomd::RunConfig& c, const std::string& suffix) {
  return c.name + suffix + ".csv";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multitask online mirror descent experiments"};
  app.set_version_flag("--version", std::string(mtomd::version_string()));
  app.require_subcommand(1);

  std::string config_path, output;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "Run one experiment and write its regret report");
  run->add_option("config", config_path, "JSON config file")->required();
  run->add_option("-o,--output", output, "CSV report path (default: <name>.csv)");
  run->add_flag("-q,--quiet", quiet, "Do not print the summary");

  auto* sw = app.add_subcommand("sweep", "Run the grid in a config and write per-cell statistics");
  sw->add_option("config", config_path, "JSON config file")->required();
  sw->add_option("-o,--output", output, "CSV table path (default: <name>_sweep.csv)");
  sw->add_flag("-q,--quiet", quiet, "Do not print the table");

  auto* val = app.add_subcommand("validate", "Check a config and its inputs without running");
  val->add_option("config", config_path, "JSON config file")->required();

  auto* self = app.add_subcommand("selftest", "Run the built-in invariant checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*self) return mtomd::run_selftest(std::cout) == 0 ? kOk : kRuntimeError;

    const mtomd::RunConfig config = mtomd::RunConfig::load(config_path);

    if (*val) {
      const mtomd::Problem pr = mtomd::build_problem(config);
      mtomd::resolve_learner(config, pr, 1.0);
      std::cout << "ok: " << mtomd::to_string(config.learner) << ", N=" << pr.n_tasks << ", d=" << pr.dim
                << ", T=" << pr.rounds.size() << '\n';
      return kOk;
    }

    if (*run) {
      const mtomd::RegretReport rep = mtomd::run_experiment(config);
      if (output.empty()) output = default_output(config, "");
      mtomd::emit_report(rep, output);
      if (rep.unconverged_steps > 0)
        std::cerr << "warning: " << rep.unconverged_steps << " update steps stopped at the iteration cap (max residual "
                  << rep.max_solver_residual << ")\n";
      if (!quiet) {
        std::cout << "final regret " << rep.final_regret << " (eta " << rep.eta << ", b " << rep.b << ", L "
                  << rep.lipschitz << ")";
        if (rep.proposition_bound) std::cout << ", bound " << *rep.proposition_bound;
        std::cout << "\nwrote " << output << '\n';
      }
      return kOk;
    }

    if (*sw) {
      const auto cells = mtomd::sweep(config);
      if (output.empty()) output = default_output(config, "_sweep");
      mtomd::emit_sweep(cells, output);
      if (!quiet) {
        for (const auto& c : cells) {
          std::cout << "N=" << (c.n_tasks ? std::to_string(*c.n_tasks) : "-")
                    << " sigma=" << (c.sigma ? std::to_string(*c.sigma) : "-")
                    << " b=" << (c.b ? std::to_string(*c.b) : "-") << " eta=" << (c.eta ? std::to_string(*c.eta) : "-")
                    << "  mean " << c.mean << "  std " << c.std_dev << '\n';
        }
        std::cout << "wrote " << output << '\n';
      }
      return kOk;
    }
  } catch (const mtomd::config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}
