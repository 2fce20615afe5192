#pragma once

// Subcommands behind the transfer-budget executable. Each is a pure function
// of the configuration and writes its CSV files into `out`.

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "tbudget/config.hpp"
#include "tbudget/planner.hpp"
#include "tbudget/simlab.hpp"
#include "tbudget/trainer.hpp"

namespace tbudget {

// Raised when the verify gate is not met; carries the summary line.
class VerificationFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Analytic J when configured and available, otherwise the configured
// empirical estimate from a seeded calibration sample at theta.
FisherEstimate config_fisher(const RunConfig& config, const ParamVector& theta);

// TransferProblem for the configured target and sources.
TransferProblem build_problem(const RunConfig& config);

TransferPlan cmd_plan(const RunConfig& config, const std::filesystem::path& out, std::ostream& log);

ProxyCurve cmd_curve(const RunConfig& config, const std::filesystem::path& out, std::ostream& log);

struct VerifyRow {
  long axis_value = 0;
  TrialReport report;
  double theoretical_proxy = 0.0;
  double z_ratio = 0.0;
};

struct VerifySummary {
  std::vector<VerifyRow> rows;
  double t = 0.0;
  double max_z_ratio = 0.0;
  double fraction_within = 0.0;
  long empirical_argmin = 0;
  long theoretical_argmin = 0;
  bool passed = false;
};

// Writes verify.csv and returns the summary; the caller decides on the gate.
VerifySummary cmd_verify(const RunConfig& config, const std::filesystem::path& out, std::ostream& log);

Comparison cmd_train(const RunConfig& config, const std::filesystem::path& out, std::ostream& log);

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitInfeasible = 3, kExitVerify = 4 };

// Loads the config, applies a positive `workers` override, runs the named
// subcommand and maps errors to exit codes. Messages go to `err`.
int run_command(const std::string& name, const std::filesystem::path& config_path,
                const std::filesystem::path& out, int workers, std::ostream& log, std::ostream& err);

}  // namespace tbudget
