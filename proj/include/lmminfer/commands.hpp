#pragma once

#include "lmminfer/dantzig.hpp"
#include "lmminfer/errors.hpp"
#include "lmminfer/inference.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace lmminfer {

// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitInput = 1,        // I/O, schema or argument errors
  kExitInfeasible = 2,   // a constrained-L1 problem had no feasible point
  kExitNoCrossing = 3,   // CI bracket does not contain both crossings
  kExitDegenerate = 4,   // zero scales, collinear tested column, singular blocks
  kExitNumerical = 5,    // solver iteration limits and other numerical failures
};

int exit_code_for(ErrorCode code);

// Flat mirror of the command-line flags.
struct RunConfig {
  std::string command;
  std::string input;
  std::string output;            // empty: stdout
  std::string format = "text";   // text | json
  std::vector<std::string> test_cols;
  std::string group_col = "group";
  std::string y_col = "y";
  std::vector<std::string> random_cols;
  double beta0 = 0.0;
  std::string alternative = "two";
  double alpha = 0.05;
  std::string proxy = "default";
  TuningScale scale;
  bool auto_relax = false;
  std::uint64_t seed = 1;
  int reps = 1000;
  int bootstrap_reps = 1000;
  int threads = 0;
  std::optional<std::pair<double, double>> bracket;
  std::string family = "gaussian";   // test only: gaussian | logit | poisson

  // simulate / generate
  std::string preset;
  bool reduced = false;
  int model = 1;
  std::optional<int> n, p, groups, s, j;
  std::optional<double> h, rho, df;

  void validate() const;
};

// "a:b:c" multipliers for eta, mu and etabar.
TuningScale parse_tuning_scale(const std::string& s);

// Runs one command, writing the report to `out` and diagnostics to `err`.
// Never throws; failures map to an exit code.
int run_command(const RunConfig& cfg, std::ostream& out, std::ostream& err);

}  // namespace lmminfer
