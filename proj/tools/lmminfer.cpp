#include "lmminfer/commands.hpp"
#include "lmminfer/io.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

using namespace lmminfer;

int main(int argc, char** argv) {
  CLI::App app{"Inference for single coordinates of high-dimensional linear mixed models"};
  app.set_config("--config", "", "flat key=value file mirroring the long flags; flags win");
  app.set_help_flag("--help", "print this help and exit");
  app.option_defaults()->always_capture_default();

  RunConfig cfg;
  std::string scale = "1:1:1";
  std::string bracket;
  int threads = -1;
  int n = 0, p = 0, groups = 0, s = -1, j = 0;
  double h = 0.0, rho = 0.0, df = 0.0;

  app.add_option("command", cfg.command, "test | ci | mtest | simulate | generate")
      ->required()
      ->check(CLI::IsMember({"test", "ci", "mtest", "simulate", "generate"}));
  app.add_option("--input,-i", cfg.input, "CSV with a header row");
  app.add_option("--output,-o", cfg.output, "report destination (default stdout)");
  app.add_option("--format", cfg.format, "text | json")->check(CLI::IsMember({"text", "json"}));
  app.add_option("--test-col", cfg.test_cols, "tested column(s); mtest takes a comma list")->delimiter(',');
  app.add_option("--group-col", cfg.group_col, "group key column");
  app.add_option("--y-col", cfg.y_col, "response column");
  app.add_option("--random-cols", cfg.random_cols, "columns forming W (default: random intercept)")->delimiter(',');
  app.add_option("--beta0", cfg.beta0, "null value of the tested coefficient(s)");
  app.add_option("--alt", cfg.alternative, "two | greater | less")->check(CLI::IsMember({"two", "greater", "less"}));
  app.add_option("--alpha", cfg.alpha, "level");
  app.add_option("--proxy", cfg.proxy, "default | logn | identity | zero")
      ->check(CLI::IsMember({"default", "logn", "identity", "zero"}));
  app.add_option("--tuning-scale", scale, "eta:mu:etabar multipliers");
  app.add_flag("--auto-relax", cfg.auto_relax, "widen the constraints when a problem is infeasible");
  app.add_option("--family", cfg.family, "test: gaussian | logit | poisson");
  app.add_option("--bracket", bracket, "ci: lo:hi search interval");
  app.add_option("--seed", cfg.seed, "master seed");
  app.add_option("--reps", cfg.reps, "simulate: Monte Carlo replications");
  app.add_option("--bootstrap-reps", cfg.bootstrap_reps, "mtest: multiplier bootstrap draws (>= 100)");
  app.add_option("--threads", threads, "worker threads (default LMMINFER_THREADS or all cores)");
  app.add_option("--preset", cfg.preset, "simulate: model1..model5, table2, table2-model1, table2-model2, table3, table4");
  app.add_flag("--reduced", cfg.reduced, "simulate/generate: n=120, p=150, N=30 scale");
  app.add_option("--model", cfg.model, "simulate/generate: model 1..5")->check(CLI::Range(1, 5));
  auto* on = app.add_option("--n", n, "override n");
  auto* op = app.add_option("--p", p, "override p");
  auto* og = app.add_option("--groups", groups, "override the number of groups N");
  auto* os = app.add_option("--s", s, "override the sparsity");
  auto* oj = app.add_option("--j", j, "override the tested index (1-based)");
  auto* oh = app.add_option("--h", h, "local alternative h");
  auto* orho = app.add_option("--rho", rho, "design correlation");
  auto* odf = app.add_option("--df", df, "Student-t degrees of freedom for rows and errors");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInput;
  }

  try {
    cfg.scale = parse_tuning_scale(scale);
    if (!bracket.empty()) {
      const auto colon = bracket.find(':');
      if (colon == std::string::npos) throw Error(ErrorCode::InvalidArgument, "--bracket expects lo:hi");
      cfg.bracket = std::make_pair(parse_double(bracket.substr(0, colon)), parse_double(bracket.substr(colon + 1)));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  if (*on) cfg.n = n;
  if (*op) cfg.p = p;
  if (*og) cfg.groups = groups;
  if (*os) cfg.s = s;
  if (*oj) cfg.j = j;
  if (*oh) cfg.h = h;
  if (*orho) cfg.rho = rho;
  if (*odf) cfg.df = df;

  if (threads >= 0) {
    cfg.threads = threads;
  } else if (const char* env = std::getenv("LMMINFER_THREADS")) {
    cfg.threads = std::atoi(env);
  }
  return run_command(cfg, std::cout, std::cerr);
}
