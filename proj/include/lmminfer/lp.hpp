#pragma once

#include <Eigen/Dense>

#include <string_view>

namespace lmminfer {

enum class SolverStatus { Optimal, Infeasible, IterationLimit, Unbounded };

std::string_view to_string(SolverStatus s);

// min c^T x  s.t.  A x <= b,  x >= 0.
struct LinearProgram {
  Eigen::VectorXd objective;
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
};

// min c^T x  s.t.  row_lower <= A x <= row_upper,  col_lower <= x <= col_upper.
// Infinite bounds are allowed; every column needs a finite lower bound.
struct BoundedLp {
  Eigen::VectorXd cost;
  Eigen::MatrixXd a;
  Eigen::VectorXd col_lower, col_upper;
  Eigen::VectorXd row_lower, row_upper;
};

struct SimplexOptions {
  double tol = 1e-9;            // primal/dual feasibility and pivot tolerance
  int max_iterations = 0;       // 0: 50 * (columns + rows)
  int refactor_every = 100;     // rebuild the basis inverse from scratch
  int bland_after_stall = 50;   // degenerate pivots before switching to Bland's rule
};

struct LpSolution {
  SolverStatus status = SolverStatus::Infeasible;
  Eigen::VectorXd x;
  Eigen::VectorXd row_activity;
  double objective = 0.0;
  int iterations = 0;
  double max_violation = 0.0;   // measured by direct substitution
};

// Bounded-variable dual simplex on a dense revised form. Structural columns
// with negative cost and no upper bound get a temporary box; hitting it means
// Unbounded.
LpSolution solve_bounded(const BoundedLp& lp, const SimplexOptions& opts = {});

// The result is Optimal only if the substituted solution violates no
// constraint by more than 1e-8 * (1 + ||b||_inf).
LpSolution lp_solve(const LinearProgram& lp, double tol = 1e-9, const SimplexOptions& opts = {});

}  // namespace lmminfer
