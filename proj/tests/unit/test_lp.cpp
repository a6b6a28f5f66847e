#include <doctest.h>

#include "../support/oracles.hpp"
#include "lmminfer/lp.hpp"

#include <random>

using namespace lmminfer;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("single lower bound row") {
  LinearProgram lp{VectorXd::Ones(1), MatrixXd::Constant(1, 1, -1.0), VectorXd::Constant(1, -3.0)};
  const auto sol = lp_solve(lp);
  REQUIRE(sol.status == SolverStatus::Optimal);
  CHECK(sol.x(0) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("contradictory rows are infeasible") {
  MatrixXd a(2, 1);
  a << 1.0, -1.0;
  VectorXd b(2);
  b << 1.0, -2.0;
  LinearProgram lp{VectorXd::Ones(1), a, b};
  CHECK(lp_solve(lp).status == SolverStatus::Infeasible);
}

TEST_CASE("negative cost without a box is unbounded") {
  MatrixXd a(1, 2);
  a << 1.0, -1.0;
  LinearProgram lp{VectorXd::Constant(2, -1.0), a, VectorXd::Ones(1)};
  CHECK(lp_solve(lp).status == SolverStatus::Unbounded);
}

TEST_CASE("bounded form with ranged rows") {
  // min |x1| + |x2| written as x+ - x-, with 1 <= x1 + x2 <= 2 and x1 - x2 = 0.5
  BoundedLp lp;
  lp.cost = VectorXd::Ones(4);
  lp.a.resize(2, 4);
  lp.a << 1, 1, -1, -1,
          1, -1, -1, 1;
  lp.col_lower = VectorXd::Zero(4);
  lp.col_upper = VectorXd::Constant(4, std::numeric_limits<double>::infinity());
  lp.row_lower = (VectorXd(2) << 1.0, 0.5).finished();
  lp.row_upper = (VectorXd(2) << 2.0, 0.5).finished();
  const auto sol = solve_bounded(lp);
  REQUIRE(sol.status == SolverStatus::Optimal);
  CHECK(sol.objective == doctest::Approx(1.0).epsilon(1e-10));
  const double x1 = sol.x(0) - sol.x(2);
  const double x2 = sol.x(1) - sol.x(3);
  CHECK(x1 - x2 == doctest::Approx(0.5));
  CHECK(sol.max_violation <= 1e-10);
}

TEST_CASE("random small LPs agree with vertex enumeration") {
  std::mt19937_64 rng(20240601);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> nv(1, 6), nc(1, 10);
  int optimal = 0, infeasible = 0;
  for (int t = 0; t < 300; ++t) {
    const int n = nv(rng);
    const int m = nc(rng);
    // m random rows plus a box so every feasible instance is bounded.
    MatrixXd a(m + n, n);
    VectorXd b(m + n);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) a(i, j) = g(rng);
      b(i) = g(rng) * 2.0;
    }
    a.bottomRows(n) = MatrixXd::Identity(n, n);
    b.tail(n).setConstant(5.0);
    VectorXd c(n);
    for (int j = 0; j < n; ++j) c(j) = g(rng);

    const auto expected = oracle::vertex_enumeration(c, a, b);
    const auto sol = lp_solve({c, a, b});
    if (!expected) {
      CHECK(sol.status == SolverStatus::Infeasible);
      ++infeasible;
      continue;
    }
    REQUIRE(sol.status == SolverStatus::Optimal);
    CHECK(sol.objective == doctest::Approx(*expected).epsilon(1e-6).scale(1.0));
    CHECK(sol.max_violation <= 1e-8 * (1.0 + b.cwiseAbs().maxCoeff()));
    ++optimal;
  }
  CHECK(optimal > 50);
  CHECK(infeasible > 5);
}

TEST_CASE("degenerate LP terminates") {
  // Many redundant rows through the same vertex.
  const int n = 4;
  MatrixXd a(12, n);
  VectorXd b = VectorXd::Zero(12);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  for (int i = 0; i < 12; ++i) {
    for (int j = 0; j < n; ++j) a(i, j) = -std::abs(g(rng));
  }
  b(0) = -1.0;
  const auto sol = lp_solve({VectorXd::Ones(n), a, b});
  REQUIRE(sol.status == SolverStatus::Optimal);
  const auto expected = oracle::vertex_enumeration(VectorXd::Ones(n), a, b);
  REQUIRE(expected);
  CHECK(sol.objective == doctest::Approx(*expected).epsilon(1e-8));
}
