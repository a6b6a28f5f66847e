#include <doctest.h>

#include "../support/fixtures.hpp"
#include "../support/l1_instances.hpp"
#include "../support/oracles.hpp"
#include "lmminfer/dantzig.hpp"
#include "lmminfer/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace lmminfer;

namespace {

// Rows of x drawn with covariance (-0.5)^{|i-j|} via a Cholesky factor.
MatrixXd toeplitz_rows(std::mt19937_64& rng, int n, int p, double rho) {
  MatrixXd sigma(p, p);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) sigma(i, j) = std::pow(rho, std::abs(i - j));
  }
  const MatrixXd l = sigma.llt().matrixL();
  return fixture::gaussian(rng, n, p) * l.transpose();
}

GroupedDataset intercept_dataset(const MatrixXd& x, const VectorXd& z, const VectorXd& y, int group_size) {
  GroupedDataset d;
  const int n = static_cast<int>(x.rows());
  d.X = x;
  d.Z = z;
  d.y = y;
  d.q = 1;
  for (int off = 0; off < n; off += group_size) {
    const int s = std::min(group_size, n - off);
    d.groups.push_back(s);
    d.W.push_back(MatrixXd::Ones(s, 1));
  }
  return d;
}

void check_slacks(const EstimateResult& r, double tol = 1e-8) {
  for (const auto& s : r.constraint_slacks) {
    INFO(s.name);
    CHECK(s.min_slack >= -tol);
  }
}

}  // namespace

TEST_CASE("scaled lasso") {
  SUBCASE("zero response") {
    std::mt19937_64 rng(1);
    const MatrixXd x = fixture::gaussian(rng, 20, 5);
    const auto r = scaled_lasso(x, VectorXd::Zero(20));
    CHECK(r.coef.isZero(0.0));
    CHECK(r.df == 0);
  }
  SUBCASE("orthogonal design soft-thresholds") {
    const int n = 32, p = 8;
    std::mt19937_64 rng(2);
    Eigen::HouseholderQR<MatrixXd> qr(fixture::gaussian(rng, n, p));
    const MatrixXd x = MatrixXd(qr.householderQ() * MatrixXd::Identity(n, p)) * std::sqrt(double(n));
    VectorXd beta = VectorXd::Zero(p);
    beta(3) = 10.0;
    const auto r = scaled_lasso(x, x * beta);
    const double lam0 = default_lambda0(n, p);
    CHECK(r.df == 1);
    CHECK(r.coef(3) <= 10.0);
    CHECK(10.0 - r.coef(3) <= lam0 * r.sigma_hat * (1.0 + 1e-6));
    // On an orthogonal design the fixed point is exactly the soft-threshold.
    CHECK(10.0 - r.coef(3) == doctest::Approx(lam0 * r.sigma_hat).epsilon(1e-3));
  }
  SUBCASE("support recovery regression value") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    int hits = 0;
    for (int rep = 0; rep < 100; ++rep) {
      const MatrixXd x = fixture::gaussian(rng, 100, 200);
      VectorXd beta = VectorXd::Zero(200);
      beta.head(3).setConstant(1.0);
      VectorXd v = x * beta;
      for (int i = 0; i < 100; ++i) v(i) += g(rng);
      const auto r = scaled_lasso(x, v);
      bool all = true;
      for (int j = 0; j < 3; ++j) all = all && r.coef(j) != 0.0;
      hits += all;
      CHECK(r.df <= 100);
      CHECK(r.sigma_hat > 0.0);
    }
    CHECK(hits >= 90);
  }
}

TEST_CASE("default tuning") {
  std::mt19937_64 rng(4);
  const MatrixXd x = toeplitz_rows(rng, 60, 30, -0.5);
  VectorXd y = x.col(0) * 2.0 + fixture::gaussian(rng, 60, 1).col(0);
  auto d = standardize_columns(intercept_dataset(x.rightCols(29), x.col(0), y, 4)).data;
  d.q = 1;

  SUBCASE("proxy reduces to 2/(3q) I") {
    const auto p = build_proxy(d, ProxySpec::scaled_identity(1, 2.0 / 3.0));
    const auto td = default_tuning(d, p, 0.0);
    REQUIRE(td.proxy.kind == ProxySpec::Kind::Matrix);
    CHECK(td.proxy.m(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    td.tuning.validate();
    const double n = 60;
    const double log_p = std::log(30.0);
    const VectorXd v = d.y;
    const VectorXd r = v - d.X * td.gamma_init.coef;
    const double sig = p.apply(r).norm() / std::sqrt(n);
    CHECK(td.tuning.eta_gamma == doctest::Approx(std::sqrt(0.5 * log_p / n) * sig));
    CHECK(td.tuning.mu_gamma == doctest::Approx(4.0 * std::sqrt(std::log(n)) * sig));
    CHECK(td.tuning.etabar_gamma == doctest::Approx(0.05 * v.dot(p.apply(v)) / n));
    CHECK(td.tuning.etabar_theta == doctest::Approx(0.05 * d.z().squaredNorm() / n));
    CHECK(td.tuning.eta_theta == td.tuning.eta_theta_prime);
  }
  SUBCASE("two random effects give M = I/3") {
    auto d2 = d;
    d2.q = 2;
    for (auto& w : d2.W) {
      MatrixXd w2(w.rows(), 2);
      w2.col(0) = w.col(0);
      w2.col(1) = VectorXd::LinSpaced(w.rows(), 0.0, 1.0);
      w = w2;
    }
    const auto p = build_proxy(d2, ProxySpec::zero());
    const auto td = default_tuning(d2, p, 0.0);
    CHECK((td.proxy.m - MatrixXd::Identity(2, 2) / 3.0).norm() < 1e-14);
  }
  SUBCASE("log n identity") {
    CHECK(ProxySpec::log_n_identity().resolve(1, 60)(0, 0) == doctest::Approx(std::log(60.0)));
  }
  SUBCASE("zero pseudo-response") {
    const auto p = build_proxy(d, ProxySpec::zero());
    CHECK(default_etabar_gamma(VectorXd::Zero(60), p) == 0.0);
    auto d0 = d;
    d0.y.setZero();
    try {
      default_tuning(d0, p, 0.0);
      FAIL("expected DegenerateScale");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DegenerateScale);
    }
  }
}

TEST_CASE("estimate_gamma") {
  SUBCASE("zero data gives zero") {
    std::mt19937_64 rng(5);
    auto d = fixture::random_grouped(rng, {3, 3}, 4, 1);
    d.y = d.Z.col(0) * 1.5;
    const auto p = build_proxy(d, ProxySpec::scaled_identity(1, 0.5));
    TuningParams t;
    t.eta_gamma = 0.1;
    t.mu_gamma = 0.1;
    t.etabar_gamma = 0.0;
    const auto r = estimate_gamma(d, 1.5, p, t);
    REQUIRE(r.feasible);
    CHECK(r.coef.isZero(0.0));
  }
  SUBCASE("two coefficients against a fine grid") {
    GroupedDataset d;
    d.groups = {2, 2};
    d.q = 1;
    d.W = {MatrixXd::Ones(2, 1), MatrixXd::Ones(2, 1)};
    d.X.resize(4, 2);
    d.X << 1.2, -0.4,
           0.3, 1.1,
          -0.8, 0.5,
           0.6, -1.3;
    d.Z = (VectorXd(4) << 0.2, -0.1, 0.4, 0.3).finished();
    d.y = (VectorXd(4) << 1.0, 0.7, -0.9, 0.2).finished();
    const MatrixXd m = MatrixXd::Constant(1, 1, 0.5);
    const auto p = build_proxy(d, ProxySpec::matrix(m));
    TuningParams t;
    t.eta_gamma = 0.1;
    t.etabar_gamma = 0.05;
    t.mu_gamma = 0.6;
    const auto r = estimate_gamma(d, 0.5, p, t);
    REQUIRE(r.feasible);
    check_slacks(r);

    const MatrixXd pd = oracle::dense_proxy(d.W, m);
    const VectorXd v = d.y - 0.5 * d.Z.col(0);
    auto feasible = [&](const VectorXd& c) {
      const VectorXd res = pd * (v - d.X * c);
      return (d.X.transpose() * res / 4.0).cwiseAbs().maxCoeff() <= t.eta_gamma &&
             v.dot(res) / 4.0 >= t.etabar_gamma && res.cwiseAbs().maxCoeff() <= t.mu_gamma;
    };
    const auto grid = oracle::grid_min_l1(2, 2.0, 1e-3, feasible);
    REQUIRE(grid);
    CHECK(std::abs(r.l1_norm - *grid) <= 2e-3);
    CHECK(r.l1_norm <= *grid + 1e-9);
  }
  SUBCASE("true vector feasible implies smaller L1 norm") {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> g;
    for (int rep = 0; rep < 10; ++rep) {
      const MatrixXd x = toeplitz_rows(rng, 80, 40, -0.5);
      VectorXd gstar = VectorXd::Zero(39);
      gstar(0) = 1.0;
      gstar(4) = -0.8;
      VectorXd y = x.rightCols(39) * gstar + 0.5 * x.col(0);
      for (int i = 0; i < 80; ++i) y(i) += g(rng);
      auto std_res = standardize_columns(intercept_dataset(x.rightCols(39), x.col(0), y, 4));
      auto& d = std_res.data;
      const VectorXd gs = gstar.cwiseQuotient(std_res.scale);
      const auto p = build_proxy(d, ProxySpec::scaled_identity(1, 2.0 / 3.0));
      const auto td = default_tuning(d, p, 0.5);
      const auto r = estimate_gamma(d, 0.5, p, td.tuning);
      REQUIRE(r.feasible);
      check_slacks(r);
      CHECK(std::abs(r.l1_norm - r.coef.lpNorm<1>()) < 1e-10);
      const auto at_star = evaluate_slacks(gamma_constraints(d, as_beta(d, 0.5), p, td.tuning), gs);
      bool star_ok = true;
      for (const auto& s : at_star) star_ok = star_ok && s.min_slack >= 0.0;
      if (star_ok) CHECK(r.l1_norm <= gs.lpNorm<1>() + 1e-8);
    }
  }
  SUBCASE("infeasible constraints name the binding family") {
    std::mt19937_64 rng(7);
    auto d = fixture::random_grouped(rng, {3, 3}, 2, 1);
    const auto p = build_proxy(d, ProxySpec::zero());
    TuningParams t;
    t.eta_gamma = 10.0;
    t.mu_gamma = 10.0;
    t.etabar_gamma = 10.0 * d.y.squaredNorm();
    const auto r = estimate_gamma(d, 0.0, p, t);
    CHECK_FALSE(r.feasible);
    CHECK(r.solver_status == SolverStatus::Infeasible);
    REQUIRE(r.binding_families.size() == 1);
    CHECK(r.binding_families[0] == "variance");
    try {
      require_optimal(r, "gamma");
      FAIL("expected Infeasible");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Infeasible);
    }
  }
}

TEST_CASE("random constrained-L1 instances agree with the arrangement oracle") {
  std::mt19937_64 rng(314159);
  int optimal = 0, infeasible = 0;
  for (int t = 0; t < 200; ++t) {
    const auto in = fixture::random_l1_instance(rng);
    const auto expect = oracle::l1_arrangement_min(in.g, in.h);
    const auto r = fixture::solve_instance(in);
    if (!expect) {
      CHECK(r.solver_status == SolverStatus::Infeasible);
      ++infeasible;
      continue;
    }
    REQUIRE(r.solver_status == SolverStatus::Optimal);
    CHECK(std::abs(r.l1_norm - *expect) <= 2e-3);
    CHECK(std::abs(r.l1_norm - *expect) <= 1e-7 * (1.0 + *expect));
    check_slacks(r);
    ++optimal;
  }
  MESSAGE("optimal " << optimal << ", infeasible " << infeasible);
  CHECK(optimal >= 50);
  CHECK(infeasible >= 5);
}

TEST_CASE("estimate_theta") {
  SUBCASE("tested column orthogonal to X") {
    GroupedDataset d;
    d.groups = {2, 2};
    d.q = 1;
    d.W = {MatrixXd::Ones(2, 1), MatrixXd::Ones(2, 1)};
    d.X.resize(4, 2);
    d.X << 1, 1,
           1, -1,
           1, 1,
           1, -1;
    d.Z = (VectorXd(4) << 1, 1, -1, -1).finished();
    d.y = VectorXd::Ones(4);
    const auto p = build_proxy(d, ProxySpec::zero());
    TuningParams t;
    t.eta_theta = t.eta_theta_prime = 0.01;
    t.etabar_theta = d.z().squaredNorm() / 4.0;
    t.mu_theta = 2.0;
    const auto r = estimate_theta(d, p, t);
    REQUIRE(r.feasible);
    CHECK(r.coef.isZero(0.0));
  }
  SUBCASE("Toeplitz interior column at large n") {
    std::mt19937_64 rng(8);
    const int n = 2000, p = 20, j = 9;
    const MatrixXd x = toeplitz_rows(rng, n, p, -0.5);
    MatrixXd rest(n, p - 1);
    rest << x.leftCols(j), x.rightCols(p - 1 - j);
    auto sr = standardize_columns(intercept_dataset(rest, x.col(j), VectorXd::Zero(n), 4));
    auto& d = sr.data;
    const double zscale = std::sqrt(double(n)) / d.z().norm();
    d.Z *= zscale;
    VectorXd star = VectorXd::Zero(p - 1);
    star(j - 1) = -0.4;
    star(j) = -0.4;
    // Column rescaling maps theta through the scale factors.
    const VectorXd star_std = (star.array() * zscale / sr.scale.array()).matrix();
    const auto prox = build_proxy(d, ProxySpec::scaled_identity(1, 2.0 / 3.0));
    const TuningParams t = default_theta_tuning(d.X, d.z());
    const auto r = estimate_theta(d, prox, t);
    REQUIRE(r.feasible);
    check_slacks(r);
    CHECK((r.coef - star_std).lpNorm<1>() <= 0.15);
  }
  SUBCASE("tested column inside the span of X") {
    std::mt19937_64 rng(9);
    auto d = fixture::random_grouped(rng, {3, 3}, 2, 1);
    d.Z.col(0) = d.X.col(0) - 0.5 * d.X.col(1);
    const auto p = build_proxy(d, ProxySpec::zero());
    TuningParams t;
    t.eta_theta = t.eta_theta_prime = 0.0;
    t.etabar_theta = 0.0;
    t.mu_theta = 0.0;
    try {
      estimate_theta(d, p, t);
      FAIL("expected CollinearZ");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::CollinearZ);
    }
  }
  SUBCASE("with P~ = I the proxy score row duplicates the plain one") {
    std::mt19937_64 rng(10);
    const MatrixXd x = toeplitz_rows(rng, 60, 25, -0.5);
    auto d = standardize_columns(intercept_dataset(x.rightCols(24), x.col(0), VectorXd::Zero(60), 3)).data;
    const auto p = build_proxy(d, ProxySpec::zero());
    const TuningParams t = default_theta_tuning(d.X, d.z());
    auto fam = theta_constraints(d.X, d.z(), p, t);
    const auto full = solve_constrained_l1(fam, 24);
    fam.erase(fam.begin() + 1);
    const auto reduced = solve_constrained_l1(fam, 24);
    REQUIRE(full.feasible);
    REQUIRE(reduced.feasible);
    CHECK((full.coef - reduced.coef).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("GLMM estimators") {
  std::mt19937_64 rng(11);
  const MatrixXd x = toeplitz_rows(rng, 60, 20, -0.5);

  SUBCASE("gaussian family collapses to the linear estimators") {
    VectorXd y = x.col(1) - 0.5 * x.col(3) + fixture::gaussian(rng, 60, 1).col(0);
    auto d = standardize_columns(intercept_dataset(x.rightCols(19), x.col(0), y, 3)).data;
    const auto p = build_proxy(d, ProxySpec::scaled_identity(1, 2.0 / 3.0));
    const auto td = default_tuning(d, p, 0.0);
    const auto lin = estimate_gamma(d, 0.0, p, td.tuning);
    const auto glmm = estimate_gamma_glmm(d, as_beta(d, 0.0), p, ExponentialFamily(), td.tuning);
    REQUIRE(lin.feasible);
    REQUIRE(glmm.feasible);
    CHECK(glmm.converged);
    CHECK((lin.coef - glmm.coef).cwiseAbs().maxCoeff() < 1e-7);
    const auto th = estimate_theta(d, p, td.tuning);
    const auto thg = estimate_theta_glmm(d, glmm.coef, as_beta(d, 0.0), p, ExponentialFamily(), td.tuning);
    CHECK((th.coef - thg.coef).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("logistic null fixture") {
    VectorXd y(60);
    for (int i = 0; i < 60; ++i) y(i) = i % 2;
    auto d = standardize_columns(intercept_dataset(x.rightCols(19), x.col(0), y, 3)).data;
    const ExponentialFamily fam(ExponentialFamily::Name::BernoulliLogit);
    const auto p = build_proxy(d, ProxySpec::scaled_identity(1, 2.0 / 3.0));
    // Tuning on the working residual Y - b'(0) = Y - 1/2.
    auto d_centered = d;
    d_centered.y = d.y.array() - 0.5;
    auto t = default_tuning(d_centered, p, 0.0).tuning;
    t.etabar_gamma = 0.0;
    const auto g = estimate_gamma_glmm(d, as_beta(d, 0.0), p, fam, t);
    REQUIRE(g.feasible);
    check_slacks(g);
    // Zero satisfies every nonlinear constraint here, so it is optimal.
    const VectorXd resid = p.apply(VectorXd(d.y.array() - 0.5));
    if ((d.X.transpose() * resid / 60.0).cwiseAbs().maxCoeff() <= t.eta_gamma) {
      CHECK(g.coef.isZero(0.0));
    }
    const auto th = estimate_theta_glmm(d, g.coef, as_beta(d, 0.0), p, fam, t);
    REQUIRE(th.feasible);
    check_slacks(th);
    const VectorXd w = fam.variance(linear_predictor(d, g.coef, as_beta(d, 0.0)));
    const auto direct = evaluate_slacks(theta_constraints(d.X, d.z(), p, t, &w), th.coef);
    for (const auto& s : direct) CHECK(s.min_slack >= -1e-8);
  }

  SUBCASE("poisson fixture against a grid over two coefficients") {
    GroupedDataset d;
    d.groups = {3, 3};
    d.q = 1;
    d.W = {MatrixXd::Ones(3, 1), MatrixXd::Ones(3, 1)};
    d.X.resize(6, 2);
    d.X << 0.9, -0.2,
           -0.4, 1.0,
           0.3, 0.6,
           1.1, -0.7,
           -0.6, -0.3,
           0.2, 0.8;
    d.Z = (VectorXd(6) << 0.1, -0.2, 0.3, 0.0, 0.2, -0.1).finished();
    d.y = (VectorXd(6) << 2, 0, 1, 3, 0, 1).finished();
    const ExponentialFamily fam(ExponentialFamily::Name::PoissonLog);
    const MatrixXd m = MatrixXd::Constant(1, 1, 0.3);
    const auto p = build_proxy(d, ProxySpec::matrix(m));
    TuningParams t;
    t.eta_gamma = 0.12;
    t.etabar_gamma = 0.05;
    t.mu_gamma = 1.5;
    const auto r = estimate_gamma_glmm(d, as_beta(d, 0.0), p, fam, t);
    REQUIRE(r.feasible);
    CHECK(r.converged);
    check_slacks(r, 1e-7);

    const MatrixXd pd = oracle::dense_proxy(d.W, m);
    auto feasible = [&](const VectorXd& c) {
      const VectorXd mu = (d.X * c).array().exp();
      const VectorXd res = pd * (d.y - mu);
      const VectorXd mom = d.y - VectorXd::Ones(6);
      return (d.X.transpose() * res / 6.0).cwiseAbs().maxCoeff() <= t.eta_gamma &&
             mom.dot(res) / 6.0 >= t.etabar_gamma && res.cwiseAbs().maxCoeff() <= t.mu_gamma;
    };
    const auto grid = oracle::grid_min_l1(2, 2.0, 1e-3, feasible);
    REQUIRE(grid);
    CHECK(std::abs(r.l1_norm - *grid) <= 2e-3);
  }
}
