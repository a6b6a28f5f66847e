#include "lmminfer/dantzig.hpp"

#include "lmminfer/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace lmminfer {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double soft(double z, double lam) {
  if (z > lam) return z - lam;
  if (z < -lam) return z + lam;
  return 0.0;
}

// Coordinate descent for (1/2n)||v - X b||^2 + lam ||b||_1, warm started from
// b with residual r = v - X b kept in sync.
void lasso_cd(const MatrixXd& x, const VectorXd& col_sq, double lam, double tol, VectorXd& b, VectorXd& r) {
  const int n = static_cast<int>(x.rows());
  const int p = static_cast<int>(x.cols());
  std::vector<char> active(static_cast<std::size_t>(p), 0);
  for (int j = 0; j < p; ++j) active[static_cast<std::size_t>(j)] = b(j) != 0.0;

  auto update = [&](int j) {
    if (col_sq(j) <= 0.0) return 0.0;
    const double z = x.col(j).dot(r) / n + col_sq(j) * b(j);
    const double bj = soft(z, lam) / col_sq(j);
    const double d = bj - b(j);
    if (d != 0.0) {
      r.noalias() -= d * x.col(j);
      b(j) = bj;
    }
    return std::abs(d) * std::sqrt(col_sq(j));
  };

  for (int outer = 0; outer < 1000; ++outer) {
    double full = 0.0;
    bool grew = false;
    for (int j = 0; j < p; ++j) {
      const bool was = active[static_cast<std::size_t>(j)];
      full = std::max(full, update(j));
      if (b(j) != 0.0 && !was) {
        active[static_cast<std::size_t>(j)] = 1;
        grew = true;
      }
    }
    if (full < tol && !grew) return;
    for (int inner = 0; inner < 10000; ++inner) {
      double change = 0.0;
      for (int j = 0; j < p; ++j) {
        if (active[static_cast<std::size_t>(j)]) change = std::max(change, update(j));
      }
      if (change < tol) break;
    }
  }
}

void append_rows(BoundedLp& lp, int& row, const ConstraintFamily& f) {
  const int k = static_cast<int>(f.coef.rows());
  const int dim = static_cast<int>(f.coef.cols());
  for (int i = 0; i < k; ++i) {
    lp.a.row(row).head(dim) = f.coef.row(i);
    lp.a.row(row).tail(dim) = -f.coef.row(i);
    if (f.kind == ConstraintFamily::Kind::Abs) {
      lp.row_lower(row) = f.offset(i) - f.bound;
      lp.row_upper(row) = f.offset(i) + f.bound;
    } else {
      lp.row_lower(row) = -kInf;
      lp.row_upper(row) = f.offset(i) - f.bound;
    }
    ++row;
  }
}

EstimateResult solve_once(const std::vector<ConstraintFamily>& families, int dim, const SimplexOptions& opts) {
  int rows = 0;
  double scale = 1.0;
  for (const auto& f : families) {
    if (f.coef.cols() != dim || f.coef.rows() != f.offset.size()) {
      throw Error(ErrorCode::InvalidArgument, "constraint family '" + f.name + "' has mismatched shape");
    }
    if (!std::isfinite(f.bound) || f.bound < 0.0) {
      if (f.kind == ConstraintFamily::Kind::Abs || !std::isfinite(f.bound)) {
        throw Error(ErrorCode::InvalidArgument, "constraint family '" + f.name + "' has an invalid bound");
      }
    }
    rows += static_cast<int>(f.coef.rows());
    if (f.offset.size() > 0) scale = std::max(scale, f.offset.cwiseAbs().maxCoeff() + std::abs(f.bound));
  }

  BoundedLp lp;
  lp.cost = VectorXd::Ones(2 * dim);
  lp.a = MatrixXd::Zero(rows, 2 * dim);
  lp.col_lower = VectorXd::Zero(2 * dim);
  lp.col_upper = VectorXd::Constant(2 * dim, kInf);
  lp.row_lower.resize(rows);
  lp.row_upper.resize(rows);
  int row = 0;
  for (const auto& f : families) append_rows(lp, row, f);

  const LpSolution sol = solve_bounded(lp, opts);
  EstimateResult res;
  res.solver_status = sol.status;
  res.iterations = sol.iterations;
  if (sol.status == SolverStatus::Optimal && sol.max_violation > 1e-8 * scale) {
    res.solver_status = SolverStatus::Infeasible;
  }
  if (sol.x.size() == 2 * dim) {
    res.coef = sol.x.head(dim) - sol.x.tail(dim);
  } else {
    res.coef = VectorXd::Zero(dim);
  }
  res.l1_norm = res.coef.lpNorm<1>();
  res.constraint_slacks = evaluate_slacks(families, res.coef);
  res.feasible = res.solver_status == SolverStatus::Optimal;
  return res;
}

ConstraintFamily make_family(std::string name, ConstraintFamily::Kind kind, MatrixXd coef, VectorXd offset,
                             double bound) {
  ConstraintFamily f;
  f.name = std::move(name);
  f.kind = kind;
  f.coef = std::move(coef);
  f.offset = std::move(offset);
  f.bound = bound;
  return f;
}

double log_p_of(const GroupedDataset& data) {
  return std::log(static_cast<double>(data.num_nuisance() + data.Z.cols()));
}

}  // namespace

void TuningParams::validate(bool strict) const {
  const double vals[] = {eta_gamma, etabar_gamma, mu_gamma, eta_theta, eta_theta_prime, etabar_theta, mu_theta};
  for (double v : vals) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "tuning parameters must be finite");
    if (strict && v <= 0.0) throw Error(ErrorCode::InvalidArgument, "tuning parameters must be positive");
    if (v < 0.0) throw Error(ErrorCode::InvalidArgument, "tuning parameters must be non-negative");
  }
}

TuningParams apply_scale(const TuningParams& t, const TuningScale& s) {
  if (!(s.eta > 0.0) || !(s.mu > 0.0) || !(s.etabar > 0.0) || !std::isfinite(s.eta) || !std::isfinite(s.mu) ||
      !std::isfinite(s.etabar)) {
    throw Error(ErrorCode::InvalidArgument, "tuning multipliers must be positive and finite");
  }
  TuningParams out = t;
  out.eta_gamma *= s.eta;
  out.eta_theta *= s.eta;
  out.eta_theta_prime *= s.eta;
  out.mu_gamma *= s.mu;
  out.mu_theta *= s.mu;
  out.etabar_gamma *= s.etabar;
  out.etabar_theta *= s.etabar;
  return out;
}

TuningParams relax_gamma(const TuningParams& t) {
  TuningParams out = t;
  out.eta_gamma *= 1.5;
  out.mu_gamma *= 1.5;
  out.etabar_gamma /= 2.0;
  return out;
}

TuningParams relax_theta(const TuningParams& t) {
  TuningParams out = t;
  out.eta_theta *= 1.5;
  out.eta_theta_prime *= 1.5;
  out.mu_theta *= 1.5;
  out.etabar_theta /= 2.0;
  return out;
}

double default_lambda0(int n, int p) {
  if (n <= 0 || p <= 0) throw Error(ErrorCode::InvalidArgument, "lambda0 needs positive n and p");
  return std::sqrt(2.0 * std::log(std::max(p, 2)) / n);
}

ScaledLassoResult scaled_lasso(const MatrixXd& x, const VectorXd& v, double lambda0) {
  const int n = static_cast<int>(x.rows());
  const int p = static_cast<int>(x.cols());
  if (v.size() != n) throw Error(ErrorCode::InvalidArgument, "scaled lasso: response length mismatch");
  if (lambda0 < 0.0) lambda0 = default_lambda0(n, std::max(p, 1));

  ScaledLassoResult res;
  res.coef = VectorXd::Zero(p);
  const double v_scale = v.norm() / std::sqrt(static_cast<double>(n));
  if (v_scale == 0.0 || p == 0) {
    res.sigma_hat = v_scale;
    res.converged = true;
    return res;
  }

  const VectorXd col_sq = x.colwise().squaredNorm().transpose() / n;
  VectorXd r = v;
  double sigma = v_scale;
  const double floor = 1e-12 * v_scale;
  for (int it = 1; it <= 50; ++it) {
    res.iterations = it;
    lasso_cd(x, col_sq, lambda0 * sigma, 1e-9 * v_scale, res.coef, r);
    const double next = std::max(r.norm() / std::sqrt(static_cast<double>(n)), floor);
    const double rel = std::abs(next - sigma) / sigma;
    sigma = next;
    if (rel < 1e-4) {
      res.converged = true;
      break;
    }
  }
  res.sigma_hat = sigma;
  res.df = static_cast<int>((res.coef.array() != 0.0).count());
  return res;
}

VectorXd as_beta(const GroupedDataset& data, double beta0) {
  if (data.Z.cols() != 1) {
    throw Error(ErrorCode::InvalidArgument, "scalar beta0 needs a single tested column");
  }
  return VectorXd::Constant(1, beta0);
}

VectorXd pseudo_response(const GroupedDataset& data, const VectorXd& beta0) {
  if (beta0.size() != data.Z.cols()) {
    throw Error(ErrorCode::InvalidArgument, "beta0 must have one entry per tested column");
  }
  if (!beta0.allFinite()) throw Error(ErrorCode::InvalidArgument, "beta0 must be finite");
  return data.y - data.Z * beta0;
}

double default_etabar_gamma(const VectorXd& v, const BlockDiagMatrix& proxy) {
  return 0.05 * v.dot(proxy.apply(v)) / static_cast<double>(v.size());
}

TuningParams default_gamma_tuning(const GroupedDataset& data, const BlockDiagMatrix& proxy, const VectorXd& beta0,
                                  ScaledLassoResult* init) {
  const int n = data.n();
  const VectorXd v = pseudo_response(data, beta0);
  ScaledLassoResult sl = scaled_lasso(data.X, v);
  const VectorXd resid = v - data.X * sl.coef;
  const double sigma = proxy.apply(resid).norm() / std::sqrt(static_cast<double>(n));
  if (init) *init = sl;
  if (!(sigma >= 1e-10)) {
    throw Error(ErrorCode::DegenerateScale, "weighted residual scale of the initial gamma fit is zero");
  }
  TuningParams t;
  t.eta_gamma = std::sqrt(0.5 * log_p_of(data) / n) * sigma;
  t.mu_gamma = 4.0 * std::sqrt(std::log(static_cast<double>(n))) * sigma;
  t.etabar_gamma = default_etabar_gamma(v, proxy);
  return t;
}

TuningParams default_theta_tuning(const MatrixXd& x, const VectorXd& z, ScaledLassoResult* init) {
  const int n = static_cast<int>(x.rows());
  ScaledLassoResult sl = scaled_lasso(x, z);
  const VectorXd resid = z - x * sl.coef;
  const double sigma = resid.norm() / std::sqrt(static_cast<double>(n));
  if (init) *init = sl;
  if (!(sigma >= 1e-10)) {
    throw Error(ErrorCode::CollinearZ, "tested column is reproduced by the nuisance columns");
  }
  const double log_p = std::log(static_cast<double>(x.cols() + 1));
  TuningParams t;
  t.eta_theta = std::sqrt(0.5 * log_p / n) * sigma;
  t.eta_theta_prime = t.eta_theta;
  t.mu_theta = 4.0 * std::sqrt(std::log(static_cast<double>(n))) * sigma;
  t.etabar_theta = 0.05 * z.squaredNorm() / n;
  return t;
}

TuningDefaults default_tuning(const GroupedDataset& data, const BlockDiagMatrix& proxy, double beta0) {
  return default_tuning(data, proxy, as_beta(data, beta0), 0);
}

TuningDefaults default_tuning(const GroupedDataset& data, const BlockDiagMatrix& proxy, const VectorXd& beta0,
                              int column) {
  if (column < 0 || column >= data.Z.cols()) throw Error(ErrorCode::InvalidArgument, "tested column out of range");
  if (!proxy.matches(data)) throw Error(ErrorCode::LayoutMismatch, "proxy blocks do not match the groups");
  TuningDefaults out;
  const TuningParams g = default_gamma_tuning(data, proxy, beta0, &out.gamma_init);
  const TuningParams th = default_theta_tuning(data.X, data.Z.col(column), &out.theta_init);
  out.tuning = g;
  out.tuning.eta_theta = th.eta_theta;
  out.tuning.eta_theta_prime = th.eta_theta_prime;
  out.tuning.mu_theta = th.mu_theta;
  out.tuning.etabar_theta = th.etabar_theta;

  const int n = data.n();
  const VectorXd resid = pseudo_response(data, beta0) - data.X * out.gamma_init.coef;
  out.df_overflow = out.gamma_init.df >= n;
  const double denom = std::max(1, n - out.gamma_init.df);
  out.sigma_eps_sq_first = resid.squaredNorm() / denom;
  if (!(out.sigma_eps_sq_first > 0.0)) {
    throw Error(ErrorCode::DegenerateScale, "initial residual variance is zero");
  }
  // psi_init = 0.4 s^2 / q I and sigma_init^2 = 0.6 s^2, so M = (2 / (3q)) I.
  const double psi = 0.4 * out.sigma_eps_sq_first / data.q;
  const double sig = 0.6 * out.sigma_eps_sq_first;
  out.proxy = ProxySpec::scaled_identity(data.q, psi / sig);
  return out;
}

std::vector<FamilySlack> evaluate_slacks(const std::vector<ConstraintFamily>& families, const VectorXd& coef) {
  std::vector<FamilySlack> out;
  out.reserve(families.size());
  for (const auto& f : families) {
    FamilySlack s;
    s.name = f.name;
    const VectorXd resid = f.offset - f.coef * coef;
    if (f.kind == ConstraintFamily::Kind::Abs) {
      s.slacks = f.bound - resid.array().abs();
    } else {
      s.slacks = resid.array() - f.bound;
    }
    s.min_slack = s.slacks.size() ? s.slacks.minCoeff() : kInf;
    out.push_back(std::move(s));
  }
  return out;
}

EstimateResult solve_constrained_l1(const std::vector<ConstraintFamily>& families, int dim,
                                    const SimplexOptions& opts) {
  if (dim < 0) throw Error(ErrorCode::InvalidArgument, "negative dimension");
  EstimateResult res = solve_once(families, dim, opts);
  if (res.solver_status != SolverStatus::Infeasible || families.size() < 2) return res;

  // Name the families whose removal alone restores feasibility.
  for (std::size_t drop = 0; drop < families.size(); ++drop) {
    std::vector<ConstraintFamily> rest;
    for (std::size_t i = 0; i < families.size(); ++i) {
      if (i != drop) rest.push_back(families[i]);
    }
    if (solve_once(rest, dim, opts).solver_status == SolverStatus::Optimal) {
      res.binding_families.push_back(families[drop].name);
    }
  }
  if (res.binding_families.empty()) {
    for (const auto& f : families) res.binding_families.push_back(f.name);
  }
  return res;
}

void require_optimal(const EstimateResult& res, const std::string& what) {
  switch (res.solver_status) {
    case SolverStatus::Optimal: return;
    case SolverStatus::Infeasible: {
      std::string msg = what + " constraints are infeasible";
      if (!res.binding_families.empty()) {
        msg += " (binding:";
        for (const auto& b : res.binding_families) msg += " " + b;
        msg += ")";
      }
      throw Error(ErrorCode::Infeasible, msg);
    }
    case SolverStatus::IterationLimit:
      throw Error(ErrorCode::IterationLimit, what + ": simplex iteration limit reached");
    case SolverStatus::Unbounded:
      throw Error(ErrorCode::Unbounded, what + ": linear program is unbounded");
  }
}

std::vector<ConstraintFamily> gamma_constraints(const GroupedDataset& data, const VectorXd& beta0,
                                                const BlockDiagMatrix& proxy, const TuningParams& t) {
  if (!proxy.matches(data)) throw Error(ErrorCode::LayoutMismatch, "proxy blocks do not match the groups");
  const double n = data.n();
  const VectorXd v = pseudo_response(data, beta0);
  const MatrixXd px = proxy.apply(data.X);
  const VectorXd pv = proxy.apply(v);
  std::vector<ConstraintFamily> f;
  f.push_back(make_family("score", ConstraintFamily::Kind::Abs, data.X.transpose() * px / n,
                          data.X.transpose() * pv / n, t.eta_gamma));
  f.push_back(make_family("variance", ConstraintFamily::Kind::Lower, (v.transpose() * px / n),
                          VectorXd::Constant(1, v.dot(pv) / n), t.etabar_gamma));
  f.push_back(make_family("residual", ConstraintFamily::Kind::Abs, px, pv, t.mu_gamma));
  return f;
}

std::vector<ConstraintFamily> theta_constraints(const MatrixXd& x, const VectorXd& z, const BlockDiagMatrix& proxy,
                                                const TuningParams& t, const VectorXd* weights) {
  if (proxy.dim() != x.rows() || z.size() != x.rows()) {
    throw Error(ErrorCode::LayoutMismatch, "theta constraints: dimension mismatch");
  }
  const double n = static_cast<double>(x.rows());
  MatrixXd xw = x;
  if (weights) {
    if (weights->size() != x.rows()) throw Error(ErrorCode::InvalidArgument, "weight length mismatch");
    xw = weights->asDiagonal() * x;
  }
  const MatrixXd px = proxy.apply(x);
  const VectorXd pz = proxy.apply(VectorXd(z));
  std::vector<ConstraintFamily> f;
  f.push_back(make_family("score", ConstraintFamily::Kind::Abs, xw.transpose() * x / n, xw.transpose() * z / n,
                          t.eta_theta));
  f.push_back(make_family("proxy_score", ConstraintFamily::Kind::Abs, xw.transpose() * px / n,
                          xw.transpose() * pz / n, t.eta_theta_prime));
  VectorXd zw = z;
  if (weights) zw = weights->cwiseProduct(z);
  f.push_back(make_family("variance", ConstraintFamily::Kind::Lower, zw.transpose() * x / n,
                          VectorXd::Constant(1, zw.dot(z) / n), t.etabar_theta));
  f.push_back(make_family("residual", ConstraintFamily::Kind::Abs, x, z, t.mu_theta));
  return f;
}

EstimateResult estimate_gamma(const GroupedDataset& data, double beta0, const BlockDiagMatrix& proxy,
                              const TuningParams& tuning) {
  return estimate_gamma(data, as_beta(data, beta0), proxy, tuning);
}

EstimateResult estimate_gamma(const GroupedDataset& data, const VectorXd& beta0, const BlockDiagMatrix& proxy,
                              const TuningParams& tuning) {
  tuning.validate(false);
  const auto fam = gamma_constraints(data, beta0, proxy, tuning);
  EstimateResult res = solve_constrained_l1(fam, data.num_nuisance());
  if (res.feasible) {
    // Cauchy-Schwarz on the variance row: n^-1 ||P~ r||^2 >= etabar^2 / (n^-1 V^T V).
    const double n = data.n();
    const VectorXd v = pseudo_response(data, beta0);
    const double lhs = proxy.apply(VectorXd(v - data.X * res.coef)).squaredNorm() / n;
    const double vv = v.squaredNorm() / n;
    const double eb = std::max(0.0, tuning.etabar_gamma - 1e-7 * (1.0 + std::abs(tuning.etabar_gamma)));
    if (vv > 0.0 && lhs < eb * eb / vv * (1.0 - 1e-6)) {
      throw std::logic_error("weighted residual variance below its guaranteed lower bound");
    }
  }
  return res;
}

EstimateResult estimate_theta(const GroupedDataset& data, const BlockDiagMatrix& proxy, const TuningParams& tuning,
                              int column) {
  if (column < 0 || column >= data.Z.cols()) throw Error(ErrorCode::InvalidArgument, "tested column out of range");
  tuning.validate(false);
  const VectorXd z = data.Z.col(column);
  EstimateResult res = solve_constrained_l1(theta_constraints(data.X, z, proxy, tuning), data.num_nuisance());
  if (res.feasible) {
    const VectorXd u = z - data.X * res.coef;
    if (u.norm() <= 1e-8 * std::max(1.0, z.norm())) {
      throw Error(ErrorCode::CollinearZ, "tested column is reproduced by the nuisance columns");
    }
  }
  return res;
}

VectorXd linear_predictor(const GroupedDataset& data, const VectorXd& gamma, const VectorXd& beta0) {
  if (gamma.size() != data.num_nuisance()) throw Error(ErrorCode::InvalidArgument, "gamma length mismatch");
  if (beta0.size() != data.Z.cols()) throw Error(ErrorCode::InvalidArgument, "beta0 length mismatch");
  return data.X * gamma + data.Z * beta0;
}

EstimateResult estimate_gamma_glmm(const GroupedDataset& data, const VectorXd& beta0, const BlockDiagMatrix& proxy,
                                   const ExponentialFamily& family, const TuningParams& tuning,
                                   const GlmmOptions& opts) {
  tuning.validate(false);
  if (!proxy.matches(data)) throw Error(ErrorCode::LayoutMismatch, "proxy blocks do not match the groups");
  family.check_response(data.y);
  const double n = data.n();
  const int k = data.num_nuisance();
  const VectorXd zb = data.Z * beta0;
  // Moment vector for the variance row: Y - b'(Z beta0).
  const VectorXd m = data.y - family.mean(zb);

  auto families_at = [&](const VectorXd& g) {
    const VectorXd eta = data.X * g + zb;
    const VectorXd d = family.variance(eta);
    const MatrixXd f = d.asDiagonal() * data.X;
    const VectorXd v_eff = data.y - family.mean(eta) + f * g;
    const MatrixXd pf = proxy.apply(f);
    const VectorXd pv = proxy.apply(v_eff);
    std::vector<ConstraintFamily> fam;
    fam.push_back(make_family("score", ConstraintFamily::Kind::Abs, data.X.transpose() * pf / n,
                              data.X.transpose() * pv / n, tuning.eta_gamma));
    fam.push_back(make_family("variance", ConstraintFamily::Kind::Lower, m.transpose() * pf / n,
                              VectorXd::Constant(1, m.dot(pv) / n), tuning.etabar_gamma));
    fam.push_back(make_family("residual", ConstraintFamily::Kind::Abs, pf, pv, tuning.mu_gamma));
    return fam;
  };

  VectorXd g = VectorXd::Zero(k);
  EstimateResult res;
  res.converged = false;
  double first_l1 = -1.0;
  int total_iter = 0;
  for (int t = 0; t < opts.max_iterations; ++t) {
    EstimateResult step = solve_constrained_l1(families_at(g), k);
    total_iter += step.iterations;
    res.outer_iterations = t + 1;
    if (step.solver_status != SolverStatus::Optimal) {
      step.converged = false;
      step.outer_iterations = t + 1;
      step.iterations = total_iter;
      return step;
    }
    if (first_l1 < 0.0) first_l1 = step.l1_norm;
    if (step.l1_norm > opts.divergence_factor * std::max(first_l1, 1e-8) && t > 0) {
      throw Error(ErrorCode::NotConverged, "linearized gamma iterates diverge");
    }
    const double delta = (step.coef - g).lpNorm<1>();
    g = step.coef;
    if (delta < opts.tol) {
      res.converged = true;
      break;
    }
  }
  const auto final_fam = families_at(g);
  res.coef = g;
  res.l1_norm = g.lpNorm<1>();
  res.constraint_slacks = evaluate_slacks(final_fam, g);
  res.solver_status = SolverStatus::Optimal;
  res.feasible = true;
  res.iterations = total_iter;
  return res;
}

EstimateResult estimate_theta_glmm(const GroupedDataset& data, const VectorXd& gamma_hat, const VectorXd& beta0,
                                   const BlockDiagMatrix& proxy, const ExponentialFamily& family,
                                   const TuningParams& tuning, int column) {
  if (column < 0 || column >= data.Z.cols()) throw Error(ErrorCode::InvalidArgument, "tested column out of range");
  tuning.validate(false);
  const VectorXd w = family.variance(linear_predictor(data, gamma_hat, beta0));
  const VectorXd z = data.Z.col(column);
  EstimateResult res = solve_constrained_l1(theta_constraints(data.X, z, proxy, tuning, &w), data.num_nuisance());
  if (res.feasible) {
    const VectorXd u = z - data.X * res.coef;
    if (u.norm() <= 1e-8 * std::max(1.0, z.norm())) {
      throw Error(ErrorCode::CollinearZ, "tested column is reproduced by the nuisance columns");
    }
  }
  return res;
}

}  // namespace lmminfer
