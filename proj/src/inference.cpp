#include "lmminfer/inference.hpp"

#include "lmminfer/errors.hpp"
#include "lmminfer/normal.hpp"
#include "lmminfer/rng.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace lmminfer {

namespace {

constexpr double kTiny = 1e-10;

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
}

int nnz(const VectorXd& v) { return static_cast<int>((v.array() != 0.0).count()); }

// Estimates gamma and theta, widening the tuning when allowed.
TestResult solve_and_test(const GroupedDataset& data, double beta0, const BlockDiagMatrix& proxy, TuningParams t,
                          const PipelineOptions& opts) {
  TestResult out;
  const int budget = opts.auto_relax ? opts.max_relax : 0;
  const VectorXd b = as_beta(data, beta0);

  EstimateResult g = estimate_gamma(data, b, proxy, t);
  while (g.solver_status == SolverStatus::Infeasible && out.gamma_relaxations < budget) {
    t = relax_gamma(t);
    ++out.gamma_relaxations;
    g = estimate_gamma(data, b, proxy, t);
  }
  require_optimal(g, "gamma");

  EstimateResult th = estimate_theta(data, proxy, t);
  while (th.solver_status == SolverStatus::Infeasible && out.theta_relaxations < budget) {
    t = relax_theta(t);
    ++out.theta_relaxations;
    th = estimate_theta(data, proxy, t);
  }
  require_optimal(th, "theta");

  const StatisticParts s = compute_statistic(data, b, proxy, g.coef, th.coef);
  out.t_stat = s.t_stat;
  out.sigma_hat = s.sigma_hat;
  out.sigma_u_hat = s.sigma_u_hat;
  out.alternative = opts.alternative;
  out.p_value = p_value(s.t_stat, opts.alternative);
  out.beta0 = beta0;
  out.gamma_nnz = nnz(g.coef);
  out.theta_nnz = nnz(th.coef);
  out.gamma = std::move(g);
  out.theta = std::move(th);
  out.tuning = t;
  if (out.gamma_relaxations) out.notes.push_back("gamma constraints relaxed " + std::to_string(out.gamma_relaxations) + "x");
  if (out.theta_relaxations) out.notes.push_back("theta constraints relaxed " + std::to_string(out.theta_relaxations) + "x");
  return out;
}

TuningParams pipeline_tuning(const PreparedData& prep, double beta0, const PipelineOptions& opts) {
  if (opts.tuning) return *opts.tuning;
  return apply_scale(default_tuning(prep.data, prep.proxy, beta0).tuning, opts.scale);
}

}  // namespace

Alternative parse_alternative(std::string_view s) {
  if (s == "two" || s == "two-sided" || s == "two_sided") return Alternative::TwoSided;
  if (s == "greater") return Alternative::Greater;
  if (s == "less") return Alternative::Less;
  throw Error(ErrorCode::InvalidArgument, "unknown alternative '" + std::string(s) + "'");
}

std::string_view to_string(Alternative a) {
  switch (a) {
    case Alternative::TwoSided: return "two";
    case Alternative::Greater: return "greater";
    case Alternative::Less: return "less";
  }
  return "two";
}

double p_value(double t, Alternative alt) {
  if (!std::isfinite(t)) throw Error(ErrorCode::InvalidArgument, "test statistic must be finite");
  switch (alt) {
    case Alternative::TwoSided: return std::min(1.0, 2.0 * normal_ccdf(std::abs(t)));
    case Alternative::Greater: return normal_ccdf(t);
    case Alternative::Less: return normal_cdf(t);
  }
  return 1.0;
}

StatisticParts compute_statistic(const GroupedDataset& data, const VectorXd& beta0, const BlockDiagMatrix& proxy,
                                 const VectorXd& gamma, const VectorXd& theta, int column) {
  if (column < 0 || column >= data.Z.cols()) throw Error(ErrorCode::InvalidArgument, "tested column out of range");
  const double n = data.n();
  const VectorXd pr = proxy.apply(VectorXd(pseudo_response(data, beta0) - data.X * gamma));
  const VectorXd u = data.Z.col(column) - data.X * theta;
  StatisticParts s;
  s.sigma_hat = pr.norm() / std::sqrt(n);
  s.sigma_u_hat = u.norm() / std::sqrt(n);
  if (s.sigma_hat < kTiny) throw Error(ErrorCode::DegenerateVariance, "weighted residual scale is zero");
  if (s.sigma_u_hat < kTiny) throw Error(ErrorCode::DegenerateVariance, "feature residual scale is zero");
  s.numerator = u.dot(pr);
  s.t_stat = s.numerator / (std::sqrt(n) * s.sigma_u_hat * s.sigma_hat);
  return s;
}

TestResult test_statistic(const GroupedDataset& data, double beta0, const BlockDiagMatrix& proxy,
                          const TuningParams& tuning, Alternative alt) {
  PipelineOptions opts;
  opts.alternative = alt;
  return solve_and_test(data, beta0, proxy, tuning, opts);
}

// --- Confidence intervals ---------------------------------------------------

StatisticPath::StatisticPath(const GroupedDataset& data, const BlockDiagMatrix& proxy, const TuningParams& tuning,
                             const CiOptions& opts)
    : data_(data), proxy_(proxy), tuning_(tuning), opts_(opts) {
  theta_ = estimate_theta(data_, proxy_, tuning_);
  require_optimal(theta_, "theta");
}

double StatisticPath::operator()(double beta) {
  TuningParams t = tuning_;
  const VectorXd b = as_beta(data_, beta);
  if (opts_.retune_gamma) {
    const TuningParams g = apply_scale(default_gamma_tuning(data_, proxy_, b), opts_.scale);
    t.eta_gamma = g.eta_gamma;
    t.mu_gamma = g.mu_gamma;
    t.etabar_gamma = g.etabar_gamma;
  }
  const EstimateResult gamma = estimate_gamma(data_, b, proxy_, t);
  require_optimal(gamma, "gamma");
  ++evaluations_;
  return compute_statistic(data_, b, proxy_, gamma.coef, theta_.coef).t_stat;
}

std::pair<double, double> StatisticPath::default_bracket() {
  TuningParams t = tuning_;
  const VectorXd b0 = as_beta(data_, 0.0);
  if (opts_.retune_gamma) {
    const TuningParams g = apply_scale(default_gamma_tuning(data_, proxy_, b0), opts_.scale);
    t.eta_gamma = g.eta_gamma;
    t.mu_gamma = g.mu_gamma;
    t.etabar_gamma = g.etabar_gamma;
  }
  const EstimateResult gamma = estimate_gamma(data_, b0, proxy_, t);
  require_optimal(gamma, "gamma");
  ++evaluations_;
  const StatisticParts p = compute_statistic(data_, b0, proxy_, gamma.coef, theta_.coef);
  // dT/dbeta with gamma and both scales held at their beta = 0 values.
  const double n = data_.n();
  const VectorXd u = data_.z() - data_.X * theta_.coef;
  const double slope = -u.dot(proxy_.apply(VectorXd(data_.z()))) / (std::sqrt(n) * p.sigma_u_hat * p.sigma_hat);
  if (!(std::abs(slope) > 0.0)) throw Error(ErrorCode::DegenerateVariance, "statistic does not depend on beta");
  const double center = -p.t_stat / slope;
  const double half = 8.0 / std::abs(slope);
  return {center - half, center + half};
}

ConfidenceInterval confidence_interval(const GroupedDataset& data, double alpha, const BlockDiagMatrix& proxy,
                                       const TuningParams& tuning, std::pair<double, double> bracket,
                                       const CiOptions& opts) {
  StatisticPath path(data, proxy, tuning, opts);
  return confidence_interval(path, alpha, bracket, opts);
}

ConfidenceInterval confidence_interval(StatisticPath& path, double alpha, std::pair<double, double> bracket,
                                       const CiOptions& opts) {
  check_alpha(alpha);
  auto [lo, hi] = bracket;
  if (!(std::isfinite(lo) && std::isfinite(hi)) || lo > hi) {
    throw Error(ErrorCode::InvalidArgument, "bracket must be finite with lo <= hi");
  }
  if (opts.grid_points < 3) throw Error(ErrorCode::InvalidArgument, "CI grid needs at least 3 points");
  ConfidenceInterval ci;
  ci.alpha = alpha;
  const int start_evals = path.evaluations();
  if (lo == hi) {
    ci.lo = ci.hi = ci.center = lo;
    return ci;
  }
  const double z = normal_quantile(1.0 - alpha / 2.0);
  const int g = opts.grid_points;
  const double width = hi - lo;
  for (int k = 0; k < g; ++k) {
    const double b = lo + width * k / (g - 1);
    ci.grid_beta.push_back(b);
    ci.grid_t.push_back(path(b));
  }
  int c = 0;
  for (int k = 1; k < g; ++k) {
    if (std::abs(ci.grid_t[static_cast<std::size_t>(k)]) < std::abs(ci.grid_t[static_cast<std::size_t>(c)])) c = k;
  }
  ci.center = ci.grid_beta[static_cast<std::size_t>(c)];
  if (std::abs(ci.grid_t[static_cast<std::size_t>(c)]) > z) {
    // T decreases in beta, so a positive statistic puts the interval above the bracket.
    const bool above = ci.grid_t[static_cast<std::size_t>(c)] > 0.0;
    throw Error(ErrorCode::NoSignChange,
                "|T(beta)| exceeds the critical value everywhere on the bracket; one-sided bound: beta " +
                    std::string(above ? "> " : "< ") + std::to_string(above ? hi : lo));
  }

  auto bisect = [&](double outside, double inside) {
    while (std::abs(inside - outside) > opts.rel_tol * width) {
      const double mid = 0.5 * (inside + outside);
      if (std::abs(path(mid)) > z) {
        outside = mid;
      } else {
        inside = mid;
      }
    }
    return 0.5 * (inside + outside);
  };

  std::optional<double> left, right;
  for (int k = c - 1; k >= 0; --k) {
    if (std::abs(ci.grid_t[static_cast<std::size_t>(k)]) > z) {
      left = bisect(ci.grid_beta[static_cast<std::size_t>(k)], ci.grid_beta[static_cast<std::size_t>(k + 1)]);
      break;
    }
  }
  for (int k = c + 1; k < g; ++k) {
    if (std::abs(ci.grid_t[static_cast<std::size_t>(k)]) > z) {
      right = bisect(ci.grid_beta[static_cast<std::size_t>(k)], ci.grid_beta[static_cast<std::size_t>(k - 1)]);
      break;
    }
  }
  ci.evaluations = path.evaluations() - start_evals;
  if (!left && !right) {
    throw Error(ErrorCode::NoSignChange, "no crossing of the critical value inside the bracket");
  }
  if (!left) {
    throw Error(ErrorCode::NoSignChange,
                "lower end not bracketed; one-sided bound: beta <= " + std::to_string(*right));
  }
  if (!right) {
    throw Error(ErrorCode::NoSignChange,
                "upper end not bracketed; one-sided bound: beta >= " + std::to_string(*left));
  }
  ci.lo = *left;
  ci.hi = *right;
  return ci;
}

// --- Power --------------------------------------------------------------------

void PowerQuery::validate() const {
  check_alpha(alpha);
  if (!(trace_proxy > 0.0) || !(trace_sandwich > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "power traces must be positive");
  }
  if (!(sigma_u > 0.0) || !(sigma_eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "scales must be positive");
  if (!std::isfinite(h)) throw Error(ErrorCode::InvalidArgument, "h must be finite");
}

double power_slope(const PowerQuery& q) {
  q.validate();
  return (q.sigma_u / q.sigma_eps) * q.trace_proxy / std::sqrt(q.trace_sandwich);
}

double power_drift(const PowerQuery& q) { return q.h * power_slope(q); }

double power_curve(const PowerQuery& q) {
  const double d = power_drift(q);
  const double z = normal_quantile(1.0 - q.alpha / 2.0);
  return normal_ccdf(z - d) + normal_cdf(-z - d);
}

PowerTraces power_traces(const GroupedDataset& data, const BlockDiagMatrix& proxy, const RandomEffectSpec& re) {
  if (!proxy.matches(data)) throw Error(ErrorCode::LayoutMismatch, "proxy blocks do not match the groups");
  const double n = data.n();
  const BlockDiagMatrix cov = true_covariance(data, re);
  PowerTraces t;
  t.trace_proxy = block_trace(proxy) / n;
  t.trace_sandwich = block_triple_trace(proxy, cov, proxy) / n;
  t.trace_precision = block_trace(true_precision(data, re)) / n;
  return t;
}

HalfWidth ci_halfwidth(double alpha, double slope, int n) {
  check_alpha(alpha);
  if (!(slope > 0.0) || !std::isfinite(slope)) throw Error(ErrorCode::InvalidArgument, "slope must be positive");
  if (n <= 0) throw Error(ErrorCode::InvalidArgument, "n must be positive");
  const double z = normal_quantile(1.0 - alpha / 2.0);
  auto f = [&](double h) { return 2.0 * normal_cdf(z - slope * h) - (1.0 - alpha); };
  double a = 0.0, b = 1.0;
  while (f(b) > 0.0) b *= 2.0;
  for (int it = 0; it < 200 && (b - a) > 1e-14 * std::max(1.0, b); ++it) {
    const double m = 0.5 * (a + b);
    if (f(m) > 0.0) {
      a = m;
    } else {
      b = m;
    }
  }
  HalfWidth out;
  out.h_alpha = 0.5 * (a + b);
  out.half_width = std::abs(out.h_alpha) / std::sqrt(static_cast<double>(n));
  out.residual = std::abs(f(out.h_alpha));
  return out;
}

HalfWidth ci_halfwidth(const PowerQuery& q, int n) { return ci_halfwidth(q.alpha, power_slope(q), n); }

// --- Random effects -------------------------------------------------------------

namespace {

std::vector<VectorXd> predict_with(const GroupedDataset& data, const VectorXd& gamma, const VectorXd& beta0,
                                   const MatrixXd& penalty) {
  data.validate();
  const VectorXd r = pseudo_response(data, beta0) - data.X * gamma;
  const auto off = data.offsets();
  std::vector<VectorXd> out;
  for (int g = 0; g < data.num_groups(); ++g) {
    const MatrixXd& w = data.W[static_cast<std::size_t>(g)];
    const MatrixXd e = w.transpose() * w + penalty;
    Eigen::LDLT<MatrixXd> ldlt(e);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-14 * std::max(1.0, ldlt.vectorD().cwiseAbs().maxCoeff())) {
      throw Error(ErrorCode::SingularBlock, "random-effect system is singular in group " + std::to_string(g));
    }
    out.push_back(ldlt.solve(w.transpose() * r.segment(off[static_cast<std::size_t>(g)], w.rows())));
  }
  return out;
}

}  // namespace

std::vector<VectorXd> predict_random_effects(const GroupedDataset& data, const VectorXd& gamma,
                                             const VectorXd& beta0, const ProxySpec& proxy) {
  const MatrixXd m = proxy.resolve(data.q, data.n());
  Eigen::FullPivLU<MatrixXd> lu(m);
  if (m.size() == 0 || lu.rank() < m.rows()) {
    throw Error(ErrorCode::ProxyNotInvertible, "proxy block M is singular");
  }
  return predict_with(data, gamma, beta0, lu.inverse());
}

std::vector<VectorXd> predict_random_effects(const GroupedDataset& data, const VectorXd& gamma,
                                             const VectorXd& beta0, const RandomEffectSpec& re) {
  re.validate();
  return predict_with(data, gamma, beta0, re.sigma_eps_sq * re.psi.inverse());
}

// --- Multivariate max-test --------------------------------------------------------

double bootstrap_quantile(std::vector<double> draws, double level) {
  if (draws.empty()) throw Error(ErrorCode::InvalidArgument, "no bootstrap draws");
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::InvalidArgument, "quantile level must be in (0, 1)");
  std::sort(draws.begin(), draws.end());
  const double b = static_cast<double>(draws.size());
  auto k = static_cast<std::size_t>(std::ceil(level * b - 1e-9));
  k = std::clamp<std::size_t>(k, 1, draws.size());
  return draws[k - 1];
}

BootstrapResult multivariate_test(const GroupedDataset& data, const VectorXd& beta0, const BlockDiagMatrix& proxy,
                                  const TuningParams& gamma_tuning, const std::vector<TuningParams>& theta_tuning,
                                  const MultivariateOptions& opts) {
  check_alpha(opts.alpha);
  if (opts.reps < 100) throw Error(ErrorCode::InvalidArgument, "bootstrap needs at least 100 draws");
  const int d = static_cast<int>(data.Z.cols());
  if (d < 1) throw Error(ErrorCode::InvalidArgument, "no tested coordinates");
  if (static_cast<int>(theta_tuning.size()) != d) {
    throw Error(ErrorCode::InvalidArgument, "one theta tuning per tested coordinate is required");
  }
  const int n = data.n();
  const double sn = std::sqrt(static_cast<double>(n));

  const EstimateResult g = estimate_gamma(data, beta0, proxy, gamma_tuning);
  require_optimal(g, "gamma");
  const VectorXd pr = proxy.apply(VectorXd(pseudo_response(data, beta0) - data.X * g.coef));
  const double sigma = pr.norm() / sn;
  if (sigma < kTiny) throw Error(ErrorCode::DegenerateVariance, "weighted residual scale is zero");

  BootstrapResult out;
  out.alpha = opts.alpha;
  out.reps = opts.reps;
  out.seed = opts.seed;
  out.sigma_hat = sigma;

  MatrixXd terms(n, d);   // T_ij
  for (int j = 0; j < d; ++j) {
    const EstimateResult th = estimate_theta(data, proxy, theta_tuning[static_cast<std::size_t>(j)], j);
    require_optimal(th, "theta[" + std::to_string(j) + "]");
    const VectorXd u = data.Z.col(j) - data.X * th.coef;
    const double su = u.norm() / sn;
    if (su < kTiny) throw Error(ErrorCode::DegenerateVariance, "feature residual scale is zero");
    terms.col(j) = u.cwiseProduct(pr) / (su * sigma);
    CoordinateStat c;
    c.t_stat = terms.col(j).sum() / sn;
    c.p_value = p_value(c.t_stat, Alternative::TwoSided);
    c.sigma_u_hat = su;
    c.theta_nnz = nnz(th.coef);
    out.per_coordinate.push_back(c);
    out.t_max = std::max(out.t_max, std::abs(c.t_stat));
  }

  // Centered terms T_ij - n^-1/2 T_nj.
  MatrixXd centered = terms;
  for (int j = 0; j < d; ++j) centered.col(j).array() -= out.per_coordinate[static_cast<std::size_t>(j)].t_stat / sn;

  out.draws.resize(static_cast<std::size_t>(opts.reps));
  VectorXd xi(n);
  for (int b = 0; b < opts.reps; ++b) {
    if (opts.multipliers) {
      for (int i = 0; i < n; ++i) xi(i) = opts.multipliers(b, i);
    } else {
      Rng rng = make_rng(opts.seed, static_cast<std::uint64_t>(b));
      std::normal_distribution<double> nd;
      for (int i = 0; i < n; ++i) xi(i) = nd(rng);
    }
    const VectorXd tb = centered.transpose() * xi / sn;
    out.draws[static_cast<std::size_t>(b)] = tb.cwiseAbs().maxCoeff();
  }

  out.quantile = bootstrap_quantile(out.draws, 1.0 - opts.alpha);
  out.reject = out.t_max > out.quantile;
  int above = 0;
  for (double v : out.draws) above += v > out.t_max;
  out.p_value = static_cast<double>(above) / opts.reps;
  return out;
}

// --- GLMM -----------------------------------------------------------------------------

TestResult glmm_test(const GroupedDataset& data, const VectorXd& beta0, const ExponentialFamily& family,
                     const BlockDiagMatrix& proxy, const TuningParams& tuning, Alternative alt, int column,
                     const GlmmOptions& opts) {
  if (column < 0 || column >= data.Z.cols()) throw Error(ErrorCode::InvalidArgument, "tested column out of range");
  family.check_response(data.y);
  EstimateResult g = estimate_gamma_glmm(data, beta0, proxy, family, tuning, opts);
  require_optimal(g, "gamma");
  EstimateResult th = estimate_theta_glmm(data, g.coef, beta0, proxy, family, tuning, column);
  require_optimal(th, "theta");

  const double n = data.n();
  const VectorXd eta = linear_predictor(data, g.coef, beta0);
  const VectorXd pr = proxy.apply(VectorXd(data.y - family.mean(eta)));
  const VectorXd w = family.variance(eta);
  const VectorXd u = data.Z.col(column) - data.X * th.coef;

  TestResult out;
  out.sigma_hat = pr.norm() / std::sqrt(n);
  const double wsum = opts.normalize_weights ? w.sum() : n;
  if (!(wsum > kTiny)) throw Error(ErrorCode::DegenerateVariance, "variance weights vanish");
  out.sigma_u_hat = std::sqrt(w.dot(u.cwiseProduct(u)) / wsum);
  if (out.sigma_hat < kTiny || out.sigma_u_hat < kTiny) {
    throw Error(ErrorCode::DegenerateVariance, "degenerate residual scale in the GLMM statistic");
  }
  out.t_stat = u.dot(pr) / (std::sqrt(n) * out.sigma_u_hat * out.sigma_hat);
  out.p_value = p_value(out.t_stat, alt);
  out.alternative = alt;
  out.beta0 = beta0(column);
  out.gamma_nnz = nnz(g.coef);
  out.theta_nnz = nnz(th.coef);
  if (!g.converged) out.notes.push_back("gamma linearization stopped before convergence");
  out.gamma = std::move(g);
  out.theta = std::move(th);
  out.tuning = tuning;
  return out;
}

// --- Proxy refinement ---------------------------------------------------------------

double refine_objective(const GroupedDataset& data, const VectorXd& resid, const std::vector<int>& support,
                        double sigma_sq, const VectorXd& psi_diag) {
  const auto off = data.offsets();
  const int k = static_cast<int>(support.size());
  MatrixXd xs(data.n(), k);
  for (int j = 0; j < k; ++j) xs.col(j) = data.X.col(support[static_cast<std::size_t>(j)]);

  double quad = 0.0, logdet = 0.0;
  MatrixXd info = MatrixXd::Zero(k, k);
  for (int g = 0; g < data.num_groups(); ++g) {
    const MatrixXd& w = data.W[static_cast<std::size_t>(g)];
    const int ni = static_cast<int>(w.rows());
    const int o = off[static_cast<std::size_t>(g)];
    const MatrixXd cov =
        sigma_sq * MatrixXd::Identity(ni, ni) + w * psi_diag.asDiagonal() * w.transpose();
    Eigen::LLT<MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    const auto r = resid.segment(o, ni);
    quad += r.dot(llt.solve(r));
    logdet += 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    if (k > 0) {
      const MatrixXd xg = xs.middleRows(o, ni);
      info.noalias() += xg.transpose() * llt.solve(xg);
    }
  }
  double reml = 0.0;
  if (k > 0) {
    Eigen::LLT<MatrixXd> li(info);
    if (li.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    reml = 2.0 * li.matrixLLT().diagonal().array().log().sum();
  }
  return 0.5 * quad + 0.5 * logdet + 0.5 * reml;
}

RefineResult refine_proxy(const GroupedDataset& data, const VectorXd& beta0, const VectorXd& gamma_hat,
                          const RefineOptions& opts) {
  data.validate();
  const int n = data.n();
  const int q = data.q;
  const VectorXd resid = pseudo_response(data, beta0) - data.X * gamma_hat;
  const double s2 = resid.squaredNorm() / n;
  if (s2 < kTiny * kTiny) throw Error(ErrorCode::DegenerateVariance, "zero residual in proxy refinement");

  std::vector<int> support;
  for (int j = 0; j < data.num_nuisance(); ++j) {
    if (data.num_nuisance() <= n || gamma_hat(j) != 0.0) support.push_back(j);
  }
  if (static_cast<int>(support.size()) >= n) support.resize(static_cast<std::size_t>(n - 1));

  // x = (log sigma^2, log psi_1, ..., log psi_q)
  const double floor_log = std::log(s2) - 30.0;
  VectorXd x(q + 1);
  x(0) = std::log(0.6 * s2);
  x.tail(q).setConstant(std::log(0.4 * s2 / q));

  RefineResult out;
  auto eval = [&](const VectorXd& p) {
    ++out.evaluations;
    return refine_objective(data, resid, support, std::exp(p(0)), p.tail(q).array().exp().matrix());
  };
  double best = eval(x);
  out.objective_init = best;

  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double width = 4.0;
  while (out.evaluations < opts.max_evaluations) {
    const double before = best;
    for (int c = 0; c <= q && out.evaluations < opts.max_evaluations; ++c) {
      double a = std::max(x(c) - width, floor_log);
      double b = x(c) + width;
      VectorXd p = x;
      p(c) = b - phi * (b - a);
      double fc = eval(p);
      const double xc_init = p(c);
      p(c) = a + phi * (b - a);
      double fd = eval(p);
      double c1 = xc_init, d1 = p(c);
      while ((b - a) > opts.rel_tol * (1.0 + std::abs(x(c))) && out.evaluations < opts.max_evaluations) {
        if (fc < fd) {
          b = d1;
          d1 = c1;
          fd = fc;
          c1 = b - phi * (b - a);
          p(c) = c1;
          fc = eval(p);
        } else {
          a = c1;
          c1 = d1;
          fc = fd;
          d1 = a + phi * (b - a);
          p(c) = d1;
          fd = eval(p);
        }
      }
      const double cand = fc < fd ? c1 : d1;
      const double fcand = std::min(fc, fd);
      if (fcand < best) {
        best = fcand;
        x(c) = cand;
      }
    }
    width = std::max(0.5 * width, 0.05);
    if (before - best <= opts.rel_tol * (1.0 + std::abs(best)) && width <= 0.5) {
      out.converged = true;
      break;
    }
  }

  out.objective = best;
  out.support_size = static_cast<int>(support.size());
  out.re.sigma_eps_sq = std::exp(x(0));
  out.re.psi = x.tail(q).array().exp().matrix().asDiagonal();
  out.precision = true_precision(data, out.re);
  const double sig2 = out.precision.apply(resid).squaredNorm() / n;
  out.sigma_eps_sq_hat = n * sig2 / block_trace(out.precision);
  return out;
}

// --- End-to-end pipeline -------------------------------------------------------------

ProxyChoice parse_proxy_choice(std::string_view s) {
  if (s == "default") return ProxyChoice::Default;
  if (s == "logn") return ProxyChoice::LogN;
  if (s == "identity") return ProxyChoice::Identity;
  if (s == "zero") return ProxyChoice::Zero;
  throw Error(ErrorCode::InvalidArgument, "unknown proxy '" + std::string(s) + "'");
}

std::string_view to_string(ProxyChoice c) {
  switch (c) {
    case ProxyChoice::Default: return "default";
    case ProxyChoice::LogN: return "logn";
    case ProxyChoice::Identity: return "identity";
    case ProxyChoice::Zero: return "zero";
  }
  return "default";
}

ProxySpec proxy_spec_for(ProxyChoice c, int q) {
  switch (c) {
    case ProxyChoice::Default: return ProxySpec::scaled_identity(q, 2.0 / (3.0 * q));
    case ProxyChoice::LogN: return ProxySpec::log_n_identity();
    case ProxyChoice::Identity: return ProxySpec::scaled_identity(q, 1.0);
    case ProxyChoice::Zero: return ProxySpec::zero();
  }
  return ProxySpec::zero();
}

PreparedData prepare(const GroupedDataset& raw, ProxyChoice choice) {
  raw.validate();
  PreparedData p;
  StandardizeResult s = standardize_columns(raw);
  p.data = std::move(s.data);
  p.x_scale = std::move(s.scale);
  p.proxy_spec = proxy_spec_for(choice, raw.q);
  p.proxy = build_proxy(p.data, p.proxy_spec);
  return p;
}

TestResult run_test_prepared(const PreparedData& prep, double beta0, const PipelineOptions& opts) {
  TestResult r = solve_and_test(prep.data, beta0, prep.proxy, pipeline_tuning(prep, beta0, opts), opts);
  r.proxy = prep.proxy_spec.describe();
  return r;
}

TestResult run_test(const GroupedDataset& raw, double beta0, const PipelineOptions& opts) {
  return run_test_prepared(prepare(raw, opts.proxy), beta0, opts);
}

TestResult run_glmm_test(const GroupedDataset& raw, double beta0, const ExponentialFamily& family,
                         const PipelineOptions& opts) {
  if (family.name() == ExponentialFamily::Name::Gaussian) return run_test(raw, beta0, opts);
  family.check_response(raw.y);
  const PreparedData prep = prepare(raw, opts.proxy);
  const VectorXd b0 = as_beta(prep.data, beta0);
  // Tune on the working residual Y - b'(Z beta0).
  GroupedDataset working = prep.data;
  working.y = prep.data.y - family.mean(VectorXd(prep.data.Z * b0));
  const TuningParams t = opts.tuning ? *opts.tuning
                                     : apply_scale(default_tuning(working, prep.proxy, 0.0).tuning, opts.scale);
  TestResult r = glmm_test(prep.data, b0, family, prep.proxy, t, opts.alternative);
  r.proxy = prep.proxy_spec.describe();
  return r;
}

CiReport run_ci(const GroupedDataset& raw, double alpha, const PipelineOptions& opts,
                std::optional<std::pair<double, double>> bracket, const CiOptions& ci_opts) {
  const PreparedData prep = prepare(raw, opts.proxy);
  CiOptions co = ci_opts;
  co.scale = opts.scale;
  if (opts.tuning) co.retune_gamma = false;
  const TuningParams t = pipeline_tuning(prep, 0.0, opts);
  StatisticPath path(prep.data, prep.proxy, t, co);
  CiReport rep;
  rep.theta_tuning = t;
  rep.bracket = bracket ? *bracket : path.default_bracket();
  rep.ci = confidence_interval(path, alpha, rep.bracket, co);
  return rep;
}

TestResult run_refined_test(const GroupedDataset& raw, double beta0, const PipelineOptions& opts,
                            RefineResult* refined) {
  const PreparedData prep = prepare(raw, opts.proxy);
  const TestResult first = run_test_prepared(prep, beta0, opts);
  const RefineResult rr = refine_proxy(prep.data, as_beta(prep.data, beta0), first.gamma.coef);
  TuningParams t = opts.tuning ? *opts.tuning
                               : apply_scale(default_tuning(prep.data, rr.precision, beta0).tuning, opts.scale);
  TestResult out = solve_and_test(prep.data, beta0, rr.precision, t, opts);
  out.proxy = "refined P (sigma^2=" + std::to_string(rr.re.sigma_eps_sq) + ")";
  out.notes.push_back("experimental: weighting matrix refitted by restricted likelihood");
  if (!rr.converged) out.notes.push_back("proxy refinement hit the evaluation cap");
  if (refined) *refined = rr;
  return out;
}

}  // namespace lmminfer
