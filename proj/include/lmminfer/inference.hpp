#pragma once

#include "lmminfer/dantzig.hpp"
#include "lmminfer/family.hpp"
#include "lmminfer/model.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lmminfer {

enum class Alternative { TwoSided, Greater, Less };

Alternative parse_alternative(std::string_view s);
std::string_view to_string(Alternative a);

// Two-sided: 2(1 - Phi(|t|)); Greater: 1 - Phi(t); Less: Phi(t).
double p_value(double t, Alternative alt);

struct StatisticParts {
  double t_stat = 0.0;
  double sigma_hat = 0.0;     // n^-1/2 ||P~ (V - X gamma)||
  double sigma_u_hat = 0.0;   // n^-1/2 ||Z - X theta||
  double numerator = 0.0;     // (Z - X theta)^T P~ (V - X gamma)
};

// The standardized statistic for frozen coefficient vectors. Throws
// DegenerateVariance when either scale is below 1e-10.
StatisticParts compute_statistic(const GroupedDataset& data, const VectorXd& beta0, const BlockDiagMatrix& proxy,
                                 const VectorXd& gamma, const VectorXd& theta, int column = 0);

struct TestResult {
  double t_stat = 0.0;
  double sigma_hat = 0.0;
  double sigma_u_hat = 0.0;
  double p_value = 1.0;
  Alternative alternative = Alternative::TwoSided;
  double beta0 = 0.0;
  int gamma_nnz = 0;
  int theta_nnz = 0;
  EstimateResult gamma;
  EstimateResult theta;
  TuningParams tuning;        // values actually used, after any relaxation
  int gamma_relaxations = 0;
  int theta_relaxations = 0;
  std::string proxy;          // description of M
  std::vector<std::string> notes;
};

// Solves both constrained-L1 problems and forms the statistic. Solver
// failures surface as Error(Infeasible / IterationLimit / Unbounded).
TestResult test_statistic(const GroupedDataset& data, double beta0, const BlockDiagMatrix& proxy,
                          const TuningParams& tuning, Alternative alt = Alternative::TwoSided);

// --- Confidence intervals ---------------------------------------------------

struct CiOptions {
  int grid_points = 41;
  double rel_tol = 1e-3;          // bisection stops at rel_tol * bracket width
  bool retune_gamma = true;       // recompute the gamma-side default tuning at each beta
  TuningScale scale;              // applied to retuned gamma parameters
};

struct ConfidenceInterval {
  double lo = 0.0;
  double hi = 0.0;
  double center = 0.0;            // grid argmin of |T(beta)|
  double alpha = 0.05;
  int evaluations = 0;
  std::vector<double> grid_beta;
  std::vector<double> grid_t;
};

// T_n as a function of beta with theta fixed; gamma is re-estimated at
// every call.
class StatisticPath {
 public:
  StatisticPath(const GroupedDataset& data, const BlockDiagMatrix& proxy, const TuningParams& tuning,
                const CiOptions& opts = {});

  double operator()(double beta);
  int evaluations() const { return evaluations_; }
  const EstimateResult& theta() const { return theta_; }

  // beta_hat +/- 8 / |dT/dbeta| from a single evaluation at beta = 0.
  std::pair<double, double> default_bracket();

 private:
  const GroupedDataset& data_;
  const BlockDiagMatrix& proxy_;
  TuningParams tuning_;
  CiOptions opts_;
  EstimateResult theta_;
  int evaluations_ = 0;
};

ConfidenceInterval confidence_interval(const GroupedDataset& data, double alpha, const BlockDiagMatrix& proxy,
                                       const TuningParams& tuning, std::pair<double, double> bracket,
                                       const CiOptions& opts = {});
ConfidenceInterval confidence_interval(StatisticPath& path, double alpha, std::pair<double, double> bracket,
                                       const CiOptions& opts = {});

// --- Power --------------------------------------------------------------------

struct PowerQuery {
  double h = 0.0;
  double alpha = 0.05;
  double sigma_u = 1.0;
  double sigma_eps = 1.0;
  double trace_proxy = 1.0;          // n^-1 tr(P~)
  double trace_sandwich = 1.0;       // n^-1 tr(P~ P^-1 P~)

  void validate() const;
};

// D_n(h) / h.
double power_slope(const PowerQuery& q);
double power_drift(const PowerQuery& q);
double power_curve(const PowerQuery& q);

struct PowerTraces {
  double trace_proxy = 0.0;
  double trace_sandwich = 0.0;
  double trace_precision = 0.0;      // n^-1 tr(P)
};

PowerTraces power_traces(const GroupedDataset& data, const BlockDiagMatrix& proxy, const RandomEffectSpec& re);

struct HalfWidth {
  double h_alpha = 0.0;
  double half_width = 0.0;           // n^-1/2 |h_alpha|
  double residual = 0.0;             // |2 Phi(z - D(h_alpha)) - (1 - alpha)|
};

// Solves 2 Phi(z_{1-alpha/2} - slope * h) = 1 - alpha for h by bisection.
HalfWidth ci_halfwidth(double alpha, double slope, int n);
HalfWidth ci_halfwidth(const PowerQuery& q, int n);

// --- Random effects -------------------------------------------------------------

// b_i = E_i^-1 W_i^T (V_i - X_i gamma) with E_i = W_i^T W_i + M^-1.
std::vector<VectorXd> predict_random_effects(const GroupedDataset& data, const VectorXd& gamma,
                                             const VectorXd& beta0, const ProxySpec& proxy);
// Oracle mode: E_i = W_i^T W_i + sigma^2 psi^-1.
std::vector<VectorXd> predict_random_effects(const GroupedDataset& data, const VectorXd& gamma,
                                             const VectorXd& beta0, const RandomEffectSpec& re);

// --- Multivariate max-test --------------------------------------------------------

struct CoordinateStat {
  double t_stat = 0.0;
  double p_value = 1.0;   // univariate two-sided
  double sigma_u_hat = 0.0;
  int theta_nnz = 0;
};

struct BootstrapResult {
  double t_max = 0.0;
  double quantile = 0.0;
  double p_value = 1.0;
  bool reject = false;
  double alpha = 0.05;
  int reps = 0;
  std::uint64_t seed = 0;
  double sigma_hat = 0.0;
  std::vector<CoordinateStat> per_coordinate;
  std::vector<double> draws;   // T~_n for every bootstrap draw
};

// Multiplier for draw b and observation i; the default draws N(0, 1) from a
// substream keyed by (seed, b).
using MultiplierFn = std::function<double(int draw, int obs)>;

struct MultivariateOptions {
  double alpha = 0.05;
  int reps = 1000;
  std::uint64_t seed = 1;
  MultiplierFn multipliers;   // optional override
};

// Every column of data.Z is a tested coordinate; X holds the rest.
// theta_tuning[j] supplies the theta-side parameters for column j.
BootstrapResult multivariate_test(const GroupedDataset& data, const VectorXd& beta0, const BlockDiagMatrix& proxy,
                                  const TuningParams& gamma_tuning, const std::vector<TuningParams>& theta_tuning,
                                  const MultivariateOptions& opts = {});

// Empirical quantile: order statistic ceil(level * B) of the draws.
double bootstrap_quantile(std::vector<double> draws, double level);

// --- GLMM -----------------------------------------------------------------------------

TestResult glmm_test(const GroupedDataset& data, const VectorXd& beta0, const ExponentialFamily& family,
                     const BlockDiagMatrix& proxy, const TuningParams& tuning,
                     Alternative alt = Alternative::TwoSided, int column = 0, const GlmmOptions& opts = {});

// --- Proxy refinement ---------------------------------------------------------------

struct RefineOptions {
  double rel_tol = 1e-4;
  int max_evaluations = 200;
};

struct RefineResult {
  BlockDiagMatrix precision;         // P-hat
  RandomEffectSpec re;               // fitted (sigma^2, diag psi)
  double sigma_eps_sq_hat = 0.0;     // n sigma_hat^2 / tr(P-hat)
  double objective_init = 0.0;
  double objective = 0.0;
  int evaluations = 0;
  bool converged = false;
  int support_size = 0;              // columns entering the log det term
};

// REML-type criterion over the structured family with covariance
// sigma^2 I + W diag(psi) W^T, evaluated at residual V - X gamma_hat.
double refine_objective(const GroupedDataset& data, const VectorXd& resid, const std::vector<int>& support,
                        double sigma_sq, const VectorXd& psi_diag);

RefineResult refine_proxy(const GroupedDataset& data, const VectorXd& beta0, const VectorXd& gamma_hat,
                          const RefineOptions& opts = {});

// --- End-to-end pipeline -------------------------------------------------------------

enum class ProxyChoice { Default, LogN, Identity, Zero };

ProxyChoice parse_proxy_choice(std::string_view s);
std::string_view to_string(ProxyChoice c);
ProxySpec proxy_spec_for(ProxyChoice c, int q);

struct PipelineOptions {
  Alternative alternative = Alternative::TwoSided;
  ProxyChoice proxy = ProxyChoice::Default;
  TuningScale scale;
  bool auto_relax = false;
  int max_relax = 3;
  std::optional<TuningParams> tuning;   // overrides the default recipe
};

struct PreparedData {
  GroupedDataset data;        // X standardized
  VectorXd x_scale;
  ProxySpec proxy_spec;
  BlockDiagMatrix proxy;
};

PreparedData prepare(const GroupedDataset& raw, ProxyChoice choice);

// Standardize, build the proxy, tune by the default recipe, estimate and test.
TestResult run_test(const GroupedDataset& raw, double beta0, const PipelineOptions& opts = {});
TestResult run_test_prepared(const PreparedData& prep, double beta0, const PipelineOptions& opts = {});

// run_test for a GLMM family; the default tuning is computed on the working
// residual Y - b'(Z beta0). Gaussian falls through to run_test.
TestResult run_glmm_test(const GroupedDataset& raw, double beta0, const ExponentialFamily& family,
                         const PipelineOptions& opts = {});

struct CiReport {
  ConfidenceInterval ci;
  TuningParams theta_tuning;
  std::pair<double, double> bracket;
};

CiReport run_ci(const GroupedDataset& raw, double alpha, const PipelineOptions& opts = {},
                std::optional<std::pair<double, double>> bracket = std::nullopt, const CiOptions& ci_opts = {});

// Steps 1-3 of the refinement scheme: default test, REML refit of P, re-test
// with P-hat as the weighting matrix. Experimental.
TestResult run_refined_test(const GroupedDataset& raw, double beta0, const PipelineOptions& opts = {},
                            RefineResult* refined = nullptr);

}  // namespace lmminfer
