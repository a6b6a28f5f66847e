#pragma once

#include "lmminfer/family.hpp"
#include "lmminfer/lp.hpp"
#include "lmminfer/model.hpp"

#include <string>
#include <vector>

namespace lmminfer {

struct TuningParams {
  double eta_gamma = 0.0;
  double etabar_gamma = 0.0;
  double mu_gamma = 0.0;
  double eta_theta = 0.0;
  double eta_theta_prime = 0.0;
  double etabar_theta = 0.0;
  double mu_theta = 0.0;

  // Throws InvalidArgument unless every value is finite; `strict` also
  // requires them to be strictly positive.
  void validate(bool strict = true) const;
};

// Tuning multipliers: eta covers eta_gamma, eta_theta, eta_theta';
// mu covers mu_gamma, mu_theta; etabar covers both lower bounds.
struct TuningScale {
  double eta = 1.0;
  double mu = 1.0;
  double etabar = 1.0;
};

TuningParams apply_scale(const TuningParams& t, const TuningScale& s);

// One widening step of the infeasibility policy: eta and mu x1.5, etabar / 2.
TuningParams relax_gamma(const TuningParams& t);
TuningParams relax_theta(const TuningParams& t);

struct ScaledLassoResult {
  VectorXd coef;
  double sigma_hat = 0.0;
  int df = 0;
  int iterations = 0;
  bool converged = false;
};

ScaledLassoResult scaled_lasso(const MatrixXd& x, const VectorXd& v, double lambda0 = -1.0);

// sqrt(2 log(p) / n) with p the number of columns.
double default_lambda0(int n, int p);

struct TuningDefaults {
  TuningParams tuning;
  ScaledLassoResult gamma_init;
  ScaledLassoResult theta_init;
  ProxySpec proxy;                 // M = sigma_init^-2 psi_init
  double sigma_eps_sq_first = 0.0; // ||V - X gamma_init||^2 / max(1, n - df)
  bool df_overflow = false;
};

// Residual-scale recipe for both constrained-L1 problems.
TuningDefaults default_tuning(const GroupedDataset& data, const BlockDiagMatrix& proxy, double beta0);
TuningDefaults default_tuning(const GroupedDataset& data, const BlockDiagMatrix& proxy, const VectorXd& beta0,
                              int column = 0);

// Only the gamma side (used when beta0 moves and theta is fixed).
TuningParams default_gamma_tuning(const GroupedDataset& data, const BlockDiagMatrix& proxy,
                                  const VectorXd& beta0, ScaledLassoResult* init = nullptr);

// 0.05 * V^T P~ V / n.
double default_etabar_gamma(const VectorXd& v, const BlockDiagMatrix& proxy);

// V = y - Z beta0; beta0 must have one entry per column of Z.
VectorXd pseudo_response(const GroupedDataset& data, const VectorXd& beta0);
VectorXd as_beta(const GroupedDataset& data, double beta0);

// Only the theta side for tested column `z`.
TuningParams default_theta_tuning(const MatrixXd& x, const VectorXd& z, ScaledLassoResult* init = nullptr);

// A block of constraints on a coefficient vector c, written through the
// residual map c |-> offset - coef * c.
//   Abs:   |offset - coef * c|_inf <= bound
//   Lower: offset - coef * c >= bound (row-wise)
struct ConstraintFamily {
  enum class Kind { Abs, Lower };
  std::string name;
  Kind kind = Kind::Abs;
  MatrixXd coef;
  VectorXd offset;
  double bound = 0.0;
};

struct FamilySlack {
  std::string name;
  double min_slack = 0.0;
  VectorXd slacks;
};

struct EstimateResult {
  VectorXd coef;
  double l1_norm = 0.0;
  std::vector<FamilySlack> constraint_slacks;
  bool feasible = false;
  SolverStatus solver_status = SolverStatus::Infeasible;
  int iterations = 0;
  std::vector<std::string> binding_families;  // filled when infeasible
  bool converged = true;                      // GLMM outer iterations
  int outer_iterations = 0;
};

std::vector<FamilySlack> evaluate_slacks(const std::vector<ConstraintFamily>& families, const VectorXd& coef);

// argmin ||c||_1 subject to the families, as a single LP. Never throws on
// solver outcomes; inspect `solver_status`.
EstimateResult solve_constrained_l1(const std::vector<ConstraintFamily>& families, int dim,
                                    const SimplexOptions& opts = {});

// Throws Error(Infeasible / IterationLimit / Unbounded) when `res` is not Optimal.
void require_optimal(const EstimateResult& res, const std::string& what);

std::vector<ConstraintFamily> gamma_constraints(const GroupedDataset& data, const VectorXd& beta0,
                                                const BlockDiagMatrix& proxy, const TuningParams& t);
std::vector<ConstraintFamily> theta_constraints(const MatrixXd& x, const VectorXd& z,
                                                const BlockDiagMatrix& proxy, const TuningParams& t,
                                                const VectorXd* weights = nullptr);

EstimateResult estimate_gamma(const GroupedDataset& data, double beta0, const BlockDiagMatrix& proxy,
                              const TuningParams& tuning);
// Vector form for a multi-column Z: V = y - Z beta0.
EstimateResult estimate_gamma(const GroupedDataset& data, const VectorXd& beta0, const BlockDiagMatrix& proxy,
                              const TuningParams& tuning);

// Tested column defaults to data.z(); `column` selects another column of Z.
EstimateResult estimate_theta(const GroupedDataset& data, const BlockDiagMatrix& proxy,
                              const TuningParams& tuning, int column = 0);

struct GlmmOptions {
  double tol = 1e-6;
  int max_iterations = 25;
  double divergence_factor = 10.0;
  // sigma_u^2 = sum b'' u^2 / sum b''. With false the weights are not
  // normalized (n^-1 sum b'' u^2), which leaves a factor mean(b'') in both
  // scales of the statistic.
  bool normalize_weights = true;
};

EstimateResult estimate_gamma_glmm(const GroupedDataset& data, const VectorXd& beta0,
                                   const BlockDiagMatrix& proxy, const ExponentialFamily& family,
                                   const TuningParams& tuning, const GlmmOptions& opts = {});

EstimateResult estimate_theta_glmm(const GroupedDataset& data, const VectorXd& gamma_hat,
                                   const VectorXd& beta0, const BlockDiagMatrix& proxy,
                                   const ExponentialFamily& family, const TuningParams& tuning,
                                   int column = 0);

// Linear predictor X gamma + Z beta0.
VectorXd linear_predictor(const GroupedDataset& data, const VectorXd& gamma, const VectorXd& beta0);

}  // namespace lmminfer
