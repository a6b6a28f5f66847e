#pragma once

#include "lmminfer/inference.hpp"
#include "lmminfer/model.hpp"
#include "lmminfer/rng.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace lmminfer {

enum class DesignKind { Toeplitz, EquiCorr, Banded };

struct Design {
  DesignKind kind = DesignKind::Toeplitz;
  double rho = -0.5;
};

std::string describe(const Design& d);

enum class ErrorLaw { Gaussian, StudentT };

struct ErrorSpec {
  ErrorLaw law = ErrorLaw::Gaussian;
  double df = 0.0;   // StudentT only; draws are rescaled to unit variance when df > 2
};

struct ModelSpec {
  int n = 200;
  int p = 500;
  int N = 50;
  std::vector<int> group_sizes;   // empty: uniform n / N
  Design design;
  ErrorSpec error;
  int q = 2;
  MatrixXd psi = MatrixXd::Identity(2, 2) * 0.56;
  double sigma_eps_sq = 1.0;
  int s = 5;
  double magnitude = 5.0;
  double h = 0.0;
  int j = 4;                      // tested coordinate, 1-based
  bool random_intercept = false;  // W_i = 1 instead of the first q columns of X
  std::uint64_t seed = 1;

  std::vector<int> sizes() const;
  void validate() const;
};

// Sigma_ij = rho^|i-j| (Toeplitz), rho off the diagonal (EquiCorr), or
// -rho / (1 + rho^2) on the first off-diagonals (Banded). Throws
// NotPositiveDefinite when the Cholesky factorization fails.
MatrixXd make_sigma(const Design& d, int p);

struct OracleTheta {
  VectorXd theta;        // length p - 1, column `col` removed
  double sigma_u_sq = 0.0;
};

// Regression of column `col` (0-based) on the others under covariance sigma.
OracleTheta oracle_theta(const MatrixXd& sigma, int col);

// Exactly s nonzeros at the 1-based positions j <= 3s/2 with 3 not dividing j,
// drawn U(0,1) and rescaled to Euclidean norm `magnitude`.
VectorXd gen_beta(int s, int p, double magnitude, Rng& rng);
VectorXd gen_beta(int s, int p, double magnitude, std::uint64_t seed);

struct GroundTruth {
  VectorXd beta;         // beta*, before the local shift
  VectorXd beta_sim;     // coefficients actually used to form y
  std::vector<VectorXd> b;
  MatrixXd sigma;
  MatrixXd psi;
  double sigma_eps_sq = 1.0;
  int tested = 0;        // 0-based column of the tested coordinate

  double beta0() const { return beta(tested); }
  VectorXd gamma() const;   // beta* without the tested coordinate
};

struct SimData {
  GroupedDataset data;   // Z = tested column, X = the remaining p - 1 columns
  MatrixXd design;       // full n x p design
  GroundTruth truth;

  // Same response and grouping with the listed 0-based columns moved to Z.
  GroupedDataset split(const std::vector<int>& cols) const;
};

SimData gen_dataset(const ModelSpec& spec);

struct McOptions {
  double alpha = 0.05;
  int reps = 1000;
  std::uint64_t master_seed = 1;
  int threads = 0;               // 0: OpenMP default
  PipelineOptions pipeline;
};

struct RejectionReport {
  ModelSpec spec;
  McOptions options;
  int reps = 0;
  int rejections = 0;
  double rejection_rate = 0.0;
  double monte_carlo_se = 0.0;
  int failures = 0;              // reps that threw; counted as non-rejections
  int infeasible = 0;
  double mean_gamma_nnz = 0.0;   // over successful reps
  double mean_theta_nnz = 0.0;
  std::vector<double> t_stats;   // NaN for failed reps
  std::vector<double> p_values;
};

// Rep r uses spec.seed = substream_seed(master_seed, r). Counts do not depend
// on the number of threads.
RejectionReport monte_carlo(const ModelSpec& spec, const McOptions& opts);

// The same pipeline with P~ = I.
TestResult lm_baseline(const GroupedDataset& raw, double beta0, PipelineOptions opts = {});

ModelSpec model_spec(int model);   // Models 1-5 at n = 200, p = 500, N = 50, s = 5
ModelSpec reduce(ModelSpec spec);  // n = 120, p = 150, N = 30; s = 5 becomes 3

struct Scenario {
  std::string model;
  std::string variant;           // "MM", "LM", proxy name or tuning multipliers
  ModelSpec spec;
  PipelineOptions pipeline;
};

// Named presets: model1 .. model5, table2, table2-model1, table2-model2,
// table3, table4.
std::vector<Scenario> preset(std::string_view name, bool reduced = false);
std::vector<std::string> preset_names();

}  // namespace lmminfer
