#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lmminfer {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Grouped longitudinal design: rows of y, X, Z are stacked group by group in
// the order given by `groups`; W is kept per group (n_i x q).
struct GroupedDataset {
  VectorXd y;
  MatrixXd X;                 // nuisance design, n x (p-1)
  MatrixXd Z;                 // tested covariate(s), n x d (d = 1 for univariate tests)
  std::vector<MatrixXd> W;    // one n_i x q block per group
  std::vector<int> groups;    // n_1 .. n_N
  int q = 1;
  std::vector<std::string> x_names;
  std::vector<std::string> z_names;

  int n() const { return static_cast<int>(y.size()); }
  int num_groups() const { return static_cast<int>(groups.size()); }
  int num_nuisance() const { return static_cast<int>(X.cols()); }
  Eigen::Ref<const VectorXd> z() const { return Z.col(0); }

  // Start row of every group (size N + 1, last entry = n).
  std::vector<int> offsets() const;

  // Throws InvalidArgument when the row blocks do not line up with `groups`.
  void validate() const;
};

// Moves the X columns listed in `cols` into Z (in that order); the remaining X
// columns keep their relative order.
GroupedDataset hold_out(const GroupedDataset& base, std::span<const int> cols);

class BlockDiagMatrix {
 public:
  BlockDiagMatrix() = default;
  explicit BlockDiagMatrix(std::vector<MatrixXd> blocks);

  static BlockDiagMatrix identity(std::span<const int> sizes);

  const std::vector<MatrixXd>& blocks() const { return blocks_; }
  const MatrixXd& block(int g) const { return blocks_[static_cast<std::size_t>(g)]; }
  const std::vector<int>& sizes() const { return sizes_; }
  const std::vector<int>& offsets() const { return offsets_; }
  int num_blocks() const { return static_cast<int>(blocks_.size()); }
  int dim() const { return offsets_.empty() ? 0 : offsets_.back(); }

  bool same_layout(const BlockDiagMatrix& other) const { return sizes_ == other.sizes_; }
  bool matches(const GroupedDataset& data) const { return sizes_ == data.groups; }

  VectorXd apply(const VectorXd& v) const;
  MatrixXd apply(const MatrixXd& m) const;
  BlockDiagMatrix operator*(const BlockDiagMatrix& rhs) const;
  MatrixXd dense() const;
  double max_abs() const;

 private:
  std::vector<MatrixXd> blocks_;
  std::vector<int> sizes_;
  std::vector<int> offsets_;
};

struct RandomEffectSpec {
  MatrixXd psi;               // q x q, symmetric positive definite
  double sigma_eps_sq = 1.0;

  void validate() const;
};

// Shared per-group proxy block M for P~ = (I + W M W^T)^{-1}.
struct ProxySpec {
  enum class Kind { Matrix, LogNIdentity, ZeroMatrix };
  Kind kind = Kind::Matrix;
  MatrixXd m;

  static ProxySpec matrix(MatrixXd m);
  static ProxySpec log_n_identity() { return {Kind::LogNIdentity, {}}; }
  static ProxySpec zero() { return {Kind::ZeroMatrix, {}}; }
  static ProxySpec scaled_identity(int q, double c);

  // Concrete q x q block for a dataset of size n.
  MatrixXd resolve(int q, int n) const;
  std::string describe() const;
};

struct StandardizeResult {
  GroupedDataset data;
  VectorXd scale;   // X_out.col(j) = X_in.col(j) * scale(j)
};

StandardizeResult standardize_columns(const GroupedDataset& data);

BlockDiagMatrix build_proxy(const GroupedDataset& data, const ProxySpec& proxy);

// P = (I + sigma^-2 W psi W^T)^{-1}. With `verify` the long form of the
// profile-likelihood precision is also evaluated and must agree to 1e-9.
BlockDiagMatrix true_precision(const GroupedDataset& data, const RandomEffectSpec& re,
                               bool verify = false);

// (I - W E^-1 W^T)^2 + sigma^2 W E^-1 psi^-1 E^-1 W^T with E = W^T W + sigma^2 psi^-1.
BlockDiagMatrix true_precision_long_form(const GroupedDataset& data, const RandomEffectSpec& re);

// P^{-1} = I + sigma^-2 W psi W^T (noise covariance divided by sigma^2).
BlockDiagMatrix true_covariance(const GroupedDataset& data, const RandomEffectSpec& re);

struct PConditionEntry {
  int block;
  int row;
  int col;
  double value;
};

struct PConditionReport {
  bool satisfied = false;
  bool layout_ok = false;
  bool symmetric = false;
  double min_eigenvalue = 0.0;
  double max_abs_entry = 0.0;
  double bound = 0.0;
  std::vector<PConditionEntry> violations;
};

PConditionReport check_p_condition(const BlockDiagMatrix& a, const GroupedDataset& data, double c);

double block_trace(const BlockDiagMatrix& a);
double block_triple_trace(const BlockDiagMatrix& a, const BlockDiagMatrix& b,
                          const BlockDiagMatrix& c);

struct ConeDirection {
  VectorXd delta;
  std::vector<int> support;   // J0
};

struct RestrictedEigenvalueEstimate {
  double kappa = 0.0;
  int evaluated = 0;
  std::string label = "diagnostic only, not a certificate";
};

// Sampled (optimistic) estimate of the restricted eigenvalue constant.
RestrictedEigenvalueEstimate sample_restricted_eigenvalue(const MatrixXd& x, int s, int draws,
                                                          std::uint64_t seed,
                                                          std::span<const ConeDirection> forced = {});

}  // namespace lmminfer
