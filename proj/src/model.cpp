#include "lmminfer/model.hpp"

#include "lmminfer/errors.hpp"
#include "lmminfer/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace lmminfer {

namespace {

constexpr double kSymmetryTol = 1e-12;
constexpr double kPsdTol = 1e-10;
constexpr double kMaxCondition = 1e14;

bool is_symmetric(const MatrixXd& a) {
  if (a.rows() != a.cols()) return false;
  if (a.size() == 0) return true;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= kSymmetryTol * scale;
}

double min_eigenvalue(const MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  const MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// (I + W M W^T)^{-1} for one group, M symmetric PSD.
MatrixXd invert_identity_plus(const MatrixXd& w, const MatrixXd& m, int group) {
  const Eigen::Index ni = w.rows();
  const Eigen::Index q = w.cols();
  if (m.isZero(0.0)) return MatrixXd::Identity(ni, ni);

  // Eigenvalues of I + W M W^T are >= 1, so the condition number is bounded by
  // the largest one, which is at most 1 + trace(W M W^T).
  const double trace_wmw = (w * m).cwiseProduct(w).sum();
  if (!(1.0 + trace_wmw < kMaxCondition)) {
    std::ostringstream os;
    os << "group " << group << ": condition number of I + W M W^T exceeds 1e14";
    throw Error(ErrorCode::SingularBlock, os.str());
  }

  MatrixXd out;
  if (2 * q < ni) {
    // Woodbury without inverting M: I - W (I + M W^T W)^{-1} M W^T.
    const MatrixXd inner = MatrixXd::Identity(q, q) + m * (w.transpose() * w);
    Eigen::PartialPivLU<MatrixXd> lu(inner);
    out = MatrixXd::Identity(ni, ni) - w * lu.solve(m * w.transpose());
  } else {
    MatrixXd a = MatrixXd::Identity(ni, ni) + w * m * w.transpose();
    Eigen::LDLT<MatrixXd> ldlt(0.5 * (a + a.transpose()));
    if (ldlt.info() != Eigen::Success) {
      throw Error(ErrorCode::SingularBlock, "group " + std::to_string(group) + ": factorization failed");
    }
    out = ldlt.solve(MatrixXd::Identity(ni, ni));
  }
  return 0.5 * (out + out.transpose());
}

void check_conformable(const BlockDiagMatrix& a, const BlockDiagMatrix& b) {
  if (!a.same_layout(b)) throw Error(ErrorCode::LayoutMismatch, "block layouts differ");
}

}  // namespace

std::vector<int> GroupedDataset::offsets() const {
  std::vector<int> off(groups.size() + 1, 0);
  for (std::size_t g = 0; g < groups.size(); ++g) off[g + 1] = off[g] + groups[g];
  return off;
}

void GroupedDataset::validate() const {
  if (groups.empty()) throw Error(ErrorCode::InvalidArgument, "dataset has no groups");
  long total = 0;
  for (int ni : groups) {
    if (ni < 1) throw Error(ErrorCode::InvalidArgument, "group sizes must be >= 1");
    total += ni;
  }
  if (total != y.size()) throw Error(ErrorCode::InvalidArgument, "group sizes do not sum to n");
  if (X.rows() != y.size()) throw Error(ErrorCode::InvalidArgument, "X rows != n");
  if (Z.rows() != y.size() || Z.cols() < 1) throw Error(ErrorCode::InvalidArgument, "Z must be n x d, d >= 1");
  if (W.size() != groups.size()) throw Error(ErrorCode::InvalidArgument, "W must hold one block per group");
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (W[g].rows() != groups[g] || W[g].cols() != q) {
      throw Error(ErrorCode::InvalidArgument, "W block " + std::to_string(g) + " is not n_i x q");
    }
  }
}

GroupedDataset hold_out(const GroupedDataset& base, std::span<const int> cols) {
  const int k = base.num_nuisance();
  std::vector<char> taken(static_cast<std::size_t>(k), 0);
  for (int c : cols) {
    if (c < 0 || c >= k) throw Error(ErrorCode::InvalidArgument, "hold-out column out of range");
    if (taken[static_cast<std::size_t>(c)]) throw Error(ErrorCode::InvalidArgument, "duplicate hold-out column");
    taken[static_cast<std::size_t>(c)] = 1;
  }
  GroupedDataset out = base;
  const auto d = static_cast<Eigen::Index>(cols.size());
  out.Z.resize(base.n(), d);
  out.z_names.clear();
  for (Eigen::Index j = 0; j < d; ++j) {
    out.Z.col(j) = base.X.col(cols[static_cast<std::size_t>(j)]);
    if (!base.x_names.empty()) out.z_names.push_back(base.x_names[static_cast<std::size_t>(cols[static_cast<std::size_t>(j)])]);
  }
  out.X.resize(base.n(), k - d);
  out.x_names.clear();
  Eigen::Index next = 0;
  for (int j = 0; j < k; ++j) {
    if (taken[static_cast<std::size_t>(j)]) continue;
    out.X.col(next++) = base.X.col(j);
    if (!base.x_names.empty()) out.x_names.push_back(base.x_names[static_cast<std::size_t>(j)]);
  }
  return out;
}

BlockDiagMatrix::BlockDiagMatrix(std::vector<MatrixXd> blocks) : blocks_(std::move(blocks)) {
  sizes_.reserve(blocks_.size());
  offsets_.assign(1, 0);
  for (const auto& b : blocks_) {
    if (b.rows() != b.cols()) throw Error(ErrorCode::InvalidArgument, "blocks must be square");
    sizes_.push_back(static_cast<int>(b.rows()));
    offsets_.push_back(offsets_.back() + static_cast<int>(b.rows()));
  }
}

BlockDiagMatrix BlockDiagMatrix::identity(std::span<const int> sizes) {
  std::vector<MatrixXd> blocks;
  blocks.reserve(sizes.size());
  for (int s : sizes) blocks.push_back(MatrixXd::Identity(s, s));
  return BlockDiagMatrix(std::move(blocks));
}

VectorXd BlockDiagMatrix::apply(const VectorXd& v) const {
  if (v.size() != dim()) throw Error(ErrorCode::LayoutMismatch, "vector length does not match block layout");
  VectorXd out(v.size());
  for (std::size_t g = 0; g < blocks_.size(); ++g) {
    out.segment(offsets_[g], sizes_[g]).noalias() = blocks_[g] * v.segment(offsets_[g], sizes_[g]);
  }
  return out;
}

MatrixXd BlockDiagMatrix::apply(const MatrixXd& m) const {
  if (m.rows() != dim()) throw Error(ErrorCode::LayoutMismatch, "matrix rows do not match block layout");
  MatrixXd out(m.rows(), m.cols());
  for (std::size_t g = 0; g < blocks_.size(); ++g) {
    out.middleRows(offsets_[g], sizes_[g]).noalias() = blocks_[g] * m.middleRows(offsets_[g], sizes_[g]);
  }
  return out;
}

BlockDiagMatrix BlockDiagMatrix::operator*(const BlockDiagMatrix& rhs) const {
  check_conformable(*this, rhs);
  std::vector<MatrixXd> out;
  out.reserve(blocks_.size());
  for (std::size_t g = 0; g < blocks_.size(); ++g) out.push_back(blocks_[g] * rhs.blocks_[g]);
  return BlockDiagMatrix(std::move(out));
}

MatrixXd BlockDiagMatrix::dense() const {
  MatrixXd out = MatrixXd::Zero(dim(), dim());
  for (std::size_t g = 0; g < blocks_.size(); ++g) {
    out.block(offsets_[g], offsets_[g], sizes_[g], sizes_[g]) = blocks_[g];
  }
  return out;
}

double BlockDiagMatrix::max_abs() const {
  double m = 0.0;
  for (const auto& b : blocks_) m = std::max(m, b.cwiseAbs().maxCoeff());
  return m;
}

void RandomEffectSpec::validate() const {
  if (!(sigma_eps_sq > 0.0) || !std::isfinite(sigma_eps_sq)) {
    throw Error(ErrorCode::InvalidArgument, "sigma_eps_sq must be positive and finite");
  }
  if (!is_symmetric(psi)) throw Error(ErrorCode::NonPD, "psi is not symmetric");
  Eigen::LLT<MatrixXd> llt(psi);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::NonPD, "psi is not positive definite");
}

ProxySpec ProxySpec::matrix(MatrixXd m) {
  if (!is_symmetric(m)) throw Error(ErrorCode::InvalidArgument, "proxy block M must be symmetric");
  if (min_eigenvalue(m) < -kPsdTol) throw Error(ErrorCode::InvalidArgument, "proxy block M must be PSD");
  return {Kind::Matrix, 0.5 * (m + m.transpose())};
}

ProxySpec ProxySpec::scaled_identity(int q, double c) {
  return matrix(c * MatrixXd::Identity(q, q));
}

MatrixXd ProxySpec::resolve(int q, int n) const {
  switch (kind) {
    case Kind::LogNIdentity: return std::log(static_cast<double>(n)) * MatrixXd::Identity(q, q);
    case Kind::ZeroMatrix: return MatrixXd::Zero(q, q);
    case Kind::Matrix:
      if (m.rows() != q || m.cols() != q) throw Error(ErrorCode::InvalidArgument, "proxy block M must be q x q");
      return m;
  }
  return m;
}

std::string ProxySpec::describe() const {
  switch (kind) {
    case Kind::LogNIdentity: return "logn";
    case Kind::ZeroMatrix: return "zero";
    case Kind::Matrix: break;
  }
  std::ostringstream os;
  os.precision(17);
  os << "matrix[";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << (i || j ? "," : "") << m(i, j);
  }
  os << "]";
  return os.str();
}

StandardizeResult standardize_columns(const GroupedDataset& data) {
  StandardizeResult res{data, VectorXd::Ones(data.X.cols())};
  const double target = std::sqrt(static_cast<double>(data.n()));
  for (Eigen::Index j = 0; j < data.X.cols(); ++j) {
    const double norm = data.X.col(j).norm();
    if (norm < 1e-12) throw Error(ErrorCode::ZeroColumn, "column " + std::to_string(j) + " has zero norm");
    if (norm == target) continue;
    res.scale(j) = target / norm;
    res.data.X.col(j) *= res.scale(j);
  }
  return res;
}

BlockDiagMatrix build_proxy(const GroupedDataset& data, const ProxySpec& proxy) {
  const MatrixXd m = proxy.resolve(data.q, data.n());
  if (proxy.kind == ProxySpec::Kind::Matrix) {
    if (!is_symmetric(m)) throw Error(ErrorCode::InvalidArgument, "proxy block M must be symmetric");
    if (min_eigenvalue(m) < -kPsdTol) throw Error(ErrorCode::InvalidArgument, "proxy block M must be PSD");
  }
  std::vector<MatrixXd> blocks;
  blocks.reserve(data.groups.size());
  for (std::size_t g = 0; g < data.groups.size(); ++g) {
    blocks.push_back(invert_identity_plus(data.W[g], m, static_cast<int>(g)));
  }
  return BlockDiagMatrix(std::move(blocks));
}

BlockDiagMatrix true_precision(const GroupedDataset& data, const RandomEffectSpec& re, bool verify) {
  re.validate();
  const MatrixXd m = re.psi / re.sigma_eps_sq;
  std::vector<MatrixXd> blocks;
  blocks.reserve(data.groups.size());
  for (std::size_t g = 0; g < data.groups.size(); ++g) {
    blocks.push_back(invert_identity_plus(data.W[g], m, static_cast<int>(g)));
  }
  BlockDiagMatrix p(std::move(blocks));
  if (verify) {
    const BlockDiagMatrix longp = true_precision_long_form(data, re);
    for (int g = 0; g < p.num_blocks(); ++g) {
      const double diff = (p.block(g) - longp.block(g)).cwiseAbs().maxCoeff();
      if (diff > 1e-9) {
        throw Error(ErrorCode::SingularBlock,
                    "short and long forms of P disagree in group " + std::to_string(g));
      }
    }
  }
  return p;
}

BlockDiagMatrix true_precision_long_form(const GroupedDataset& data, const RandomEffectSpec& re) {
  re.validate();
  const double s2 = re.sigma_eps_sq;
  const Eigen::LLT<MatrixXd> psi_llt(re.psi);
  const MatrixXd psi_inv = psi_llt.solve(MatrixXd::Identity(re.psi.rows(), re.psi.cols()));
  std::vector<MatrixXd> blocks;
  for (std::size_t g = 0; g < data.groups.size(); ++g) {
    const MatrixXd& w = data.W[g];
    const Eigen::Index ni = w.rows();
    const MatrixXd e = w.transpose() * w + s2 * psi_inv;
    Eigen::LLT<MatrixXd> e_llt(e);
    if (e_llt.info() != Eigen::Success) {
      throw Error(ErrorCode::SingularBlock, "E is singular in group " + std::to_string(g));
    }
    const MatrixXd e_inv = e_llt.solve(MatrixXd::Identity(e.rows(), e.cols()));
    const MatrixXd a = MatrixXd::Identity(ni, ni) - w * e_inv * w.transpose();
    MatrixXd p = a * a + s2 * w * e_inv * psi_inv * e_inv * w.transpose();
    blocks.push_back(0.5 * (p + p.transpose()));
  }
  return BlockDiagMatrix(std::move(blocks));
}

BlockDiagMatrix true_covariance(const GroupedDataset& data, const RandomEffectSpec& re) {
  re.validate();
  std::vector<MatrixXd> blocks;
  for (const auto& w : data.W) {
    blocks.push_back(MatrixXd::Identity(w.rows(), w.rows()) + w * re.psi * w.transpose() / re.sigma_eps_sq);
  }
  return BlockDiagMatrix(std::move(blocks));
}

PConditionReport check_p_condition(const BlockDiagMatrix& a, const GroupedDataset& data, double c) {
  PConditionReport rep;
  rep.layout_ok = a.matches(data);
  rep.bound = c * std::log(static_cast<double>(data.n()));
  rep.symmetric = true;
  rep.min_eigenvalue = std::numeric_limits<double>::infinity();
  for (int g = 0; g < a.num_blocks(); ++g) {
    const MatrixXd& b = a.block(g);
    if (!is_symmetric(b)) rep.symmetric = false;
    rep.min_eigenvalue = std::min(rep.min_eigenvalue, min_eigenvalue(b));
    for (Eigen::Index i = 0; i < b.rows(); ++i) {
      for (Eigen::Index j = 0; j < b.cols(); ++j) {
        const double v = std::abs(b(i, j));
        rep.max_abs_entry = std::max(rep.max_abs_entry, v);
        if (v > rep.bound) rep.violations.push_back({g, static_cast<int>(i), static_cast<int>(j), b(i, j)});
      }
    }
  }
  if (a.num_blocks() == 0) rep.min_eigenvalue = 0.0;
  rep.satisfied = rep.layout_ok && rep.symmetric && rep.min_eigenvalue >= -kPsdTol && rep.violations.empty();
  return rep;
}

double block_trace(const BlockDiagMatrix& a) {
  double t = 0.0;
  for (const auto& b : a.blocks()) t += b.trace();
  return t;
}

double block_triple_trace(const BlockDiagMatrix& a, const BlockDiagMatrix& b, const BlockDiagMatrix& c) {
  check_conformable(a, b);
  check_conformable(b, c);
  double t = 0.0;
  for (int g = 0; g < a.num_blocks(); ++g) {
    // trace(ABC) = sum_ij A_ij (BC)_ji
    const MatrixXd bc = b.block(g) * c.block(g);
    t += a.block(g).cwiseProduct(bc.transpose()).sum();
  }
  return t;
}

RestrictedEigenvalueEstimate sample_restricted_eigenvalue(const MatrixXd& x, int s, int draws,
                                                          std::uint64_t seed,
                                                          std::span<const ConeDirection> forced) {
  const int p = static_cast<int>(x.cols());
  if (s < 1 || s > p) throw Error(ErrorCode::InvalidArgument, "sparsity must be in [1, p-1]");
  if (draws < 1) throw Error(ErrorCode::InvalidArgument, "draws must be >= 1");
  const double sqrt_n = std::sqrt(static_cast<double>(x.rows()));
  RestrictedEigenvalueEstimate est;
  est.kappa = std::numeric_limits<double>::infinity();

  auto evaluate = [&](const VectorXd& delta, const std::vector<int>& support) {
    double on = 0.0;
    for (int j : support) on += delta(j) * delta(j);
    on = std::sqrt(on);
    if (on <= 0.0) return;
    est.kappa = std::min(est.kappa, (x * delta).norm() / (sqrt_n * on));
    ++est.evaluated;
  };

  for (const auto& dir : forced) evaluate(dir.delta, dir.support);

  std::vector<int> perm(static_cast<std::size_t>(p));
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif;
  for (int d = 0; d < draws; ++d) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(d));
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = 0; i < s; ++i) {
      std::uniform_int_distribution<int> pick(i, p - 1);
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(pick(rng))]);
    }
    std::vector<int> support(perm.begin(), perm.begin() + s);
    VectorXd on = VectorXd::Zero(p);
    double l1_on = 0.0;
    for (int j : support) {
      on(j) = gauss(rng);
      l1_on += std::abs(on(j));
    }
    // Off-support part: either dense Gaussian or a single coordinate, rescaled
    // so that its l1 norm stays inside the cone.
    VectorXd off = VectorXd::Zero(p);
    if (p > s) {
      if (d % 2 == 0) {
        for (int i = s; i < p; ++i) off(perm[static_cast<std::size_t>(i)]) = gauss(rng);
      } else {
        std::uniform_int_distribution<int> pick(s, p - 1);
        off(perm[static_cast<std::size_t>(pick(rng))]) = gauss(rng) < 0 ? -1.0 : 1.0;
      }
      const double l1_off = off.lpNorm<1>();
      if (l1_off > 0.0) off *= unif(rng) * l1_on / l1_off;
    }
    evaluate(on + off, support);
    evaluate(on, support);
  }
  return est;
}

}  // namespace lmminfer
