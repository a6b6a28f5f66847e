#include "lmminfer/lp.hpp"

#include "lmminfer/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace lmminfer {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::Optimal: return "Optimal";
    case SolverStatus::Infeasible: return "Infeasible";
    case SolverStatus::IterationLimit: return "IterationLimit";
    case SolverStatus::Unbounded: return "Unbounded";
  }
  return "Unknown";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Where : unsigned char { Basic, AtLower, AtUpper };

// Dense revised dual simplex. Columns 0..ns-1 are structural, ns..ns+m-1 are
// the row slacks s_i = a_i^T x (column -e_i), so the constraint system is
// [A, -I] (x, s) = 0 and the all-slack basis B = -I is always available.
class DualSimplex {
 public:
  DualSimplex(const BoundedLp& lp, const SimplexOptions& opts) : opts_(opts) {
    m_ = static_cast<int>(lp.a.rows());
    ns_ = static_cast<int>(lp.a.cols());
    nt_ = ns_ + m_;

    row_scale_ = VectorXd::Ones(m_);
    for (int i = 0; i < m_; ++i) {
      const double mx = ns_ > 0 ? lp.a.row(i).cwiseAbs().maxCoeff() : 0.0;
      if (mx > 0.0) row_scale_(i) = 1.0 / mx;
    }
    a_ = row_scale_.asDiagonal() * lp.a;

    lo_.resize(nt_);
    hi_.resize(nt_);
    cost_ = VectorXd::Zero(nt_);
    artificial_.assign(static_cast<std::size_t>(nt_), 0);
    double finite_scale = 1.0;
    for (int j = 0; j < ns_; ++j) {
      lo_(j) = lp.col_lower(j);
      hi_(j) = lp.col_upper(j);
      cost_(j) = lp.cost(j);
      if (std::isfinite(lo_(j))) finite_scale = std::max(finite_scale, std::abs(lo_(j)));
      if (std::isfinite(hi_(j))) finite_scale = std::max(finite_scale, std::abs(hi_(j)));
    }
    for (int i = 0; i < m_; ++i) {
      lo_(ns_ + i) = lp.row_lower(i) * row_scale_(i);
      hi_(ns_ + i) = lp.row_upper(i) * row_scale_(i);
    }
    big_ = 1e7 * finite_scale;

    where_.assign(static_cast<std::size_t>(nt_), Where::AtLower);
    x_ = VectorXd::Zero(nt_);
    for (int j = 0; j < ns_; ++j) {
      const double c = cost_(j);
      if (c > 0.0 || (c == 0.0 && std::isfinite(lo_(j)))) {
        if (!std::isfinite(lo_(j))) {
          lo_(j) = -big_;
          artificial_[static_cast<std::size_t>(j)] = 1;
        }
        where_[static_cast<std::size_t>(j)] = Where::AtLower;
        x_(j) = lo_(j);
      } else {
        if (!std::isfinite(hi_(j))) {
          hi_(j) = big_;
          artificial_[static_cast<std::size_t>(j)] = 1;
        }
        where_[static_cast<std::size_t>(j)] = Where::AtUpper;
        x_(j) = hi_(j);
      }
    }
    head_.resize(static_cast<std::size_t>(m_));
    for (int i = 0; i < m_; ++i) {
      head_[static_cast<std::size_t>(i)] = ns_ + i;
      where_[static_cast<std::size_t>(ns_ + i)] = Where::Basic;
    }
    binv_ = -MatrixXd::Identity(m_, m_);
    xb_ = a_ * x_.head(ns_);
    d_ = cost_;
    for (int i = 0; i < m_; ++i) d_(ns_ + i) = 0.0;
    row_norm2_ = VectorXd::Ones(m_);
  }

  LpSolution run() {
    const int max_iter = opts_.max_iterations > 0 ? opts_.max_iterations : 50 * (nt_ + m_ + 1);
    int since_refactor = 0;
    int stall = 0;
    bool bland = false;
    bool refreshed = false;
    int iter = 0;
    SolverStatus status = SolverStatus::IterationLimit;

    while (iter < max_iter) {
      int r = choose_row(bland);
      if (r < 0) {
        if (since_refactor > 0 && !refreshed) {
          refresh();
          refreshed = true;
          r = choose_row(bland);
        }
        if (r < 0) {
          status = SolverStatus::Optimal;
          break;
        }
      }

      const int leaving = head_[static_cast<std::size_t>(r)];
      const double lo = lo_(leaving);
      const double hi = hi_(leaving);
      const double sigma = xb_(r) < lo ? 1.0 : -1.0;
      const double target = sigma > 0 ? lo : hi;

      const VectorXd rho = binv_.row(r).transpose();
      VectorXd alpha_r(nt_);
      alpha_r.head(ns_).noalias() = a_.transpose() * rho;
      alpha_r.tail(m_) = -rho;

      const int q = ratio_test(alpha_r, sigma, bland);
      if (q < 0) {
        if (since_refactor > 0) {
          refactor();
          since_refactor = 0;
          continue;
        }
        status = SolverStatus::Infeasible;
        break;
      }

      VectorXd alpha_q(m_);
      if (q < ns_) {
        alpha_q.noalias() = binv_ * a_.col(q);
      } else {
        alpha_q = -binv_.col(q - ns_);
      }
      const double piv = alpha_q(r);
      if (std::abs(piv - alpha_r(q)) > 1e-7 * (1.0 + std::abs(piv)) || std::abs(piv) < opts_.tol) {
        if (since_refactor > 0) {
          refactor();
          since_refactor = 0;
          continue;
        }
      }

      // Dual update.
      const double theta_d = d_(q) / piv;
      if (std::abs(theta_d) <= opts_.tol) {
        if (++stall >= opts_.bland_after_stall) bland = true;
      } else {
        stall = 0;
        bland = false;
      }
      for (int j = 0; j < nt_; ++j) {
        const Where w = where_[static_cast<std::size_t>(j)];
        if (w == Where::Basic) continue;
        double dj = d_(j) - theta_d * alpha_r(j);
        if (w == Where::AtLower && dj < 0.0) dj = 0.0;
        if (w == Where::AtUpper && dj > 0.0) dj = 0.0;
        d_(j) = dj;
      }
      d_(q) = 0.0;
      d_(leaving) = -theta_d;

      // Primal update.
      const double delta = (xb_(r) - target) / piv;
      const double xq_new = x_(q) + delta;
      xb_.noalias() -= delta * alpha_q;
      x_(leaving) = target;
      where_[static_cast<std::size_t>(leaving)] = sigma > 0 ? Where::AtLower : Where::AtUpper;
      where_[static_cast<std::size_t>(q)] = Where::Basic;
      head_[static_cast<std::size_t>(r)] = q;
      xb_(r) = xq_new;

      // Basis inverse update.
      const VectorXd rho_r = rho / piv;
      binv_.noalias() -= alpha_q * rho_r.transpose();
      binv_.row(r) = rho_r.transpose();

      ++iter;
      refreshed = false;
      if (++since_refactor >= opts_.refactor_every) {
        refactor();
        since_refactor = 0;
      } else {
        row_norm2_ = binv_.array().square().rowwise().sum().matrix();
      }
    }

    if (status == SolverStatus::Optimal) {
      for (int j = 0; j < ns_; ++j) {
        if (!artificial_[static_cast<std::size_t>(j)]) continue;
        const double v = value(j);
        if (std::abs(v) >= 0.5 * big_) {
          status = SolverStatus::Unbounded;
          break;
        }
      }
    }

    LpSolution sol;
    sol.status = status;
    sol.iterations = iter;
    sol.x.resize(ns_);
    for (int j = 0; j < ns_; ++j) sol.x(j) = value(j);
    return sol;
  }

 private:
  double value(int j) const {
    if (where_[static_cast<std::size_t>(j)] != Where::Basic) return x_(j);
    for (int i = 0; i < m_; ++i) {
      if (head_[static_cast<std::size_t>(i)] == j) return xb_(i);
    }
    return x_(j);
  }

  double infeasibility(int i) const {
    const int j = head_[static_cast<std::size_t>(i)];
    const double v = xb_(i);
    const double lo = lo_(j);
    const double hi = hi_(j);
    if (v < lo - opts_.tol * (1.0 + std::abs(lo))) return lo - v;
    if (v > hi + opts_.tol * (1.0 + std::abs(hi))) return v - hi;
    return 0.0;
  }

  // Dual steepest edge pricing; Bland's rule picks the smallest column index.
  int choose_row(bool bland) const {
    int best = -1;
    double best_score = 0.0;
    int best_col = nt_;
    for (int i = 0; i < m_; ++i) {
      const double inf = infeasibility(i);
      if (inf <= 0.0) continue;
      if (bland) {
        const int col = head_[static_cast<std::size_t>(i)];
        if (col < best_col) {
          best_col = col;
          best = i;
        }
      } else {
        const double score = inf * inf / std::max(row_norm2_(i), 1e-12);
        if (score > best_score) {
          best_score = score;
          best = i;
        }
      }
    }
    return best;
  }

  bool eligible(int j, double sa) const {
    const Where w = where_[static_cast<std::size_t>(j)];
    if (w == Where::Basic) return false;
    if (lo_(j) == hi_(j)) return false;
    if (w == Where::AtLower) return sa < -opts_.tol;
    return sa > opts_.tol;
  }

  // Harris two-pass ratio test over the dual step.
  int ratio_test(const VectorXd& alpha_r, double sigma, bool bland) const {
    double bound = kInf;
    for (int j = 0; j < nt_; ++j) {
      const double sa = sigma * alpha_r(j);
      if (!eligible(j, sa)) continue;
      bound = std::min(bound, (std::abs(d_(j)) + opts_.tol) / std::abs(sa));
    }
    if (!std::isfinite(bound)) return -1;

    int best = -1;
    double best_val = -1.0;
    double best_ratio = kInf;
    for (int j = 0; j < nt_; ++j) {
      const double sa = sigma * alpha_r(j);
      if (!eligible(j, sa)) continue;
      const double ratio = std::abs(d_(j)) / std::abs(sa);
      if (bland) {
        if (ratio < best_ratio - 1e-12) {
          best_ratio = ratio;
          best = j;
        }
      } else if (ratio <= bound && std::abs(sa) > best_val) {
        best_val = std::abs(sa);
        best = j;
      }
    }
    return best;
  }

  void refactor() {
    MatrixXd b(m_, m_);
    for (int i = 0; i < m_; ++i) {
      const int j = head_[static_cast<std::size_t>(i)];
      if (j < ns_) {
        b.col(i) = a_.col(j);
      } else {
        b.col(i).setZero();
        b(j - ns_, i) = -1.0;
      }
    }
    Eigen::PartialPivLU<MatrixXd> lu(b);
    binv_ = lu.inverse();
    refresh();
  }

  // Recomputes primal values, reduced costs and row weights from binv_.
  void refresh() {

    VectorXd rhs = VectorXd::Zero(m_);
    for (int j = 0; j < nt_; ++j) {
      if (where_[static_cast<std::size_t>(j)] == Where::Basic) continue;
      const double v = x_(j);
      if (v == 0.0) continue;
      if (j < ns_) {
        rhs.noalias() -= v * a_.col(j);
      } else {
        rhs(j - ns_) += v;
      }
    }
    xb_.noalias() = binv_ * rhs;

    VectorXd cb(m_);
    for (int i = 0; i < m_; ++i) cb(i) = cost_(head_[static_cast<std::size_t>(i)]);
    const VectorXd y = binv_.transpose() * cb;
    VectorXd ya = a_.transpose() * y;
    for (int j = 0; j < nt_; ++j) {
      const Where w = where_[static_cast<std::size_t>(j)];
      if (w == Where::Basic) {
        d_(j) = 0.0;
        continue;
      }
      double dj = j < ns_ ? cost_(j) - ya(j) : y(j - ns_);
      if (w == Where::AtLower && dj < 0.0 && dj > -1e3 * opts_.tol) dj = 0.0;
      if (w == Where::AtUpper && dj > 0.0 && dj < 1e3 * opts_.tol) dj = 0.0;
      d_(j) = dj;
    }
    row_norm2_ = binv_.array().square().rowwise().sum().matrix();
  }

  SimplexOptions opts_;
  int m_ = 0, ns_ = 0, nt_ = 0;
  MatrixXd a_;
  VectorXd row_scale_;
  VectorXd lo_, hi_, cost_;
  std::vector<unsigned char> artificial_;
  double big_ = 1e7;
  std::vector<Where> where_;
  std::vector<int> head_;
  VectorXd x_, xb_, d_;
  MatrixXd binv_;
  VectorXd row_norm2_;
};

void validate(const BoundedLp& lp) {
  const auto m = lp.a.rows();
  const auto n = lp.a.cols();
  if (lp.cost.size() != n || lp.col_lower.size() != n || lp.col_upper.size() != n ||
      lp.row_lower.size() != m || lp.row_upper.size() != m) {
    throw Error(ErrorCode::InvalidArgument, "linear program dimensions are not conformable");
  }
  if (!lp.a.allFinite() || !lp.cost.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "linear program has non-finite coefficients");
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    if (lp.col_lower(j) > lp.col_upper(j)) throw Error(ErrorCode::InvalidArgument, "column bounds crossed");
  }
}

}  // namespace

LpSolution solve_bounded(const BoundedLp& lp, const SimplexOptions& opts) {
  validate(lp);
  LpSolution sol;
  for (Eigen::Index i = 0; i < lp.a.rows(); ++i) {
    if (lp.row_lower(i) > lp.row_upper(i)) {
      sol.status = SolverStatus::Infeasible;
      sol.x = VectorXd::Zero(lp.a.cols());
      sol.row_activity = VectorXd::Zero(lp.a.rows());
      return sol;
    }
  }
  DualSimplex simplex(lp, opts);
  sol = simplex.run();
  sol.row_activity = lp.a * sol.x;
  sol.objective = lp.cost.dot(sol.x);
  double viol = 0.0;
  for (Eigen::Index i = 0; i < lp.a.rows(); ++i) {
    viol = std::max(viol, lp.row_lower(i) - sol.row_activity(i));
    viol = std::max(viol, sol.row_activity(i) - lp.row_upper(i));
  }
  for (Eigen::Index j = 0; j < lp.a.cols(); ++j) {
    viol = std::max(viol, lp.col_lower(j) - sol.x(j));
    viol = std::max(viol, sol.x(j) - lp.col_upper(j));
  }
  sol.max_violation = viol;
  return sol;
}

LpSolution lp_solve(const LinearProgram& lp, double tol, const SimplexOptions& opts) {
  const auto m = lp.a.rows();
  const auto n = lp.a.cols();
  if (lp.b.size() != m || lp.objective.size() != n) {
    throw Error(ErrorCode::InvalidArgument, "linear program dimensions are not conformable");
  }
  if (!lp.b.allFinite()) throw Error(ErrorCode::InvalidArgument, "right-hand side must be finite");
  BoundedLp bl{lp.objective, lp.a, VectorXd::Zero(n), VectorXd::Constant(n, kInf),
               VectorXd::Constant(m, -kInf), lp.b};
  SimplexOptions o = opts;
  o.tol = tol;
  LpSolution sol = solve_bounded(bl, o);
  const double bnorm = m > 0 ? lp.b.cwiseAbs().maxCoeff() : 0.0;
  if (sol.status == SolverStatus::Optimal && sol.max_violation > 1e-8 * (1.0 + bnorm)) {
    sol.status = SolverStatus::Infeasible;
  }
  return sol;
}

}  // namespace lmminfer
