#include "lmminfer/simgen.hpp"

#include "lmminfer/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <sstream>
#include <tuple>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lmminfer {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

// Symmetric square root of make_sigma(d, p), shared across reps.
std::shared_ptr<const MatrixXd> sigma_root(const Design& d, int p) {
  using Key = std::tuple<int, double, int>;
  static std::mutex mu;
  static std::map<Key, std::shared_ptr<const MatrixXd>> cache;
  const Key key{static_cast<int>(d.kind), d.rho, p};
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  const MatrixXd sigma = make_sigma(d, p);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sigma);
  const VectorXd root_eval = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  auto root = std::make_shared<const MatrixXd>(es.eigenvectors() * root_eval.asDiagonal() *
                                               es.eigenvectors().transpose());
  std::lock_guard<std::mutex> lock(mu);
  if (cache.size() > 16) cache.clear();
  cache.emplace(key, root);
  return root;
}

// Unit-variance draw under the error law.
class Noise {
 public:
  explicit Noise(const ErrorSpec& e) : law_(e.law), t_(e.law == ErrorLaw::StudentT ? e.df : 1.0) {
    if (law_ == ErrorLaw::StudentT && e.df > 2.0) scale_ = std::sqrt((e.df - 2.0) / e.df);
  }

  double operator()(Rng& rng) {
    if (law_ == ErrorLaw::Gaussian) return normal_(rng);
    return scale_ * t_(rng);
  }

 private:
  ErrorLaw law_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::student_t_distribution<double> t_;
  double scale_ = 1.0;
};

MatrixXd psd_root(const MatrixXd& psi) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(psi);
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

}  // namespace

std::string describe(const Design& d) {
  switch (d.kind) {
    case DesignKind::Toeplitz: return "toeplitz(" + fmt(d.rho) + ")";
    case DesignKind::EquiCorr: return "equicorr(" + fmt(d.rho) + ")";
    case DesignKind::Banded: return "banded(" + fmt(d.rho) + ")";
  }
  return "?";
}

std::vector<int> ModelSpec::sizes() const {
  if (!group_sizes.empty()) return group_sizes;
  return std::vector<int>(static_cast<std::size_t>(N), N > 0 ? n / N : 0);
}

void ModelSpec::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::InvalidArgument, m); };
  if (n < 2 || p < 2 || N < 1) bad("model spec needs n >= 2, p >= 2, N >= 1");
  if (group_sizes.empty()) {
    if (n % N != 0) bad("n = " + std::to_string(n) + " is not a multiple of N = " + std::to_string(N));
  } else {
    if (static_cast<int>(group_sizes.size()) != N) bad("group_sizes must have N entries");
    if (std::accumulate(group_sizes.begin(), group_sizes.end(), 0) != n) bad("group sizes must sum to n");
    if (*std::min_element(group_sizes.begin(), group_sizes.end()) < 1) bad("empty group");
  }
  if (s < 0 || s > p) bad("sparsity must lie in [0, p]");
  if (j < 1 || j > p) bad("tested index j must lie in [1, p]");
  if (q < 1) bad("q must be positive");
  if (!random_intercept && q > p) bad("q exceeds the number of columns");
  const int qq = random_intercept ? 1 : q;
  if (psi.rows() != qq || psi.cols() != qq) bad("psi must be " + std::to_string(qq) + " x " + std::to_string(qq));
  if ((psi - psi.transpose()).cwiseAbs().maxCoeff() > 1e-12) bad("psi must be symmetric");
  if (Eigen::SelfAdjointEigenSolver<MatrixXd>(psi, Eigen::EigenvaluesOnly).eigenvalues().minCoeff() < -1e-12)
    bad("psi must be positive semidefinite");
  if (!(sigma_eps_sq >= 0.0)) bad("sigma_eps_sq must be non-negative");
  if (error.law == ErrorLaw::StudentT && !(error.df > 0.0)) bad("student-t errors need df > 0");
}

MatrixXd make_sigma(const Design& d, int p) {
  if (p < 1) throw Error(ErrorCode::InvalidArgument, "p must be positive");
  MatrixXd s = MatrixXd::Identity(p, p);
  for (int i = 0; i < p; ++i) {
    for (int k = 0; k < p; ++k) {
      if (i == k) continue;
      const int gap = std::abs(i - k);
      switch (d.kind) {
        case DesignKind::Toeplitz: s(i, k) = std::pow(d.rho, gap); break;
        case DesignKind::EquiCorr: s(i, k) = d.rho; break;
        case DesignKind::Banded: s(i, k) = gap == 1 ? -d.rho / (1.0 + d.rho * d.rho) : 0.0; break;
      }
    }
  }
  Eigen::LLT<MatrixXd> llt(s);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::NotPositiveDefinite, describe(d) + " is not positive definite at p = " + std::to_string(p));
  return s;
}

OracleTheta oracle_theta(const MatrixXd& sigma, int col) {
  const int p = static_cast<int>(sigma.rows());
  if (sigma.cols() != p || col < 0 || col >= p)
    throw Error(ErrorCode::InvalidArgument, "oracle_theta: bad column or non-square sigma");
  std::vector<int> rest;
  for (int i = 0; i < p; ++i)
    if (i != col) rest.push_back(i);
  const int m = p - 1;
  MatrixXd s_rr(m, m);
  VectorXd s_rj(m);
  for (int a = 0; a < m; ++a) {
    s_rj(a) = sigma(rest[a], col);
    for (int b = 0; b < m; ++b) s_rr(a, b) = sigma(rest[a], rest[b]);
  }
  OracleTheta out;
  if (m == 0) {
    out.sigma_u_sq = sigma(col, col);
    return out;
  }
  Eigen::LLT<MatrixXd> llt(s_rr);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::SingularSubmatrix, "Sigma_{-j,-j} is not positive definite at j = " + std::to_string(col));
  out.theta = llt.solve(s_rj);
  out.sigma_u_sq = sigma(col, col) - s_rj.dot(out.theta);
  return out;
}

VectorXd gen_beta(int s, int p, double magnitude, Rng& rng) {
  if (s < 0 || p < 1) throw Error(ErrorCode::InvalidArgument, "gen_beta needs s >= 0 and p >= 1");
  if (3 * s > 2 * p)
    throw Error(ErrorCode::SparsityOverflow,
                "3s/2 = " + fmt(1.5 * s) + " exceeds p = " + std::to_string(p));
  VectorXd a = VectorXd::Zero(p);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int j = 1; 2 * j <= 3 * s; ++j) {
    if (j % 3 == 0) continue;
    double v = 0.0;
    while (v == 0.0) v = unif(rng);
    a(j - 1) = v;
  }
  const double norm = a.norm();
  if (norm > 0.0) a *= magnitude / norm;
  return a;
}

VectorXd gen_beta(int s, int p, double magnitude, std::uint64_t seed) {
  Rng rng(mix64(seed));
  return gen_beta(s, p, magnitude, rng);
}

VectorXd GroundTruth::gamma() const {
  const int p = static_cast<int>(beta.size());
  VectorXd g(p - 1);
  for (int i = 0, k = 0; i < p; ++i)
    if (i != tested) g(k++) = beta(i);
  return g;
}

GroupedDataset SimData::split(const std::vector<int>& cols) const {
  const int p = static_cast<int>(design.cols());
  std::vector<char> taken(static_cast<std::size_t>(p), 0);
  for (int c : cols) {
    if (c < 0 || c >= p || taken[static_cast<std::size_t>(c)])
      throw Error(ErrorCode::InvalidArgument, "split: bad or repeated column " + std::to_string(c));
    taken[static_cast<std::size_t>(c)] = 1;
  }
  GroupedDataset out;
  out.y = data.y;
  out.W = data.W;
  out.groups = data.groups;
  out.q = data.q;
  out.Z.resize(design.rows(), static_cast<Eigen::Index>(cols.size()));
  out.X.resize(design.rows(), p - static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) {
    out.Z.col(static_cast<Eigen::Index>(k)) = design.col(cols[k]);
    out.z_names.push_back("x" + std::to_string(cols[k] + 1));
  }
  for (int c = 0, k = 0; c < p; ++c) {
    if (taken[static_cast<std::size_t>(c)]) continue;
    out.X.col(k++) = design.col(c);
    out.x_names.push_back("x" + std::to_string(c + 1));
  }
  return out;
}

SimData gen_dataset(const ModelSpec& spec) {
  spec.validate();
  const int n = spec.n, p = spec.p;
  const std::vector<int> sizes = spec.sizes();
  const int qw = spec.random_intercept ? 1 : spec.q;

  SimData sim;
  GroundTruth& t = sim.truth;
  t.tested = spec.j - 1;
  t.psi = spec.psi;
  t.sigma_eps_sq = spec.sigma_eps_sq;
  t.sigma = make_sigma(spec.design, p);

  Rng rng_beta = make_rng(spec.seed, 1);
  t.beta = gen_beta(spec.s, p, spec.magnitude, rng_beta);
  t.beta_sim = t.beta;
  t.beta_sim(t.tested) += spec.h / std::sqrt(static_cast<double>(n));

  Rng rng_x = make_rng(spec.seed, 2);
  Noise noise_x(spec.error);
  MatrixXd xi(n, p);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < p; ++k) xi(i, k) = noise_x(rng_x);
  sim.design = xi * *sigma_root(spec.design, p);

  Rng rng_b = make_rng(spec.seed, 3);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  const MatrixXd psi_root = psd_root(spec.psi);
  t.b.reserve(sizes.size());

  Rng rng_e = make_rng(spec.seed, 4);
  Noise noise_e(spec.error);
  const double sigma_eps = std::sqrt(spec.sigma_eps_sq);

  GroupedDataset& d = sim.data;
  d.groups = sizes;
  d.q = qw;
  d.y = sim.design * t.beta_sim;
  int row = 0;
  for (int n_i : sizes) {
    MatrixXd w = spec.random_intercept ? MatrixXd::Ones(n_i, 1) : MatrixXd(sim.design.block(row, 0, n_i, qw));
    VectorXd u(qw);
    for (int k = 0; k < qw; ++k) u(k) = std_normal(rng_b);
    VectorXd b = psi_root * u;
    d.y.segment(row, n_i) += w * b;
    d.W.push_back(std::move(w));
    t.b.push_back(std::move(b));
    row += n_i;
  }
  for (int i = 0; i < n; ++i) {
    const double e = noise_e(rng_e);
    if (sigma_eps > 0.0) d.y(i) += sigma_eps * e;
  }

  GroupedDataset split = sim.split({t.tested});
  d.X = std::move(split.X);
  d.Z = std::move(split.Z);
  d.x_names = std::move(split.x_names);
  d.z_names = std::move(split.z_names);
  return sim;
}

RejectionReport monte_carlo(const ModelSpec& spec, const McOptions& opts) {
  if (opts.reps < 1) throw Error(ErrorCode::InvalidArgument, "monte_carlo needs reps >= 1");
  if (!(opts.alpha > 0.0 && opts.alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
  spec.validate();
  make_sigma(spec.design, spec.p);

  const int reps = opts.reps;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> t_stats(static_cast<std::size_t>(reps), nan);
  std::vector<double> p_values(static_cast<std::size_t>(reps), nan);
  std::vector<int> gamma_nnz(static_cast<std::size_t>(reps), 0);
  std::vector<int> theta_nnz(static_cast<std::size_t>(reps), 0);
  std::vector<int> status(static_cast<std::size_t>(reps), 0);   // 0 ok, 1 failed, 2 infeasible

#ifdef _OPENMP
  const int threads = opts.threads > 0 ? opts.threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
#endif
  for (int r = 0; r < reps; ++r) {
    const auto k = static_cast<std::size_t>(r);
    ModelSpec rs = spec;
    rs.seed = substream_seed(opts.master_seed, static_cast<std::uint64_t>(r));
    try {
      const SimData sim = gen_dataset(rs);
      const TestResult res = run_test(sim.data, sim.truth.beta0(), opts.pipeline);
      t_stats[k] = res.t_stat;
      p_values[k] = res.p_value;
      gamma_nnz[k] = res.gamma_nnz;
      theta_nnz[k] = res.theta_nnz;
    } catch (const Error& e) {
      status[k] = e.code() == ErrorCode::Infeasible ? 2 : 1;
    }
  }

  RejectionReport rep;
  rep.spec = spec;
  rep.options = opts;
  rep.reps = reps;
  int ok = 0;
  double g_sum = 0.0, t_sum = 0.0;
  for (std::size_t k = 0; k < static_cast<std::size_t>(reps); ++k) {
    if (status[k] != 0) {
      ++rep.failures;
      if (status[k] == 2) ++rep.infeasible;
      continue;
    }
    ++ok;
    g_sum += gamma_nnz[k];
    t_sum += theta_nnz[k];
    if (p_values[k] < opts.alpha) ++rep.rejections;
  }
  rep.rejection_rate = static_cast<double>(rep.rejections) / reps;
  rep.monte_carlo_se = std::sqrt(rep.rejection_rate * (1.0 - rep.rejection_rate) / reps);
  if (ok > 0) {
    rep.mean_gamma_nnz = g_sum / ok;
    rep.mean_theta_nnz = t_sum / ok;
  }
  rep.t_stats = std::move(t_stats);
  rep.p_values = std::move(p_values);
  return rep;
}

TestResult lm_baseline(const GroupedDataset& raw, double beta0, PipelineOptions opts) {
  opts.proxy = ProxyChoice::Zero;
  return run_test(raw, beta0, opts);
}

ModelSpec model_spec(int model) {
  ModelSpec m;
  switch (model) {
    case 1: break;
    case 2:
      m.q = 3;
      m.psi = Eigen::Vector3d(3.0, 3.0, 2.0).asDiagonal();
      break;
    case 3:
      m.design = {DesignKind::Banded, 0.3};
      m.j = 2;
      break;
    case 4: m.error = {ErrorLaw::StudentT, 10.0}; break;
    case 5: m.error = {ErrorLaw::StudentT, 3.0}; break;
    default: throw Error(ErrorCode::InvalidArgument, "models are numbered 1 to 5");
  }
  return m;
}

ModelSpec reduce(ModelSpec spec) {
  spec.n = 120;
  spec.p = 150;
  spec.N = 30;
  spec.group_sizes.clear();
  if (spec.s == 5) spec.s = 3;
  return spec;
}

namespace {

const std::vector<double> kHGrid{-6, -4, -2, 0, 2, 4, 6};

Scenario make(const std::string& model, const std::string& variant, ModelSpec spec, PipelineOptions po,
              bool reduced) {
  return {model, variant, reduced ? reduce(std::move(spec)) : std::move(spec), std::move(po)};
}

void h_sweep(std::vector<Scenario>& out, int model, const std::string& variant, const PipelineOptions& po,
             bool reduced) {
  for (double h : kHGrid) {
    ModelSpec m = model_spec(model);
    m.h = h;
    out.push_back(make("model" + std::to_string(model), variant, m, po, reduced));
  }
}

PipelineOptions with_proxy(ProxyChoice c) {
  PipelineOptions po;
  po.proxy = c;
  return po;
}

std::string scale_label(const TuningScale& s) {
  return "eta*" + fmt(s.eta) + ",mu*" + fmt(s.mu) + ",etabar*" + fmt(s.etabar);
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"model1", "model2", "model3", "model4", "model5", "table2", "table2-model1", "table2-model2",
          "table3", "table4"};
}

std::vector<Scenario> preset(std::string_view name, bool reduced) {
  std::vector<Scenario> out;
  const PipelineOptions mm = with_proxy(ProxyChoice::Default);
  const PipelineOptions lm = with_proxy(ProxyChoice::Zero);
  if (name == "model1" || name == "model2" || name == "model4" || name == "model5") {
    h_sweep(out, name.back() - '0', "MM", mm, reduced);
  } else if (name == "model3") {
    for (double rho : {0.1, 0.3, 0.5, 0.7}) {
      for (int s : {2, 3, 4, 5, 10}) {
        ModelSpec m = model_spec(3);
        m.design.rho = rho;
        m.s = s;
        Scenario sc = make("model3", "MM rho=" + fmt(rho) + " s=" + std::to_string(s), m, mm, reduced);
        sc.spec.s = s;
        out.push_back(std::move(sc));
      }
    }
  } else if (name == "table2" || name == "table2-model1" || name == "table2-model2") {
    for (int model : {1, 2}) {
      if (name == "table2-model1" && model != 1) continue;
      if (name == "table2-model2" && model != 2) continue;
      h_sweep(out, model, "LM", lm, reduced);
      h_sweep(out, model, "MM", mm, reduced);
    }
  } else if (name == "table3") {
    for (int model : {1, 2}) {
      h_sweep(out, model, "default", mm, reduced);
      h_sweep(out, model, "logn", with_proxy(ProxyChoice::LogN), reduced);
    }
  } else if (name == "table4") {
    for (auto [h, s] : {std::pair{0.0, 40}, std::pair{4.0, 5}}) {
      ModelSpec m = model_spec(1);
      m.h = h;
      m.s = s;
      for (double mu : {0.5, 1.0, 2.0}) {
        for (double eta : {0.5, 1.0, 2.0}) {
          PipelineOptions po = mm;
          po.scale = {eta, mu, 1.0};
          Scenario sc = make("model1", scale_label(po.scale), m, po, reduced);
          sc.spec.s = s;
          out.push_back(std::move(sc));
        }
      }
      for (double eb : {0.5, 2.0}) {
        PipelineOptions po = mm;
        po.scale = {1.0, 1.0, eb};
        Scenario sc = make("model1", scale_label(po.scale), m, po, reduced);
        sc.spec.s = s;
        out.push_back(std::move(sc));
      }
    }
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown preset '" + std::string(name) + "'");
  }
  return out;
}

}  // namespace lmminfer
