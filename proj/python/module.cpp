#include "lmminfer/errors.hpp"
#include "lmminfer/inference.hpp"
#include "lmminfer/simgen.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

namespace py = pybind11;
using namespace lmminfer;

namespace {

// Rows must already be stacked group by group. W defaults to a random
// intercept; otherwise it is an n x q matrix split along the groups.
GroupedDataset make_dataset(const VectorXd& y, const MatrixXd& x, const MatrixXd& z, const std::vector<int>& groups,
                            const std::optional<MatrixXd>& w) {
  GroupedDataset d;
  d.y = y;
  d.X = x;
  d.Z = z;
  d.groups = groups;
  int total = 0;
  for (int g : groups) total += g;
  if (total != y.size()) throw Error(ErrorCode::LayoutMismatch, "group sizes do not add up to len(y)");
  d.q = w ? static_cast<int>(w->cols()) : 1;
  if (w && w->rows() != y.size()) throw Error(ErrorCode::LayoutMismatch, "W needs one row per observation");
  int row = 0;
  for (int g : groups) {
    d.W.push_back(w ? MatrixXd(w->middleRows(row, g)) : MatrixXd::Ones(g, 1));
    row += g;
  }
  d.validate();
  return d;
}

PipelineOptions pipeline(const std::string& proxy, const std::string& alternative, bool auto_relax) {
  PipelineOptions o;
  o.proxy = parse_proxy_choice(proxy);
  o.alternative = parse_alternative(alternative);
  o.auto_relax = auto_relax;
  return o;
}

py::dict test_dict(const TestResult& r) {
  py::dict d;
  d["t_stat"] = r.t_stat;
  d["p_value"] = r.p_value;
  d["sigma_hat"] = r.sigma_hat;
  d["sigma_u_hat"] = r.sigma_u_hat;
  d["beta0"] = r.beta0;
  d["alternative"] = std::string(to_string(r.alternative));
  d["gamma"] = r.gamma.coef;
  d["theta"] = r.theta.coef;
  d["gamma_nnz"] = r.gamma_nnz;
  d["theta_nnz"] = r.theta_nnz;
  d["proxy"] = r.proxy;
  d["notes"] = r.notes;
  return d;
}

ModelSpec spec_for(int model, bool reduced, double h, std::optional<int> n, std::optional<int> p,
                   std::optional<int> groups, std::optional<int> s, std::uint64_t seed) {
  ModelSpec m = model_spec(model);
  if (reduced) m = reduce(m);
  m.h = h;
  if (n) m.n = *n;
  if (p) m.p = *p;
  if (groups) {
    m.N = *groups;
    m.group_sizes.clear();
  }
  if (s) m.s = *s;
  m.seed = seed;
  m.validate();
  return m;
}

}  // namespace

PYBIND11_MODULE(_lmminfer, m) {
  m.doc() = "Single-coordinate tests and intervals for high-dimensional linear mixed models";

  // Messages start with the error code name, e.g. "SchemaError: ...".
  py::register_exception<Error>(m, "LmmInferError", PyExc_RuntimeError);

  m.def(
      "test",
      [](const VectorXd& y, const MatrixXd& x, const MatrixXd& z, const std::vector<int>& groups, double beta0,
         const std::optional<MatrixXd>& w, const std::string& proxy, const std::string& alternative, bool auto_relax) {
        const GroupedDataset d = make_dataset(y, x, z, groups, w);
        const PipelineOptions o = pipeline(proxy, alternative, auto_relax);
        TestResult r;
        {
          py::gil_scoped_release release;
          r = run_test(d, beta0, o);
        }
        return test_dict(r);
      },
      py::arg("y"), py::arg("x"), py::arg("z"), py::arg("groups"), py::arg("beta0") = 0.0, py::arg("w") = py::none(),
      py::arg("proxy") = "default", py::arg("alternative") = "two", py::arg("auto_relax") = false);

  m.def(
      "confidence_interval",
      [](const VectorXd& y, const MatrixXd& x, const MatrixXd& z, const std::vector<int>& groups, double alpha,
         const std::optional<MatrixXd>& w, const std::string& proxy,
         std::optional<std::pair<double, double>> bracket) {
        const GroupedDataset d = make_dataset(y, x, z, groups, w);
        const CiReport r = run_ci(d, alpha, pipeline(proxy, "two", false), bracket);
        py::dict out;
        out["lo"] = r.ci.lo;
        out["hi"] = r.ci.hi;
        out["center"] = r.ci.center;
        out["alpha"] = r.ci.alpha;
        out["evaluations"] = r.ci.evaluations;
        out["bracket"] = r.bracket;
        return out;
      },
      py::arg("y"), py::arg("x"), py::arg("z"), py::arg("groups"), py::arg("alpha") = 0.05, py::arg("w") = py::none(),
      py::arg("proxy") = "default", py::arg("bracket") = py::none());

  m.def(
      "generate",
      [](int model, bool reduced, double h, std::optional<int> n, std::optional<int> p, std::optional<int> groups,
         std::optional<int> s, std::uint64_t seed) {
        const SimData sim = gen_dataset(spec_for(model, reduced, h, n, p, groups, s, seed));
        MatrixXd w(sim.data.n(), sim.data.q);
        int row = 0;
        for (const auto& b : sim.data.W) {
          w.middleRows(row, b.rows()) = b;
          row += static_cast<int>(b.rows());
        }
        py::dict out;
        out["y"] = sim.data.y;
        out["x"] = sim.data.X;
        out["z"] = sim.data.Z;
        out["w"] = w;
        out["groups"] = sim.data.groups;
        out["design"] = sim.design;
        out["beta"] = sim.truth.beta;
        out["beta0"] = sim.truth.beta0();
        out["tested"] = sim.truth.tested;
        return out;
      },
      py::arg("model") = 1, py::arg("reduced") = false, py::arg("h") = 0.0, py::arg("n") = py::none(),
      py::arg("p") = py::none(), py::arg("groups") = py::none(), py::arg("s") = py::none(), py::arg("seed") = 1);

  m.def(
      "simulate",
      [](int model, int reps, bool reduced, double h, const std::string& proxy, std::uint64_t seed, int threads,
         std::optional<int> n, std::optional<int> p, std::optional<int> groups, std::optional<int> s) {
        const ModelSpec spec = spec_for(model, reduced, h, n, p, groups, s, 1);
        McOptions o;
        o.reps = reps;
        o.master_seed = seed;
        o.threads = threads;
        o.pipeline.proxy = parse_proxy_choice(proxy);
        RejectionReport r;
        {
          py::gil_scoped_release release;
          r = monte_carlo(spec, o);
        }
        py::dict out;
        out["rate"] = r.rejection_rate;
        out["se"] = r.monte_carlo_se;
        out["rejections"] = r.rejections;
        out["reps"] = r.reps;
        out["failures"] = r.failures;
        out["t_stats"] = r.t_stats;
        out["p_values"] = r.p_values;
        return out;
      },
      py::arg("model") = 1, py::arg("reps") = 100, py::arg("reduced") = true, py::arg("h") = 0.0,
      py::arg("proxy") = "default", py::arg("seed") = 1, py::arg("threads") = 0, py::arg("n") = py::none(),
      py::arg("p") = py::none(), py::arg("groups") = py::none(), py::arg("s") = py::none());

  m.def(
      "power",
      [](double h, double alpha, double sigma_u, double sigma_eps, double trace_proxy, double trace_sandwich) {
        PowerQuery q{h, alpha, sigma_u, sigma_eps, trace_proxy, trace_sandwich};
        return power_curve(q);
      },
      py::arg("h"), py::arg("alpha") = 0.05, py::arg("sigma_u") = 1.0, py::arg("sigma_eps") = 1.0,
      py::arg("trace_proxy") = 1.0, py::arg("trace_sandwich") = 1.0);

  m.def(
      "ci_halfwidth",
      [](double alpha, double slope, int n) {
        const HalfWidth hw = ci_halfwidth(alpha, slope, n);
        return py::make_tuple(hw.h_alpha, hw.half_width);
      },
      py::arg("alpha"), py::arg("slope"), py::arg("n"));

  m.def("p_value", [](double t, const std::string& alt) { return p_value(t, parse_alternative(alt)); },
        py::arg("t"), py::arg("alternative") = "two");
}
