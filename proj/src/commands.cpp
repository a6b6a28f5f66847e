#include "lmminfer/commands.hpp"

#include "lmminfer/io.hpp"
#include "lmminfer/simgen.hpp"

#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace lmminfer {

namespace {

using Json = nlohmann::ordered_json;

std::string join(const std::vector<std::string>& v, char sep = ',') {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

std::string scalar_text(const Json& v) {
  if (v.is_number_float()) return format_double(v.get<double>());
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return "";
  return v.dump();
}

// key=value lines; nested objects use dotted keys, arrays of scalars are
// comma-joined and arrays of objects are indexed.
void render_text(std::ostream& out, const Json& j, const std::string& prefix) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    const Json& v = it.value();
    if (v.is_object()) {
      render_text(out, v, key);
    } else if (v.is_array() && !v.empty() && v.front().is_object()) {
      for (std::size_t i = 0; i < v.size(); ++i) render_text(out, v[i], key + "." + std::to_string(i));
    } else if (v.is_array()) {
      std::vector<std::string> parts;
      for (const auto& e : v) parts.push_back(scalar_text(e));
      out << key << '=' << join(parts) << '\n';
    } else {
      out << key << '=' << scalar_text(v) << '\n';
    }
  }
}

void emit(std::ostream& out, const RunConfig& cfg, const Json& report) {
  if (cfg.format == "json") {
    out << report.dump(2) << '\n';
  } else {
    render_text(out, report, "");
  }
}

Json config_json(const RunConfig& c) {
  Json j;
  j["command"] = c.command;
  if (!c.input.empty()) j["input"] = c.input;
  if (!c.test_cols.empty()) j["test_col"] = join(c.test_cols);
  j["group_col"] = c.group_col;
  j["y_col"] = c.y_col;
  j["random_effects"] = c.random_cols.empty() ? std::string("intercept") : join(c.random_cols);
  j["beta0"] = c.beta0;
  j["alt"] = c.alternative;
  j["alpha"] = c.alpha;
  j["proxy"] = c.proxy;
  j["tuning_scale"] = format_double(c.scale.eta) + ":" + format_double(c.scale.mu) + ":" +
                      format_double(c.scale.etabar);
  j["auto_relax"] = c.auto_relax;
  j["seed"] = c.seed;
  if (c.command == "simulate") j["reps"] = c.reps;
  if (c.command == "mtest") j["bootstrap_reps"] = c.bootstrap_reps;
  if (c.command == "test") j["family"] = c.family;
  if (c.bracket) j["bracket"] = {c.bracket->first, c.bracket->second};
  return j;
}

Json tuning_json(const TuningParams& t) {
  return {{"eta_gamma", t.eta_gamma},         {"etabar_gamma", t.etabar_gamma}, {"mu_gamma", t.mu_gamma},
          {"eta_theta", t.eta_theta},         {"eta_theta_prime", t.eta_theta_prime},
          {"etabar_theta", t.etabar_theta},   {"mu_theta", t.mu_theta}};
}

Json solver_json(const EstimateResult& e) {
  Json j;
  j["status"] = std::string(to_string(e.solver_status));
  j["iterations"] = e.iterations;
  j["l1_norm"] = e.l1_norm;
  if (!e.binding_families.empty()) j["binding"] = e.binding_families;
  return j;
}

GroupedDataset load(const RunConfig& cfg) {
  CsvLayout layout;
  layout.group_col = cfg.group_col;
  layout.y_col = cfg.y_col;
  layout.test_cols = cfg.test_cols;
  layout.random_cols = cfg.random_cols;
  return dataset_from_csv(read_csv_file(cfg.input), layout);
}

PipelineOptions pipeline_of(const RunConfig& cfg) {
  PipelineOptions po;
  po.alternative = parse_alternative(cfg.alternative);
  po.proxy = parse_proxy_choice(cfg.proxy);
  po.scale = cfg.scale;
  po.auto_relax = cfg.auto_relax;
  return po;
}

void require_single(const RunConfig& cfg) {
  if (cfg.test_cols.size() != 1) throw Error(ErrorCode::InvalidArgument, cfg.command + " needs exactly one --test-col");
}

Json data_json(const GroupedDataset& d) {
  return {{"n", d.n()}, {"groups", d.num_groups()}, {"nuisance_columns", d.num_nuisance()}, {"q", d.q}};
}

int cmd_test(const RunConfig& cfg, std::ostream& out) {
  require_single(cfg);
  const GroupedDataset raw = load(cfg);
  const PipelineOptions po = pipeline_of(cfg);
  const ExponentialFamily family = ExponentialFamily::parse(cfg.family);
  const TestResult r = run_glmm_test(raw, cfg.beta0, family, po);
  Json rep;
  rep["config"] = config_json(cfg);
  rep["data"] = data_json(raw);
  rep["t_stat"] = r.t_stat;
  rep["p_value"] = r.p_value;
  rep["alternative"] = std::string(to_string(r.alternative));
  rep["beta0"] = cfg.beta0;
  rep["sigma_hat"] = r.sigma_hat;
  rep["sigma_u_hat"] = r.sigma_u_hat;
  rep["gamma_nnz"] = r.gamma_nnz;
  rep["theta_nnz"] = r.theta_nnz;
  rep["proxy_m"] = r.proxy;
  rep["tuning"] = tuning_json(r.tuning);
  rep["relaxations"] = {{"gamma", r.gamma_relaxations}, {"theta", r.theta_relaxations}};
  rep["solver"] = {{"gamma", solver_json(r.gamma)}, {"theta", solver_json(r.theta)}};
  if (!r.notes.empty()) rep["notes"] = r.notes;
  emit(out, cfg, rep);
  return kExitOk;
}

int cmd_ci(const RunConfig& cfg, std::ostream& out) {
  require_single(cfg);
  const GroupedDataset raw = load(cfg);
  const CiReport r = run_ci(raw, cfg.alpha, pipeline_of(cfg), cfg.bracket);
  Json rep;
  rep["config"] = config_json(cfg);
  rep["data"] = data_json(raw);
  rep["lo"] = r.ci.lo;
  rep["hi"] = r.ci.hi;
  rep["center"] = r.ci.center;
  rep["alpha"] = r.ci.alpha;
  rep["evaluations"] = r.ci.evaluations;
  rep["bracket"] = {r.bracket.first, r.bracket.second};
  rep["tuning"] = tuning_json(r.theta_tuning);
  emit(out, cfg, rep);
  return kExitOk;
}

int cmd_mtest(const RunConfig& cfg, std::ostream& out) {
  if (cfg.test_cols.empty()) throw Error(ErrorCode::InvalidArgument, "mtest needs --test-col c1,c2,...");
  if (cfg.bootstrap_reps < 100) throw Error(ErrorCode::InvalidArgument, "--bootstrap-reps must be at least 100");
  const GroupedDataset raw = load(cfg);
  const PipelineOptions po = pipeline_of(cfg);
  const PreparedData prep = prepare(raw, po.proxy);
  const int d = static_cast<int>(prep.data.Z.cols());
  const VectorXd b0 = VectorXd::Constant(d, cfg.beta0);
  const TuningParams gt = apply_scale(default_gamma_tuning(prep.data, prep.proxy, b0), po.scale);
  std::vector<TuningParams> tt;
  for (int k = 0; k < d; ++k)
    tt.push_back(apply_scale(default_theta_tuning(prep.data.X, VectorXd(prep.data.Z.col(k))), po.scale));
  MultivariateOptions mo;
  mo.alpha = cfg.alpha;
  mo.reps = cfg.bootstrap_reps;
  mo.seed = cfg.seed;
  const BootstrapResult r = multivariate_test(prep.data, b0, prep.proxy, gt, tt, mo);
  Json rep;
  rep["config"] = config_json(cfg);
  rep["data"] = data_json(raw);
  rep["t_max"] = r.t_max;
  rep["quantile"] = r.quantile;
  rep["p_value"] = r.p_value;
  rep["reject"] = r.reject;
  rep["alpha"] = r.alpha;
  rep["bootstrap_reps"] = r.reps;
  rep["seed"] = r.seed;
  rep["sigma_hat"] = r.sigma_hat;
  Json coords = Json::array();
  for (int k = 0; k < d; ++k) {
    const CoordinateStat& c = r.per_coordinate[static_cast<std::size_t>(k)];
    coords.push_back({{"name", cfg.test_cols[static_cast<std::size_t>(k)]},
                      {"t_stat", c.t_stat},
                      {"p_value", c.p_value},
                      {"sigma_u_hat", c.sigma_u_hat},
                      {"theta_nnz", c.theta_nnz}});
  }
  rep["coordinates"] = coords;
  rep["tuning_gamma"] = {{"eta_gamma", gt.eta_gamma}, {"etabar_gamma", gt.etabar_gamma}, {"mu_gamma", gt.mu_gamma}};
  Json tt_json = Json::array();
  for (const auto& t : tt)
    tt_json.push_back({{"eta_theta", t.eta_theta},
                       {"eta_theta_prime", t.eta_theta_prime},
                       {"etabar_theta", t.etabar_theta},
                       {"mu_theta", t.mu_theta}});
  rep["tuning_theta"] = tt_json;
  emit(out, cfg, rep);
  return kExitOk;
}

void apply_overrides(ModelSpec& m, const RunConfig& cfg) {
  if (cfg.n) m.n = *cfg.n;
  if (cfg.p) m.p = *cfg.p;
  if (cfg.groups) {
    m.N = *cfg.groups;
    m.group_sizes.clear();
  }
  if (cfg.s) m.s = *cfg.s;
  if (cfg.j) m.j = *cfg.j;
  if (cfg.h) m.h = *cfg.h;
  if (cfg.rho) m.design.rho = *cfg.rho;
  if (cfg.df) {
    m.error.law = ErrorLaw::StudentT;
    m.error.df = *cfg.df;
  }
}

std::string error_label(const ErrorSpec& e) {
  return e.law == ErrorLaw::Gaussian ? std::string("gaussian") : "t(" + format_double(e.df) + ")";
}

int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  std::vector<Scenario> scenarios;
  if (!cfg.preset.empty()) {
    scenarios = preset(cfg.preset, cfg.reduced);
  } else {
    ModelSpec m = model_spec(cfg.model);
    if (cfg.reduced) m = reduce(m);
    scenarios.push_back({"model" + std::to_string(cfg.model), cfg.proxy, m, pipeline_of(cfg)});
  }
  for (auto& sc : scenarios) apply_overrides(sc.spec, cfg);

  Json rows = Json::array();
  for (std::size_t k = 0; k < scenarios.size(); ++k) {
    const Scenario& sc = scenarios[k];
    McOptions mo;
    mo.alpha = cfg.alpha;
    mo.reps = cfg.reps;
    mo.master_seed = cfg.seed;
    mo.threads = cfg.threads;
    mo.pipeline = sc.pipeline;
    err << "[" << k + 1 << "/" << scenarios.size() << "] " << sc.model << ' ' << sc.variant
        << " h=" << format_double(sc.spec.h) << std::endl;
    const RejectionReport r = monte_carlo(sc.spec, mo);
    rows.push_back({{"model", sc.model},
                    {"variant", sc.variant},
                    {"n", sc.spec.n},
                    {"p", sc.spec.p},
                    {"N", sc.spec.N},
                    {"s", sc.spec.s},
                    {"j", sc.spec.j},
                    {"design", describe(sc.spec.design)},
                    {"errors", error_label(sc.spec.error)},
                    {"h", sc.spec.h},
                    {"proxy", std::string(to_string(sc.pipeline.proxy))},
                    {"eta_mult", sc.pipeline.scale.eta},
                    {"mu_mult", sc.pipeline.scale.mu},
                    {"etabar_mult", sc.pipeline.scale.etabar},
                    {"reps", r.reps},
                    {"rejections", r.rejections},
                    {"rate", r.rejection_rate},
                    {"se", r.monte_carlo_se},
                    {"failures", r.failures},
                    {"infeasible", r.infeasible},
                    {"mean_gamma_nnz", r.mean_gamma_nnz},
                    {"mean_theta_nnz", r.mean_theta_nnz}});
  }

  Json config = config_json(cfg);
  if (!cfg.preset.empty()) config["preset"] = cfg.preset;
  config["reduced"] = cfg.reduced;
  config["threads"] = cfg.threads;
  if (cfg.format == "json") {
    out << Json{{"config", config}, {"rows", rows}}.dump(2) << '\n';
    return kExitOk;
  }
  for (auto it = config.begin(); it != config.end(); ++it) out << "# " << it.key() << '=' << scalar_text(it.value()) << '\n';
  bool first = true;
  for (const auto& row : rows) {
    if (first) {
      std::vector<std::string> head;
      for (auto it = row.begin(); it != row.end(); ++it) head.push_back(it.key());
      out << join(head, '\t') << '\n';
      first = false;
    }
    std::vector<std::string> cells;
    for (const auto& v : row) cells.push_back(scalar_text(v));
    out << join(cells, '\t') << '\n';
  }
  return kExitOk;
}

int cmd_generate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  ModelSpec m = model_spec(cfg.model);
  if (cfg.reduced) m = reduce(m);
  apply_overrides(m, cfg);
  m.seed = cfg.seed;
  const SimData sim = gen_dataset(m);
  write_design_csv(out, sim.data.y, sim.design, sim.data.groups);
  std::vector<std::string> wcols;
  for (int k = 1; k <= m.q; ++k) wcols.push_back("x" + std::to_string(k));
  err << "test-col=x" << m.j << '\n'
      << "beta0=" << format_double(sim.truth.beta0()) << '\n'
      << "random-cols=" << join(wcols) << '\n'
      << "# model=" << cfg.model << " h=" << format_double(m.h) << " seed=" << m.seed << '\n';
  return kExitOk;
}

int dispatch(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.command == "test") return cmd_test(cfg, out);
  if (cfg.command == "ci") return cmd_ci(cfg, out);
  if (cfg.command == "mtest") return cmd_mtest(cfg, out);
  if (cfg.command == "simulate") return cmd_simulate(cfg, out, err);
  if (cfg.command == "generate") return cmd_generate(cfg, out, err);
  throw Error(ErrorCode::InvalidArgument, "unknown command '" + cfg.command + "'");
}

}  // namespace

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::LayoutMismatch:
    case ErrorCode::Schema:
    case ErrorCode::Io:
    case ErrorCode::SparsityOverflow:
    case ErrorCode::NotPositiveDefinite:
      return kExitInput;
    case ErrorCode::Infeasible: return kExitInfeasible;
    case ErrorCode::NoSignChange: return kExitNoCrossing;
    case ErrorCode::ZeroColumn:
    case ErrorCode::SingularBlock:
    case ErrorCode::NonPD:
    case ErrorCode::DegenerateScale:
    case ErrorCode::CollinearZ:
    case ErrorCode::DegenerateVariance:
    case ErrorCode::SingularSubmatrix:
    case ErrorCode::ProxyNotInvertible:
      return kExitDegenerate;
    case ErrorCode::IterationLimit:
    case ErrorCode::Unbounded:
    case ErrorCode::NotConverged:
      return kExitNumerical;
  }
  return kExitNumerical;
}

TuningScale parse_tuning_scale(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ':')) v.push_back(parse_double(part));
  if (v.size() != 3 || !(v[0] > 0 && v[1] > 0 && v[2] > 0))
    throw Error(ErrorCode::InvalidArgument, "--tuning-scale expects three positive multipliers eta:mu:etabar");
  return {v[0], v[1], v[2]};
}

void RunConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::InvalidArgument, m); };
  if (!(alpha > 0.0 && alpha < 1.0)) bad("--alpha must lie in (0, 1)");
  if (format != "text" && format != "json") bad("--format must be text or json");
  if (reps < 1) bad("--reps must be positive");
  if (threads < 0) bad("--threads must be non-negative");
  const bool needs_input = command == "test" || command == "ci" || command == "mtest";
  if (needs_input && input.empty()) bad(command + " needs --input");
  parse_alternative(alternative);
  parse_proxy_choice(proxy);
  if (bracket && !(bracket->first <= bracket->second)) bad("--bracket needs lo <= hi");
}

int run_command(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    cfg.validate();
    // Buffer the report so that nothing is written when a command fails.
    std::ostringstream buf;
    const int code = dispatch(cfg, buf, err);
    if (cfg.output.empty()) {
      out << buf.str();
    } else {
      std::ofstream f(cfg.output);
      if (!f) throw Error(ErrorCode::Io, "cannot write '" + cfg.output + "'");
      f << buf.str();
    }
    return code;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    if (e.code() == ErrorCode::Infeasible && !cfg.auto_relax) err << "hint: rerun with --auto-relax\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace lmminfer
