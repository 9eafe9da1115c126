#include "stackd/cli.hpp"
#include "stackd/numeric.hpp"
#include "stackd/sequential.hpp"
#include "stackd/simlab.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace stackd::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

const char* version() { return STACKD_VERSION; }

namespace {

struct WeightsFlags {
  std::string manifest;
  std::string method = "stacking";
  double reltol = 1e-10;
  std::uint64_t seed = 0;
  std::size_t bootstrap_b = 1000;
  std::string output;
  std::string format = "json";
  std::string log_marginal;
  bool header = false;
};

struct SequentialFlags {
  std::string manifest;
  double tau = 1.0;
  std::size_t horizon = 1;
  double reltol = 1e-10;
  std::uint64_t seed = 0;
  std::string output;
  std::string format = "json";
  bool header = false;
};

struct SimlabFlags {
  std::string config;
  std::string output;
};

struct Outcome {
  std::string text;
  bool converged = true;
};

ojson preamble(const std::string& command) {
  ojson j;
  j["schema_version"] = kSchemaVersion;
  j["tool"] = "stackd";
  j["version"] = version();
  j["command"] = command;
  return j;
}

ojson numbers(std::span<const double> v) {
  ojson a = ojson::array();
  for (double x : v) a.push_back(x);
  return a;
}

ojson numbers(const SimplexWeights& w) { return numbers(w.span()); }

std::string csv_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct LooSummary {
  weights::LooDensityMatrix densities;
  std::vector<psis::ElpdReport> reports;
};

LooSummary loo_for(const ModelSet& set) {
  LooSummary s;
  if (!set.has_draws()) {
    s.densities = set.densities;
    for (std::size_t k = 0; k < set.densities.models(); ++k) {
      const auto col = set.densities.logdens.col(static_cast<Eigen::Index>(k));
      s.reports.push_back(psis::summarize_pointwise({col.begin(), col.end()}, {}));
    }
    return s;
  }
  std::vector<std::vector<double>> cols;
  std::vector<std::string> ids;
  for (const auto& d : set.draws) {
    psis::LooResult r = psis::psis_loo(d);
    cols.push_back(r.loo);
    ids.push_back(d.model_id);
    s.reports.push_back(std::move(r.report));
  }
  s.densities = weights::from_columns(cols, ids);
  return s;
}

ojson model_entry(const std::string& id, double weight, const psis::ElpdReport& r) {
  ojson m;
  m["model_id"] = id;
  m["weight"] = weight;
  m["elpd_loo"] = r.total;
  m["se"] = r.se;
  std::size_t counts[3] = {0, 0, 0};
  ojson ks = ojson::array();
  ojson grades = ojson::array();
  for (const auto& f : r.khats) {
    ++counts[static_cast<int>(f.grade)];
    ks.push_back(f.khat);
    grades.push_back(psis::to_string(f.grade));
  }
  m["khat_counts"] = {{"good", counts[0]}, {"ok", counts[1]}, {"bad", counts[2]}};
  m["pareto_k"] = ks;
  m["khat_grades"] = grades;
  ojson warnings = ojson::array();
  for (const auto& w : r.warnings) warnings.push_back(w);
  m["warnings"] = warnings;
  return m;
}

Outcome cmd_weights(const WeightsFlags& f) {
  const Manifest manifest = read_manifest(f.manifest);
  if (f.method == "bma" && f.log_marginal.empty()) {
    throw Error(ErrorKind::invalid_argument, "--method bma needs --log-marginal");
  }
  const ModelSet set = ingest(manifest, f.header);
  const LooSummary loo = loo_for(set);
  const std::size_t k = loo.densities.models();

  ojson diagnostics;
  bool converged = true;
  SimplexWeights w = SimplexWeights::uniform(k);
  if (f.method == "stacking") {
    weights::StackingConfig cfg;
    cfg.reltol = f.reltol;
    cfg.seed = f.seed;
    const weights::StackingResult r = weights::stacking_weights(loo.densities, cfg);
    w = r.weights;
    converged = r.diagnostics.converged;
    diagnostics["objective"] = r.diagnostics.objective;
    diagnostics["iterations"] = r.diagnostics.iterations;
    diagnostics["grad_norm"] = r.diagnostics.grad_norm;
    diagnostics["converged"] = r.diagnostics.converged;
  } else if (f.method == "pseudobma") {
    w = weights::pseudo_bma(loo.reports);
  } else if (f.method == "pseudobma_plus") {
    weights::PseudoBmaPlusConfig cfg;
    cfg.replicates = f.bootstrap_b;
    cfg.seed = f.seed;
    w = weights::pseudo_bma_plus(loo.densities, cfg);
  } else if (f.method == "bma") {
    std::vector<double> logml = read_column(f.log_marginal, false);
    if (logml.size() != k) {
      std::ostringstream os;
      os << f.log_marginal << ": " << logml.size() << " log marginals for " << k << " models";
      throw Error(ErrorKind::dimension_mismatch, os.str());
    }
    w = weights::bma_weights({std::move(logml), SimplexWeights::uniform(k)});
  } else {
    w = weights::pointwise_selection_weights(loo.densities);
  }

  if (f.format == "csv") {
    std::ostringstream os;
    os << "model_id,weight,elpd_loo,se\n";
    for (std::size_t j = 0; j < k; ++j) {
      os << loo.densities.model_ids[j] << ',' << csv_number(w[j]) << ',' << csv_number(loo.reports[j].total) << ','
         << csv_number(loo.reports[j].se) << '\n';
    }
    return {os.str(), converged};
  }

  ojson j = preamble("weights");
  j["method"] = f.method;
  j["weights"] = numbers(w);
  ojson models = ojson::array();
  for (std::size_t m = 0; m < k; ++m) models.push_back(model_entry(loo.densities.model_ids[m], w[m], loo.reports[m]));
  j["models"] = models;
  j["diagnostics"] = diagnostics.is_null() ? ojson::object() : diagnostics;
  // File paths and encodings are left out so equivalent inputs give
  // identical reports.
  j["config"] = {{"method", f.method},         {"reltol", f.reltol},
                 {"seed", f.seed},             {"bootstrap_B", f.bootstrap_b},
                 {"n_obs", manifest.n_obs},    {"models", k},
                 {"input", set.has_draws() ? "draws" : "densities"}};
  return {dump_json(j), converged};
}

Outcome cmd_sequential(const SequentialFlags& f) {
  const Manifest manifest = read_manifest(f.manifest);
  if (!manifest.time_ordered) {
    throw Error(ErrorKind::invalid_argument, "sequential: manifest is not marked time_ordered");
  }
  if (!(f.tau >= 0.0) || !std::isfinite(f.tau)) throw Error(ErrorKind::invalid_argument, "--tau must be finite and >= 0");
  if (f.horizon < 1) throw Error(ErrorKind::invalid_argument, "--horizon must be >= 1");
  const ModelSet set = ingest(manifest, f.header);
  if (f.horizon > 1 && set.has_draws()) {
    throw Error(ErrorKind::invalid_argument, "--horizon > 1 needs windowed density_csv input");
  }

  sequential::PrequentialMatrix pm;
  pm.horizon = f.horizon;
  std::vector<std::vector<bool>> refit;
  if (set.has_draws()) {
    std::vector<std::vector<double>> cols;
    for (const auto& d : set.draws) {
      sequential::PrequentialDensities pd = sequential::psis_prequential(d);
      cols.push_back(std::move(pd.log_pred));
      refit.push_back(std::move(pd.refit));
      pm.model_ids.push_back(d.model_id);
    }
    pm.logdens = weights::from_columns(cols, pm.model_ids).logdens;
  } else {
    pm.logdens = set.densities.logdens;
    pm.model_ids = set.densities.model_ids;
  }

  weights::StackingConfig cfg;
  cfg.reltol = f.reltol;
  cfg.seed = f.seed;
  const weights::StackingResult stat = sequential::static_prequential_weights(pm, cfg);
  const sequential::WeightPath path = sequential::time_varying_weights(pm, f.tau, cfg);
  const bool converged = stat.diagnostics.converged && path.converged;
  const std::size_t k = pm.models();

  if (f.format == "csv") {
    std::ostringstream os;
    os << "t";
    for (const auto& id : pm.model_ids) os << ',' << id;
    os << '\n';
    for (Eigen::Index t = 0; t < path.path.rows(); ++t) {
      os << t + 1;
      for (Eigen::Index j = 0; j < path.path.cols(); ++j) os << ',' << csv_number(path.path(t, j));
      os << '\n';
    }
    return {os.str(), converged};
  }

  ojson j = preamble("sequential");
  j["method"] = "sequential";
  j["static_weights"] = numbers(stat.weights);
  ojson rows = ojson::array();
  for (Eigen::Index t = 0; t < path.path.rows(); ++t) {
    std::vector<double> row(k);
    for (std::size_t m = 0; m < k; ++m) row[m] = path.path(t, static_cast<Eigen::Index>(m));
    rows.push_back(numbers(row));
  }
  j["weight_path"] = rows;
  ojson models = ojson::array();
  for (std::size_t m = 0; m < k; ++m) {
    ojson e;
    e["model_id"] = pm.model_ids[m];
    e["static_weight"] = stat.weights[m];
    e["prequential_elpd"] = pm.logdens.col(static_cast<Eigen::Index>(m)).sum();
    ojson flags = ojson::array();
    if (!refit.empty()) {
      for (std::size_t t = 0; t < refit[m].size(); ++t) {
        if (refit[m][t]) flags.push_back(t + 1);
      }
    }
    e["refit_times"] = flags;
    models.push_back(e);
  }
  j["models"] = models;
  j["diagnostics"] = {{"objective", path.objective},
                      {"sweeps", path.sweeps},
                      {"converged", converged},
                      {"static_objective", stat.diagnostics.objective}};
  j["config"] = {{"tau", f.tau},   {"horizon", f.horizon},      {"reltol", f.reltol},
                 {"seed", f.seed}, {"n_obs", manifest.n_obs}, {"models", k}};
  return {dump_json(j), converged};
}

template <class T>
T param(const nlohmann::json& cfg, const char* key, T fallback) {
  return cfg.contains(key) ? cfg.at(key).get<T>() : fallback;
}

Outcome cmd_simlab(const SimlabFlags& f) {
  std::ifstream in(f.config);
  if (!in) throw Error(ErrorKind::io, "cannot open file: " + f.config);
  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, f.config + ": invalid JSON: " + e.what());
  }
  if (!cfg.is_object() || !cfg.contains("experiment") || !cfg["experiment"].is_string()) {
    throw Error(ErrorKind::invalid_argument, f.config + ": missing \"experiment\"");
  }
  const std::string name = cfg["experiment"].get<std::string>();
  const auto seed = param<std::uint64_t>(cfg, "seed", 0);

  ojson j = preamble("simlab");
  j["experiment"] = name;
  ojson records = ojson::array();
  ojson summary = ojson::object();
  try {
    if (name == "prior_sensitivity") {
      const auto rows = simlab::prior_sensitivity(seed, param<std::size_t>(cfg, "n", 50), param(cfg, "data_sd", 0.1),
                                                  param(cfg, "lik_sd", 1.0),
                                                  param(cfg, "prior_sds", std::vector<double>{10.0, 100.0, 1000.0}));
      for (const auto& r : rows) {
        records.push_back({{"prior_sd", r.prior_sd}, {"log_marginal", r.log_marginal}, {"ratio_to_first", r.ratio_to_first}});
      }
    } else if (name == "chisq_moments") {
      const auto rep = simlab::chisq_moments(seed, param<std::size_t>(cfg, "draws", 1'000'000),
                                             param(cfg, "gammas", std::vector<double>{2.0, 4.0, 8.0, 16.0, 32.0}),
                                             param(cfg, "sigma_ks", std::vector<double>{0.5, 1.0, 2.0, 4.0, 8.0}));
      for (const auto& r : rep.rows) {
        records.push_back({{"gamma", r.gamma},       {"sigma_k", r.sigma_k}, {"mean_closed", r.mean_closed},
                           {"sd_closed", r.sd_closed}, {"mean_mc", r.mean_mc}, {"sd_mc", r.sd_mc},
                           {"mean_se", r.mean_se},     {"sd_se", r.sd_se}});
      }
      summary["mean_exponent"] = numbers(rep.mean_exponent);
      summary["sd_exponent"] = numbers(rep.sd_exponent);
    } else if (name == "theorem2") {
      const simlab::Design d =
          simlab::regime_design(param(cfg, "offset", 10.0), param(cfg, "share_first", 0.7),
                                param<std::size_t>(cfg, "grid_points", 100), param(cfg, "spread", 1.5));
      const auto r = simlab::theorem2_experiment(d.specs, d.truth, {param(cfg, "margin", 10.0), param(cfg, "p0", 0.99)},
                                                 param(cfg, "order", 64));
      for (const auto& lb : simlab::local_best_map(d.specs, d.truth)) {
        records.push_back({{"x", lb.x}, {"best_model", lb.best + 1}, {"elpd_margin", lb.margin}});
      }
      summary = {{"stacking", numbers(r.stacking)},       {"local_best", numbers(r.local_best)},
                 {"l1_distance", r.l1_distance},          {"min_elpd_margin", r.min_elpd_margin},
                 {"measured_p0", r.measured_p0},          {"requested_margin", r.requested_margin},
                 {"requested_p0", r.requested_p0},        {"separated", r.separated}};
    } else if (name == "bma_recovery") {
      const double w1 = param(cfg, "first_weight", 0.3);
      const simlab::Design d = simlab::mixture_truth_design(w1);
      const auto s = simlab::population_stacking(d.specs, d.truth, param(cfg, "order", 64));
      records.push_back({{"model", 1}, {"truth_weight", w1}, {"stacking_weight", s.weights[0]}});
      records.push_back({{"model", 2}, {"truth_weight", 1.0 - w1}, {"stacking_weight", s.weights[1]}});
      summary = {{"quadrature_order", s.order}, {"objective", s.objective}};
    } else {
      throw Error(ErrorKind::invalid_argument,
                  "unknown experiment '" + name + "' (expected prior_sensitivity, chisq_moments, theorem2, bma_recovery)");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, f.config + ": bad parameter: " + e.what());
  }
  j["records"] = records;
  j["summary"] = summary;
  j["config"] = ojson::parse(cfg.dump());
  return {dump_json(j), true};
}

int emit(const Outcome& o, const std::string& output, std::ostream& out) {
  if (output.empty()) {
    out << o.text;
  } else {
    std::ofstream file(output, std::ios::binary);
    if (!file) throw Error(ErrorKind::io, "cannot write file: " + output);
    file << o.text;
  }
  return o.converged ? kExitOk : kExitNotConverged;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"stackd: stacking and related weights for Bayesian predictive distributions"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);

  WeightsFlags wf;
  auto* w = app.add_subcommand("weights", "LOO-based model weights from per-model log-likelihood draws");
  w->add_option("manifest", wf.manifest, "Manifest JSON")->required();
  w->add_option("--method", wf.method, "Weighting method")
      ->check(CLI::IsMember({"stacking", "pseudobma", "pseudobma_plus", "bma", "pointwise"}))
      ->capture_default_str();
  w->add_option("--reltol", wf.reltol, "Relative objective tolerance of the stacking solver")->capture_default_str();
  w->add_option("--seed", wf.seed, "Seed for restarts and the Bayesian bootstrap")->capture_default_str();
  w->add_option("--bootstrap-B", wf.bootstrap_b, "Bootstrap replicates for pseudobma_plus")->capture_default_str();
  w->add_option("--log-marginal", wf.log_marginal, "One log marginal likelihood per line, in manifest order (bma)");
  w->add_option("--output", wf.output, "Write the report here instead of standard output");
  w->add_option("--format", wf.format, "Report format")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
  w->add_flag("--header", wf.header, "CSV draw files start with a header line");

  SequentialFlags sf;
  auto* s = app.add_subcommand("sequential", "Prequential static and time-varying stacking weights");
  s->add_option("manifest", sf.manifest, "Manifest JSON (time_ordered must be true)")->required();
  s->add_option("--tau", sf.tau, "Smoothness penalty on the weight path")->capture_default_str();
  s->add_option("--horizon", sf.horizon, "Forecast horizon of windowed density input")->capture_default_str();
  s->add_option("--reltol", sf.reltol, "Relative objective tolerance")->capture_default_str();
  s->add_option("--seed", sf.seed, "Seed for solver restarts")->capture_default_str();
  s->add_option("--output", sf.output, "Write the report here instead of standard output");
  s->add_option("--format", sf.format, "Report format")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
  s->add_flag("--header", sf.header, "CSV draw files start with a header line");

  SimlabFlags lf;
  auto* l = app.add_subcommand("simlab", "Closed-form Gaussian experiments");
  l->add_option("config", lf.config, "Experiment config JSON")->required();
  l->add_option("--output", lf.output, "Write the records here instead of standard output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitInvalid;
  }

  try {
    if (w->parsed()) return emit(cmd_weights(wf), wf.output, out);
    if (s->parsed()) return emit(cmd_sequential(sf), sf.output, out);
    return emit(cmd_simlab(lf), lf.output, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
}

}  // namespace stackd::cli
