#include "stackd/weights.hpp"

#include "stackd/numeric.hpp"
#include "stackd/simplex_solver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace stackd::weights {

namespace {

/// Row-shifted densities: p(i, k) = exp(logdens(i, k) - max_k logdens(i, k)).
struct ShiftedDensities {
  Eigen::MatrixXd p;
  Eigen::VectorXd row_max;
};

ShiftedDensities shift_rows(const LooDensityMatrix& m) {
  ShiftedDensities s;
  const Eigen::Index n = m.logdens.rows();
  const Eigen::Index k = m.logdens.cols();
  s.p.resize(n, k);
  s.row_max.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = m.logdens.row(i).maxCoeff();
    if (mx == kNegInf) {
      std::ostringstream os;
      os << "stacking: observation " << i + 1 << " has -inf log density under every model";
      throw Error(ErrorKind::infeasible, os.str());
    }
    s.row_max[i] = mx;
    for (Eigen::Index j = 0; j < k; ++j) s.p(i, j) = std::exp(m.logdens(i, j) - mx);
  }
  return s;
}

double weighted_objective(const ShiftedDensities& s, std::span<const double> rho,
                          std::span<const double> w, std::span<double> grad) {
  const Eigen::Index n = s.p.rows();
  const Eigen::Index k = s.p.cols();
  double f = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (rho[i] == 0.0) continue;
    double mix = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) mix += w[j] * s.p(i, j);
    if (!(mix > 0.0)) return kNegInf;
    f += rho[i] * (s.row_max[i] + std::log(mix));
    if (!grad.empty()) {
      for (Eigen::Index j = 0; j < k; ++j) grad[j] += rho[i] * s.p(i, j) / mix;
    }
  }
  return f;
}

std::vector<double> uniform_rows(std::size_t n) {
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

void check_dims(const LooDensityMatrix& m, std::size_t k) {
  if (m.models() != k) {
    std::ostringstream os;
    os << "weights have length " << k << " but the matrix has " << m.models() << " models";
    throw Error(ErrorKind::dimension_mismatch, os.str());
  }
}

}  // namespace

void LooDensityMatrix::validate() const {
  if (logdens.rows() < 1 || logdens.cols() < 1) {
    throw Error(ErrorKind::invalid_argument, "density matrix: need n >= 1 and K >= 1");
  }
  if (!model_ids.empty() && model_ids.size() != models()) {
    throw Error(ErrorKind::dimension_mismatch, "density matrix: model id count differs from column count");
  }
  for (Eigen::Index j = 0; j < logdens.cols(); ++j) {
    for (Eigen::Index i = 0; i < logdens.rows(); ++i) {
      const double v = logdens(i, j);
      if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
        std::ostringstream os;
        os << "density matrix: invalid entry at row " << i + 1 << ", column " << j + 1;
        throw Error(ErrorKind::invalid_argument, os.str());
      }
    }
  }
}

LooDensityMatrix from_columns(const std::vector<std::vector<double>>& columns,
                              std::vector<std::string> model_ids) {
  if (columns.empty()) throw Error(ErrorKind::invalid_argument, "density matrix: no columns");
  const std::size_t n = columns.front().size();
  LooDensityMatrix m;
  m.logdens.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (columns[k].size() != n) {
      std::ostringstream os;
      os << "density matrix: column " << k + 1 << " has " << columns[k].size() << " rows, expected " << n;
      throw Error(ErrorKind::dimension_mismatch, os.str());
    }
    for (std::size_t i = 0; i < n; ++i) {
      m.logdens(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = columns[k][i];
    }
  }
  if (model_ids.empty()) {
    for (std::size_t k = 0; k < columns.size(); ++k) model_ids.push_back("model" + std::to_string(k + 1));
  }
  m.model_ids = std::move(model_ids);
  m.validate();
  return m;
}

double stacking_objective(const LooDensityMatrix& m, const SimplexWeights& w) {
  return stacking_objective(m, w, uniform_rows(m.rows()));
}

double stacking_objective(const LooDensityMatrix& m, const SimplexWeights& w,
                          std::span<const double> row_weights) {
  check_dims(m, w.size());
  if (row_weights.size() != m.rows()) {
    throw Error(ErrorKind::dimension_mismatch, "stacking objective: row weight count differs from rows");
  }
  std::vector<double> logw(w.size());
  for (std::size_t k = 0; k < w.size(); ++k) logw[k] = w[k] > 0.0 ? std::log(w[k]) : kNegInf;
  double f = 0.0;
  std::vector<double> row(m.models());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    if (row_weights[i] == 0.0) continue;
    for (std::size_t k = 0; k < m.models(); ++k) {
      row[k] = m.logdens(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    }
    f += row_weights[i] * log_sum_exp(logw, row);
  }
  return f;
}

StackingResult stacking_weights(const LooDensityMatrix& m, const StackingConfig& cfg) {
  return stacking_weights(m, uniform_rows(m.rows()), cfg);
}

StackingResult stacking_weights(const LooDensityMatrix& m, std::span<const double> row_weights,
                                const StackingConfig& cfg) {
  m.validate();
  if (!(cfg.reltol > 0.0)) throw Error(ErrorKind::invalid_argument, "stacking: reltol must be positive");
  if (row_weights.size() != m.rows()) {
    throw Error(ErrorKind::dimension_mismatch, "stacking: row weight count differs from rows");
  }
  const std::size_t k = m.models();
  if (cfg.pinned >= k) throw Error(ErrorKind::invalid_argument, "stacking: pinned index out of range");
  if (k == 1) {
    StackingResult r{SimplexWeights::vertex(1, 0), {}};
    r.diagnostics.objective = stacking_objective(m, r.weights, row_weights);
    return r;
  }

  const ShiftedDensities shifted = shift_rows(m);
  const SimplexObjective objective = [&](std::span<const double> w, std::span<double> grad) {
    return weighted_objective(shifted, row_weights, w, grad);
  };

  std::vector<SimplexSolve> runs;
  const std::size_t restarts = std::max<std::size_t>(1, cfg.restarts);
  for (std::size_t r = 0; r < restarts; ++r) {
    std::vector<double> start(k, 1.0 / static_cast<double>(k));
    if (r > 0) {
      Rng rng(splitmix64(cfg.seed ^ splitmix64(r)));
      double total = 0.0;
      for (double& v : start) total += (v = rng.exponential());
      for (double& v : start) v /= total;
    }
    runs.push_back(maximize_on_simplex(objective, start, cfg.pinned, cfg.reltol, cfg.max_iter));
  }

  double best = kNegInf;
  for (const auto& run : runs) best = std::max(best, run.objective);
  const double tie_tol = 1e-10 * std::max(1.0, std::abs(best));
  const SimplexSolve* chosen = nullptr;
  double chosen_norm = std::numeric_limits<double>::infinity();
  for (const auto& run : runs) {
    if (run.objective < best - tie_tol) continue;
    double norm = 0.0;
    for (double v : run.w) norm += v * v;
    if (norm < chosen_norm - 1e-12) {
      chosen = &run;
      chosen_norm = norm;
    }
  }

  StackingResult out{SimplexWeights(chosen->w), {}};
  out.diagnostics.objective = chosen->objective;
  out.diagnostics.grad_norm = chosen->grad_norm;
  out.diagnostics.converged = true;
  for (const auto& run : runs) {
    out.diagnostics.iterations += run.iterations;
    out.diagnostics.converged = out.diagnostics.converged && run.converged;
  }
  return out;
}

SimplexWeights pointwise_selection_weights(const LooDensityMatrix& m) {
  m.validate();
  const std::size_t n = m.rows();
  const std::size_t k = m.models();
  std::vector<double> counts(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = m.logdens.row(static_cast<Eigen::Index>(i));
    const double mx = row.maxCoeff();
    std::size_t ties = 0;
    for (std::size_t j = 0; j < k; ++j) ties += row[static_cast<Eigen::Index>(j)] == mx;
    for (std::size_t j = 0; j < k; ++j) {
      if (row[static_cast<Eigen::Index>(j)] == mx) counts[j] += 1.0 / static_cast<double>(ties);
    }
  }
  for (double& c : counts) c /= static_cast<double>(n);
  return SimplexWeights(std::move(counts));
}

SeparationResult separation_check(const LooDensityMatrix& m, double margin) {
  m.validate();
  if (m.models() < 2) throw Error(ErrorKind::invalid_argument, "separation check: need at least 2 models");
  if (!(margin > 0.0)) throw Error(ErrorKind::invalid_argument, "separation check: margin must be positive");
  SeparationResult r;
  r.separated.resize(m.rows());
  std::size_t count = 0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto row = m.logdens.row(static_cast<Eigen::Index>(i));
    Eigen::Index best = 0;
    const double mx = row.maxCoeff(&best);
    bool ok = mx > kNegInf;
    for (Eigen::Index j = 0; ok && j < row.size(); ++j) {
      if (j != best && !(mx - row[j] >= margin)) ok = false;
    }
    r.separated[i] = ok;
    count += ok;
  }
  r.fraction = static_cast<double>(count) / static_cast<double>(m.rows());
  return r;
}

SimplexWeights bma_weights(const LogMarginalVector& v) {
  if (v.logml.size() != v.prior.size()) {
    throw Error(ErrorKind::dimension_mismatch, "bma: log marginal and prior lengths differ");
  }
  std::vector<double> logpost(v.logml.size());
  for (std::size_t k = 0; k < logpost.size(); ++k) {
    if (!std::isfinite(v.logml[k])) {
      throw Error(ErrorKind::invalid_argument, "bma: log marginal likelihoods must be finite");
    }
    logpost[k] = v.prior[k] > 0.0 ? v.logml[k] + std::log(v.prior[k]) : kNegInf;
  }
  return SimplexWeights(softmax(logpost));
}

SimplexWeights pseudo_bma(std::span<const psis::ElpdReport> reports) {
  if (reports.empty()) throw Error(ErrorKind::invalid_argument, "pseudo-bma: no models");
  const std::size_t n = reports.front().pointwise.size();
  std::vector<double> totals;
  for (const auto& r : reports) {
    if (r.pointwise.size() != n) {
      throw Error(ErrorKind::dimension_mismatch, "pseudo-bma: models disagree on the number of observations");
    }
    totals.push_back(r.total);
  }
  return SimplexWeights(softmax(totals));
}

SimplexWeights pseudo_bma_plus(const LooDensityMatrix& m, const PseudoBmaPlusConfig& cfg) {
  m.validate();
  if (cfg.replicates < 1) throw Error(ErrorKind::invalid_argument, "pseudo-bma+: need at least one replicate");
  const std::size_t n = m.rows();
  const std::size_t k = m.models();
  std::vector<std::vector<double>> per_rep(cfg.replicates);

  parallel_for(cfg.replicates, [&](std::size_t b) {
    std::vector<double> pi(n, 1.0 / static_cast<double>(n));
    if (!cfg.uniform_bootstrap) {
      Rng rng(splitmix64(cfg.seed ^ splitmix64(b + 1)));
      double total = 0.0;
      for (double& v : pi) total += (v = rng.exponential());
      for (double& v : pi) v /= total;
    }
    std::vector<double> z(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double ld = m.logdens(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        acc += ld == kNegInf ? kNegInf : pi[i] * ld;
      }
      z[j] = static_cast<double>(n) * acc;
    }
    per_rep[b] = softmax(z);
  });

  std::vector<double> avg(k, 0.0);
  for (const auto& w : per_rep) {
    for (std::size_t j = 0; j < k; ++j) avg[j] += w[j];
  }
  for (double& v : avg) v /= static_cast<double>(cfg.replicates);
  return SimplexWeights(std::move(avg));
}

double pseudo_bayes_factor(const LooDensityMatrix& m, std::size_t k1, std::size_t k2) {
  if (k1 >= m.models() || k2 >= m.models()) {
    throw Error(ErrorKind::invalid_argument, "pseudo Bayes factor: model index out of range");
  }
  if (k1 == k2) return 0.0;
  return m.logdens.col(static_cast<Eigen::Index>(k1)).sum() - m.logdens.col(static_cast<Eigen::Index>(k2)).sum();
}

}  // namespace stackd::weights
