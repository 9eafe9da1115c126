#include "stackd/sequential.hpp"

#include "stackd/numeric.hpp"
#include "stackd/simplex_solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace stackd::sequential {

namespace {

constexpr std::size_t kBlockIterations = 500;

void check_matrix(const PrequentialMatrix& m) {
  if (m.horizon < 1) throw Error(ErrorKind::invalid_argument, "prequential: horizon must be >= 1");
  m.as_density_matrix().validate();
}

}  // namespace

weights::LooDensityMatrix PrequentialMatrix::as_density_matrix() const {
  weights::LooDensityMatrix d;
  d.logdens = logdens;
  d.model_ids = model_ids;
  return d;
}

weights::StackingResult static_prequential_weights(const PrequentialMatrix& m,
                                                   const weights::StackingConfig& cfg) {
  check_matrix(m);
  return weights::stacking_weights(m.as_density_matrix(), cfg);
}

PrequentialDensities psis_prequential(const psis::LogLikDrawMatrix& m) {
  m.validate();
  const Eigen::Index s = m.values.rows();
  const Eigen::Index t_count = m.values.cols();

  // future(s, t) = sum_{u >= t} loglik(s, u)
  Eigen::MatrixXd future(s, t_count);
  future.col(t_count - 1) = m.values.col(t_count - 1);
  for (Eigen::Index t = t_count - 2; t >= 0; --t) future.col(t) = future.col(t + 1) + m.values.col(t);

  PrequentialDensities out;
  out.log_pred.resize(static_cast<std::size_t>(t_count));
  out.fits.resize(static_cast<std::size_t>(t_count));
  parallel_for(static_cast<std::size_t>(t_count), [&](std::size_t t) {
    const auto ti = static_cast<Eigen::Index>(t);
    std::vector<double> ratios(static_cast<std::size_t>(s));
    std::vector<double> ll(static_cast<std::size_t>(s));
    for (Eigen::Index d = 0; d < s; ++d) {
      ratios[static_cast<std::size_t>(d)] = -future(d, ti);
      ll[static_cast<std::size_t>(d)] = m.values(d, ti);
    }
    psis::SmoothedWeights sw = psis::psis_smooth(ratios, m.r_eff_at(t));
    out.log_pred[t] = psis::weighted_log_mean(sw.log_weights, ll);
    out.fits[t] = sw.fit;
  });
  out.refit.resize(out.fits.size());
  for (std::size_t t = 0; t < out.fits.size(); ++t) out.refit[t] = out.fits[t].grade == psis::KhatGrade::bad;
  return out;
}

double penalized_objective(const PrequentialMatrix& m, const Eigen::MatrixXd& path, double tau) {
  if (path.rows() != m.logdens.rows() || path.cols() != m.logdens.cols()) {
    throw Error(ErrorKind::dimension_mismatch, "penalized objective: path shape differs from matrix");
  }
  double f = 0.0;
  std::vector<double> logw(m.models()), row(m.models());
  for (Eigen::Index t = 0; t < path.rows(); ++t) {
    for (std::size_t k = 0; k < m.models(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      logw[k] = path(t, kk) > 0.0 ? std::log(path(t, kk)) : kNegInf;
      row[k] = m.logdens(t, kk);
    }
    f += log_sum_exp(logw, row);
    if (t > 0) f -= tau * (path.row(t) - path.row(t - 1)).squaredNorm();
  }
  return f;
}

WeightPath time_varying_weights(const PrequentialMatrix& m, double tau, const weights::StackingConfig& cfg) {
  check_matrix(m);
  if (!(tau >= 0.0) || !std::isfinite(tau)) {
    throw Error(ErrorKind::invalid_argument, "time-varying weights: tau must be finite and >= 0");
  }
  const Eigen::Index t_count = m.logdens.rows();
  const Eigen::Index k = m.logdens.cols();

  WeightPath out;
  out.tau = tau;
  out.path.resize(t_count, k);

  if (tau == 0.0) {
    // Rows decouple; each maximizer is the per-time best vertex.
    for (Eigen::Index t = 0; t < t_count; ++t) {
      weights::LooDensityMatrix row;
      row.logdens = m.logdens.row(t);
      const SimplexWeights w = weights::pointwise_selection_weights(row);
      for (Eigen::Index j = 0; j < k; ++j) out.path(t, j) = w[static_cast<std::size_t>(j)];
    }
    out.objective = penalized_objective(m, out.path, tau);
    out.objective_trace.push_back(out.objective);
    return out;
  }

  const weights::StackingResult warm = static_prequential_weights(m, cfg);
  for (Eigen::Index t = 0; t < t_count; ++t) {
    for (Eigen::Index j = 0; j < k; ++j) out.path(t, j) = warm.weights[static_cast<std::size_t>(j)];
  }
  double current = penalized_objective(m, out.path, tau);
  out.objective_trace.push_back(current);
  if (k == 1) {
    out.objective = current;
    return out;
  }

  // Row-shifted densities for the block objectives.
  Eigen::MatrixXd p(t_count, k);
  Eigen::VectorXd row_max(t_count);
  for (Eigen::Index t = 0; t < t_count; ++t) {
    row_max[t] = m.logdens.row(t).maxCoeff();
    if (row_max[t] == kNegInf) {
      std::ostringstream os;
      os << "time-varying weights: time " << t + 1 << " has -inf log density under every model";
      throw Error(ErrorKind::infeasible, os.str());
    }
    for (Eigen::Index j = 0; j < k; ++j) p(t, j) = std::exp(m.logdens(t, j) - row_max[t]);
  }

  const auto solve_block = [&](Eigen::Index t) {
    const bool has_prev = t > 0;
    const bool has_next = t + 1 < t_count;
    const Eigen::VectorXd prev = has_prev ? Eigen::VectorXd(out.path.row(t - 1).transpose()) : Eigen::VectorXd();
    const Eigen::VectorXd next = has_next ? Eigen::VectorXd(out.path.row(t + 1).transpose()) : Eigen::VectorXd();
    const SimplexObjective block = [&](std::span<const double> w, std::span<double> grad) {
      double mix = 0.0;
      for (Eigen::Index j = 0; j < k; ++j) mix += w[j] * p(t, j);
      if (!(mix > 0.0)) return kNegInf;
      double f = row_max[t] + std::log(mix);
      for (Eigen::Index j = 0; j < k; ++j) {
        double g = p(t, j) / mix;
        if (has_prev) {
          f -= tau * (w[j] - prev[j]) * (w[j] - prev[j]);
          g -= 2.0 * tau * (w[j] - prev[j]);
        }
        if (has_next) {
          f -= tau * (w[j] - next[j]) * (w[j] - next[j]);
          g -= 2.0 * tau * (w[j] - next[j]);
        }
        grad[j] = g;
      }
      return f;
    };
    std::vector<double> start(static_cast<std::size_t>(k));
    for (Eigen::Index j = 0; j < k; ++j) start[static_cast<std::size_t>(j)] = out.path(t, j);
    const SimplexSolve r = maximize_on_simplex(block, start, cfg.pinned, cfg.reltol, kBlockIterations);
    for (Eigen::Index j = 0; j < k; ++j) out.path(t, j) = r.w[static_cast<std::size_t>(j)];
  };

  out.converged = false;
  for (std::size_t sweep = 0; sweep < cfg.max_iter; ++sweep) {
    const Eigen::MatrixXd before = out.path;
    if (sweep % 2 == 0) {
      for (Eigen::Index t = 0; t < t_count; ++t) solve_block(t);
    } else {
      for (Eigen::Index t = t_count - 1; t >= 0; --t) solve_block(t);
    }
    double updated = penalized_objective(m, out.path, tau);
    if (updated < current) {
      // Rounding in a block solve; keep the previous iterate.
      out.path = before;
      updated = current;
    }
    out.objective_trace.push_back(updated);
    out.sweeps = sweep + 1;
    const double change = updated - current;
    current = updated;
    if (change <= cfg.reltol * (std::abs(current) + cfg.reltol)) {
      out.converged = true;
      break;
    }
  }
  out.objective = current;
  return out;
}

}  // namespace stackd::sequential
