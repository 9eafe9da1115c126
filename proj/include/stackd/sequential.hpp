#pragma once

// Prequential stacking for time-ordered data.

#include "stackd/psis.hpp"
#include "stackd/weights.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <vector>

namespace stackd::sequential {

/// T x K matrix of log p(y_t | y_{<t}, M_k), or of windowed
/// log p(y_{t:t+m-1} | y_{<t}, M_k) when horizon m > 1. Windowing is the
/// caller's job; the horizon is carried along for reporting.
struct PrequentialMatrix {
  Eigen::MatrixXd logdens;
  std::size_t horizon = 1;
  std::vector<std::string> model_ids;

  std::size_t times() const { return static_cast<std::size_t>(logdens.rows()); }
  std::size_t models() const { return static_cast<std::size_t>(logdens.cols()); }
  weights::LooDensityMatrix as_density_matrix() const;
};

struct WeightPath {
  Eigen::MatrixXd path;  // T x K, each row on the simplex
  double tau = 0.0;
  double objective = 0.0;
  std::size_t sweeps = 0;
  bool converged = true;
  // Penalized objective after the warm start and after every sweep.
  std::vector<double> objective_trace;
};

weights::StackingResult static_prequential_weights(const PrequentialMatrix& m,
                                                   const weights::StackingConfig& cfg = {});

struct PrequentialDensities {
  std::vector<double> log_pred;  // log p(y_t | y_{<t})
  std::vector<bool> refit;       // khat > 0.7: the proposal should be refreshed
  std::vector<psis::ParetoTailFit> fits;
};

/// Approximate one-step-ahead densities from full-data posterior draws.
/// For time t the importance ratio of draw s is 1 / prod_{u >= t} p(y_u | theta^s),
/// which turns the full posterior into p(theta | y_{<t}). Columns of the draw
/// matrix must be in time order. Refit flags are advisory only.
PrequentialDensities psis_prequential(const psis::LogLikDrawMatrix& m);

/// sum_t log sum_k w_tk p_tk - tau * sum_{t>=2} ||w_t - w_{t-1}||^2
double penalized_objective(const PrequentialMatrix& m, const Eigen::MatrixXd& path, double tau);

/// Time-varying stacking weights with a squared-l2 smoothness penalty.
///
/// tau = 0 decouples the rows; each row is then the vertex of its best
/// model (equal split on ties). For tau > 0 the path is warm-started at the
/// static stacking weights and refined by block coordinate ascent over rows,
/// alternating sweep direction, until the relative change of the penalized
/// objective falls below cfg.reltol.
WeightPath time_varying_weights(const PrequentialMatrix& m, double tau,
                                const weights::StackingConfig& cfg = {});

}  // namespace stackd::sequential
