#pragma once

// Model-combination weights: stacking, BMA, pseudo-BMA(+), pointwise selection.

#include "stackd/psis.hpp"
#include "stackd/simplex.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace stackd::weights {

/// n x K matrix of log LOO predictive densities. Entries are finite or -inf.
struct LooDensityMatrix {
  Eigen::MatrixXd logdens;
  std::vector<std::string> model_ids;

  std::size_t rows() const { return static_cast<std::size_t>(logdens.rows()); }
  std::size_t models() const { return static_cast<std::size_t>(logdens.cols()); }
  void validate() const;
};

/// Builds a matrix from per-model pointwise columns of equal length.
LooDensityMatrix from_columns(const std::vector<std::vector<double>>& columns,
                              std::vector<std::string> model_ids = {});

struct LogMarginalVector {
  std::vector<double> logml;
  SimplexWeights prior;
};

struct StackingConfig {
  double reltol = 1e-10;
  std::size_t max_iter = 10'000;
  std::uint64_t seed = 0;
  std::size_t restarts = 3;
  // Index of the softmax coordinate held at zero.
  std::size_t pinned = 0;
};

struct StackingDiagnostics {
  double objective = 0.0;
  std::size_t iterations = 0;
  double grad_norm = 0.0;
  bool converged = true;
};

struct StackingResult {
  SimplexWeights weights;
  StackingDiagnostics diagnostics;
};

/// Mean over rows of log sum_k w_k exp(logdens(i, k)).
double stacking_objective(const LooDensityMatrix& m, const SimplexWeights& w);

/// Row-weighted variant: sum_i row_weights[i] * log sum_k w_k p_ik.
double stacking_objective(const LooDensityMatrix& m, const SimplexWeights& w,
                          std::span<const double> row_weights);

/// Maximizes the stacking objective over the simplex.
///
/// Softmax parameterization with one coordinate pinned at zero, quasi-Newton
/// ascent (BFGS inverse-Hessian update) with Armijo backtracking, stopping
/// when the relative objective change drops below reltol. The first run
/// starts at the uniform point, further restarts from Dirichlet(1) draws.
/// Among runs that reach the best objective, the minimum-norm weights win,
/// so a flat direction resolves to the point reached from uniform.
///
/// Throws if some row is -inf for every model. Hitting max_iter returns the
/// best iterate with diagnostics.converged = false.
StackingResult stacking_weights(const LooDensityMatrix& m, const StackingConfig& cfg = {});

/// Same with explicit nonnegative row weights (need not sum to one).
StackingResult stacking_weights(const LooDensityMatrix& m, std::span<const double> row_weights,
                                const StackingConfig& cfg = {});

/// Fraction of rows on which each model is best; ties split equally.
SimplexWeights pointwise_selection_weights(const LooDensityMatrix& m);

struct SeparationResult {
  std::vector<bool> separated;
  double fraction = 0.0;
};

/// A row is separated when its best model beats every other by at least L
/// (inclusive).
SeparationResult separation_check(const LooDensityMatrix& m, double margin);

/// Posterior model probabilities from log marginal likelihoods and a prior.
SimplexWeights bma_weights(const LogMarginalVector& v);

/// Softmax of total elpd per model.
SimplexWeights pseudo_bma(std::span<const psis::ElpdReport> reports);

struct PseudoBmaPlusConfig {
  std::size_t replicates = 1000;
  std::uint64_t seed = 0;
  // Replace the Dirichlet draws with uniform 1/n weights. Test hook.
  bool uniform_bootstrap = false;
};

/// Bayesian-bootstrap pseudo-BMA: average over replicates of
/// softmax_k(n * sum_i pi_i logdens(i, k)) with pi ~ Dirichlet(1, ..., 1).
SimplexWeights pseudo_bma_plus(const LooDensityMatrix& m, const PseudoBmaPlusConfig& cfg = {});

/// Log pseudo Bayes factor: sum_i logdens(i, k1) - sum_i logdens(i, k2).
double pseudo_bayes_factor(const LooDensityMatrix& m, std::size_t k1, std::size_t k2);

}  // namespace stackd::weights
