#pragma once

// Closed-form Gaussian analysis and synthetic experiments for stacking.
//
// Covariates live on a finite weighted grid, so probabilities over x are
// exact sums. Expectations over the outcome use Gauss-Hermite quadrature.

#include "stackd/simplex.hpp"
#include "stackd/weights.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace stackd::simlab {

using Curve = std::function<double(double)>;

/// Model predictive N(mu(x), sigma(x)^2).
struct NormalPredictiveSpec {
  Curve mu;
  Curve sigma;
};

struct GridPoint {
  double x;
  double mass;
};

/// True conditional law of y given x: a finite mixture of normals (a single
/// component in the usual case), and a weighted covariate grid.
struct TruthSpec {
  struct Component {
    double weight;
    Curve mu;
    Curve sigma;
  };
  std::vector<Component> components;
  std::vector<GridPoint> grid;

  static TruthSpec normal(Curve mu_star, Curve sigma_star, std::vector<GridPoint> grid);
  void validate() const;
};

/// n equally weighted points spanning [lo, hi].
std::vector<GridPoint> uniform_grid(double lo, double hi, std::size_t n);

struct SeparationParams {
  double margin;  // L
  double p0;
};

/// log p(y) under y_i ~ N(mu, lik_sd^2), mu ~ N(0, prior_sd^2).
double normal_normal_log_marginal(std::span<const double> y, double lik_sd, double prior_sd);

/// Exact leave-one-out log predictive densities for the same conjugate model.
std::vector<double> exact_conjugate_loo(std::span<const double> y, double lik_sd, double prior_sd);

struct LpdMoments {
  double mean;
  double sd;
};

/// Mean and sd of log N(y | mu_k(x), sigma_k(x)) for y ~ N(mu*(x), sigma*(x)).
/// Derived from the noncentral chi-squared (1 dof) law of
/// ((y - mu_k) / sigma*)^2 with noncentrality ((mu* - mu_k) / sigma*)^2.
/// Requires a single-component truth.
LpdMoments lpd_moments(const NormalPredictiveSpec& k, const TruthSpec& t, double x);

/// E[log N(y | mu_k(x), sigma_k(x))] under the (possibly mixture) truth at x.
double pointwise_elpd(const NormalPredictiveSpec& k, const TruthSpec& t, double x);

struct LocalBest {
  double x;
  std::vector<double> share;  // 1 on the unique best model, split on ties
  std::size_t best;           // lowest index among the tied best
  double margin;              // elpd gap to the runner-up (+inf when K == 1)
};

std::vector<LocalBest> local_best_map(const std::vector<NormalPredictiveSpec>& specs, const TruthSpec& t);

/// P(k = k*(x)) over the covariate grid.
SimplexWeights local_best_proportions(const std::vector<NormalPredictiveSpec>& specs, const TruthSpec& t);

struct PopulationStacking {
  SimplexWeights weights;
  int order = 0;  // quadrature order actually used
  double objective = 0.0;
};

/// Maximizes E_x E_{y|x} log sum_k w_k N(y | mu_k(x), sigma_k(x)).
/// The order is doubled (up to 1024) while the weights move by more than
/// 1e-4 in l1 between consecutive orders.
PopulationStacking population_stacking(const std::vector<NormalPredictiveSpec>& specs, const TruthSpec& t,
                                       int quadrature_order = 64);

/// Minimum over grid points of the probability (under the truth) that the
/// local best model beats every other model pointwise by at least `margin`.
double separation_probability(const std::vector<NormalPredictiveSpec>& specs, const TruthSpec& t,
                              double margin);

struct SeparationReport {
  SimplexWeights stacking;
  SimplexWeights local_best;
  double l1_distance = 0.0;
  double min_elpd_margin = 0.0;   // smallest elpd gap to the runner-up over the grid
  double measured_p0 = 0.0;       // at params.margin
  double requested_margin = 0.0;
  double requested_p0 = 0.0;
  bool separated = false;         // measured_p0 >= requested p0
};

SeparationReport theorem2_experiment(const std::vector<NormalPredictiveSpec>& specs, const TruthSpec& t,
                                   const SeparationParams& params, int quadrature_order = 64);

/// Softmax over models of n_obs * population elpd: the weight a marginal
/// likelihood comparison assigns once n_obs observations have accrued.
SimplexWeights marginal_style_weights(const std::vector<NormalPredictiveSpec>& specs, const TruthSpec& t,
                                      double n_obs);

// ---- Designs ---------------------------------------------------------------

struct Design {
  std::vector<NormalPredictiveSpec> specs;
  TruthSpec truth;
};

/// Two models on a uniform grid over [0, 1] with truth N(sin(2 pi x), 1).
/// Model 1 matches the truth on x < share_first and model 2 elsewhere. Off
/// its region, model 1 is shifted by offset; model 2 is shifted by offset and
/// widened by spread. With spread = 1 the two misses mirror each other and
/// population stacking returns the local-best proportions at every offset.
Design regime_design(double offset, double share_first = 0.7, std::size_t grid_points = 100,
                     double spread = 1.5);

/// Two predictive bands standing in for the two hyperparameter modes of a
/// Gaussian-process fit. Each band tracks the latent curve on its own part
/// of the covariate range and misses by `miss` elsewhere.
Design two_mode_surrogate(double noise_sd = 0.1, double miss = 1.0, std::size_t grid_points = 200);

/// Truth equal to a mixture of the two components with the given weight on
/// the first.
Design mixture_truth_design(double first_weight = 0.3);

// ---- Experiments driven from configuration ----------------------------------

struct PriorSensitivityRow {
  double prior_sd;
  double log_marginal;
  double ratio_to_first;  // marginal(first prior) / marginal(this prior)
};

std::vector<PriorSensitivityRow> prior_sensitivity(std::uint64_t seed, std::size_t n = 50, double data_sd = 0.1,
                                                   double lik_sd = 1.0,
                                                   std::vector<double> prior_sds = {10.0, 100.0, 1000.0});

struct ChisqRow {
  double gamma;
  double sigma_k;
  double mean_closed;
  double sd_closed;
  double mean_mc;
  double sd_mc;
  double mean_se;
  double sd_se;
};

struct ChisqReport {
  std::vector<ChisqRow> rows;
  // Log-log regression slopes in gamma, one per sigma_k, of the Monte Carlo
  // mean shift |mean(gamma) - mean(0)| and of the Monte Carlo sd.
  std::vector<double> mean_exponent;
  std::vector<double> sd_exponent;
};

ChisqReport chisq_moments(std::uint64_t seed, std::size_t draws = 1'000'000,
                          std::vector<double> gammas = {2.0, 4.0, 8.0, 16.0, 32.0},
                          std::vector<double> sigma_ks = {0.5, 1.0, 2.0, 4.0, 8.0});

}  // namespace stackd::simlab
