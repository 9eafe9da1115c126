#pragma once

// Proper scoring rules, oriented so that larger is better throughout.
//
// Note the CRPS sign: the classical CRPS is a loss (smaller is better).
// Every function here returns its negation, so a perfect point forecast
// scores 0 and everything else scores below it.

#include "stackd/simplex.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

namespace stackd::scores {

struct DensityValue {
  double value;
};

struct GaussianForecast {
  double mu;
  double sigma;
};

/// Draws from a predictive distribution, one draw per row.
struct SampleForecast {
  Eigen::MatrixXd draws;
  double beta = 1.0;
};

struct MomentForecast {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
};

/// Log score of a density value. A zero density gives value = -inf with
/// the flag set instead of an exception.
struct LogScore {
  double value;
  bool neg_inf;
};

LogScore score_log(DensityValue p);

/// Quadratic score 2 p(y) - ||p||^2 for a Gaussian mixture, with the
/// squared norm in closed form.
double score_quadratic_gaussian_mixture(const SimplexWeights& weights,
                                        const std::vector<GaussianForecast>& components,
                                        double y);

/// Quadratic score for an arbitrary univariate density, with ||p||^2 by the
/// trapezoid rule on [lo, hi] using `points` nodes.
double score_quadratic_numeric(const std::function<double(double)>& density, double y,
                               double lo, double hi, int points);

double score_crps_gaussian(GaussianForecast f, double y);

/// -(mean|X - y| - 0.5 mean|X - X'|) over the empirical distribution of
/// univariate draws (all ordered pairs, including i == j).
double score_crps_empirical(const SampleForecast& f, double y);

struct EnergyOptions {
  // Above this many draws, pairs are subsampled uniformly.
  std::size_t full_pairing_limit = 2000;
  std::size_t subsample_pairs = 4'000'000;
  std::uint64_t seed = 0;
};

/// 0.5 E||Y - Y'||^beta - E||Y - y||^beta over the empirical distribution.
/// With full pairing and beta = 2 this equals -||mean(draws) - y||^2.
double score_energy(const SampleForecast& f, const Eigen::VectorXd& y,
                    const EnergyOptions& opts = {});

/// -log det(Sigma) - (y - mu)' Sigma^{-1} (y - mu)
double score_moments(const MomentForecast& f, const Eigen::VectorXd& y);

}  // namespace stackd::scores
