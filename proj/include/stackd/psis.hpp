#pragma once

// Pareto smoothed importance sampling for leave-one-out predictive densities.

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace stackd::psis {

/// S x n matrix of log p(y_i | theta^s), one posterior draw per row.
struct LogLikDrawMatrix {
  Eigen::MatrixXd values;
  std::string model_id;
  // Relative MCMC efficiency per observation; empty means 1 everywhere.
  std::vector<double> r_eff;

  std::size_t draws() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t observations() const { return static_cast<std::size_t>(values.cols()); }
  double r_eff_at(std::size_t i) const { return r_eff.empty() ? 1.0 : r_eff[i]; }

  // Throws stackd::Error on non-finite entries, S < 2, or bad r_eff.
  void validate() const;
};

inline constexpr std::size_t kRecommendedDraws = 100;

enum class KhatGrade { good, ok, bad };

// <= 0.5 good, (0.5, 0.7] ok, otherwise bad. NaN grades bad.
KhatGrade grade_khat(double khat);
const char* to_string(KhatGrade g);

struct ParetoTailFit {
  double khat = 0.0;
  double sigma_hat = 0.0;
  std::size_t tail_size = 0;
  KhatGrade grade = KhatGrade::good;
  // False when no GPD was fitted (degenerate or too-short tail).
  bool fitted = false;
};

/// Generalized Pareto fit to threshold exceedances by the Zhang-Stephens
/// profile-likelihood posterior mean over a quantile-spaced grid of
/// theta = -k / sigma, followed by a weak shrinkage of k toward 0.5.
/// Requires at least 5 exceedances that are not all equal.
ParetoTailFit fit_gpd(std::span<const double> exceedances);

/// Quantile function of GPD(k, sigma) at probability p.
double gpd_quantile(double p, double k, double sigma);

std::size_t tail_length(std::size_t draws, double r_eff);

struct SmoothedWeights {
  std::vector<double> log_weights;  // on the scale of the input log ratios
  ParetoTailFit fit;
};

SmoothedWeights psis_smooth(std::span<const double> log_ratios, double r_eff = 1.0);

/// Entry (s, i) = -values(s, i); the log of the ratio 1 / p(y_i | theta^s).
Eigen::MatrixXd raw_log_ratios(const LogLikDrawMatrix& m);

struct ElpdReport {
  std::vector<double> pointwise;
  double total = 0.0;
  double se = 0.0;
  std::vector<ParetoTailFit> khats;
  std::vector<std::string> warnings;
};

// total = sum, se = sqrt(n) * sd(pointwise).
ElpdReport summarize_pointwise(std::vector<double> pointwise, std::vector<ParetoTailFit> khats);

struct LooResult {
  std::vector<double> loo;
  ElpdReport report;
};

/// PSIS-LOO per observation. Observations are smoothed independently and in
/// parallel; results do not depend on the thread count.
LooResult psis_loo(const LogLikDrawMatrix& m);

/// Self-normalized importance sampling estimate of log E[p(y | theta)] given
/// smoothed log weights and a column of log likelihoods.
double weighted_log_mean(std::span<const double> log_weights, std::span<const double> loglik);

}  // namespace stackd::psis
