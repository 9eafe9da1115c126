#include "stackd/scores.hpp"

#include "stackd/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace stackd::scores {

namespace {

void check_sigma(double sigma, const char* who) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    std::ostringstream os;
    os << who << ": sigma must be positive and finite, got " << sigma;
    throw Error(ErrorKind::invalid_argument, os.str());
  }
}

void check_beta(double beta) {
  if (!(beta > 0.0 && beta <= 2.0)) {
    throw Error(ErrorKind::invalid_argument, "energy score: beta must lie in (0, 2]");
  }
}

double pair_distance(const Eigen::MatrixXd& draws, Eigen::Index i, Eigen::Index j, double beta) {
  const double d = (draws.row(i) - draws.row(j)).norm();
  return beta == 1.0 ? d : std::pow(d, beta);
}

}  // namespace

LogScore score_log(DensityValue p) {
  if (!(p.value >= 0.0) || !std::isfinite(p.value)) {
    throw Error(ErrorKind::invalid_argument, "log score: density must be finite and nonnegative");
  }
  if (p.value == 0.0) return {kNegInf, true};
  return {std::log(p.value), false};
}

double score_quadratic_gaussian_mixture(const SimplexWeights& weights,
                                        const std::vector<GaussianForecast>& components,
                                        double y) {
  if (components.empty()) {
    throw Error(ErrorKind::invalid_argument, "quadratic score: no components");
  }
  if (weights.size() != components.size()) {
    throw Error(ErrorKind::dimension_mismatch, "quadratic score: weights and components differ in length");
  }
  for (const auto& c : components) check_sigma(c.sigma, "quadratic score");

  double density = 0.0;
  double norm2 = 0.0;
  for (std::size_t i = 0; i < components.size(); ++i) {
    density += weights[i] * normal_pdf(y, components[i].mu, components[i].sigma);
    for (std::size_t j = 0; j < components.size(); ++j) {
      // Integral of N(.|mu_i, s_i) N(.|mu_j, s_j) = N(mu_i | mu_j, sqrt(s_i^2 + s_j^2)).
      const double s = std::hypot(components[i].sigma, components[j].sigma);
      norm2 += weights[i] * weights[j] * normal_pdf(components[i].mu, components[j].mu, s);
    }
  }
  return 2.0 * density - norm2;
}

double score_quadratic_numeric(const std::function<double(double)>& density, double y,
                               double lo, double hi, int points) {
  if (!(hi > lo) || points < 3) {
    throw Error(ErrorKind::invalid_argument, "quadratic score: need hi > lo and at least 3 grid points");
  }
  const double h = (hi - lo) / (points - 1);
  double norm2 = 0.0;
  for (int i = 0; i < points; ++i) {
    const double p = density(lo + h * i);
    const double c = (i == 0 || i == points - 1) ? 0.5 : 1.0;
    norm2 += c * p * p;
  }
  norm2 *= h;
  return 2.0 * density(y) - norm2;
}

double score_crps_gaussian(GaussianForecast f, double y) {
  check_sigma(f.sigma, "crps");
  const double z = (y - f.mu) / f.sigma;
  const double phi = std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi);
  const double crps = f.sigma * (z * (2.0 * std_normal_cdf(z) - 1.0) + 2.0 * phi - 1.0 / std::sqrt(kPi));
  return -crps;
}

double score_crps_empirical(const SampleForecast& f, double y) {
  if (f.draws.cols() != 1) {
    throw Error(ErrorKind::dimension_mismatch, "empirical crps: draws must be univariate");
  }
  const Eigen::Index s = f.draws.rows();
  if (s < 2) throw Error(ErrorKind::invalid_argument, "empirical crps: need at least 2 draws");

  std::vector<double> x(f.draws.data(), f.draws.data() + s);
  double to_obs = 0.0;
  for (double v : x) to_obs += std::abs(v - y);
  to_obs /= static_cast<double>(s);

  // Sum over all ordered pairs of |x_i - x_j| from the sorted sample in O(S log S).
  std::sort(x.begin(), x.end());
  double pair_sum = 0.0;
  for (Eigen::Index i = 0; i < s; ++i) {
    pair_sum += x[i] * static_cast<double>(2 * i - s + 1);
  }
  pair_sum *= 2.0;
  const double spread = pair_sum / static_cast<double>(s * s);
  return -(to_obs - 0.5 * spread);
}

double score_energy(const SampleForecast& f, const Eigen::VectorXd& y, const EnergyOptions& opts) {
  check_beta(f.beta);
  const Eigen::Index s = f.draws.rows();
  if (s < 2) throw Error(ErrorKind::invalid_argument, "energy score: need at least 2 draws");
  if (f.draws.cols() != y.size()) {
    std::ostringstream os;
    os << "energy score: draws have dimension " << f.draws.cols() << " but y has " << y.size();
    throw Error(ErrorKind::dimension_mismatch, os.str());
  }

  double to_obs = 0.0;
  for (Eigen::Index i = 0; i < s; ++i) {
    const double d = (f.draws.row(i).transpose() - y).norm();
    to_obs += std::pow(d, f.beta);
  }
  to_obs /= static_cast<double>(s);

  double spread = 0.0;
  if (static_cast<std::size_t>(s) <= opts.full_pairing_limit) {
    for (Eigen::Index i = 0; i < s; ++i) {
      for (Eigen::Index j = i + 1; j < s; ++j) spread += pair_distance(f.draws, i, j, f.beta);
    }
    spread = 2.0 * spread / static_cast<double>(s * s);
  } else {
    Rng rng(opts.seed);
    for (std::size_t p = 0; p < opts.subsample_pairs; ++p) {
      const Eigen::Index i = static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(s));
      const Eigen::Index j = static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(s));
      if (i != j) spread += pair_distance(f.draws, i, j, f.beta);
    }
    spread /= static_cast<double>(opts.subsample_pairs);
  }
  return 0.5 * spread - to_obs;
}

double score_moments(const MomentForecast& f, const Eigen::VectorXd& y) {
  const Eigen::Index d = f.mu.size();
  if (f.sigma.rows() != d || f.sigma.cols() != d || y.size() != d) {
    throw Error(ErrorKind::dimension_mismatch, "moment score: mu, Sigma and y dimensions disagree");
  }
  const double scale = std::max(1.0, f.sigma.cwiseAbs().maxCoeff());
  if ((f.sigma - f.sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw Error(ErrorKind::invalid_argument, "moment score: Sigma is not symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(f.sigma);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::singular_matrix,
                "moment score: Cholesky factorization of Sigma failed (not positive definite)");
  }
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const Eigen::VectorXd r = y - f.mu;
  const double quad = r.dot(llt.solve(r));
  return -log_det - quad;
}

}  // namespace stackd::scores
