#include "stackd/psis.hpp"

#include "stackd/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace stackd::psis {

void LogLikDrawMatrix::validate() const {
  if (values.rows() < 2) {
    std::ostringstream os;
    os << "model '" << model_id << "': need at least 2 draws, got " << values.rows();
    throw Error(ErrorKind::invalid_argument, os.str());
  }
  if (values.cols() < 1) {
    throw Error(ErrorKind::invalid_argument, "model '" + model_id + "': no observations");
  }
  for (Eigen::Index i = 0; i < values.cols(); ++i) {
    for (Eigen::Index s = 0; s < values.rows(); ++s) {
      if (!std::isfinite(values(s, i))) {
        std::ostringstream os;
        os << "model '" << model_id << "': non-finite log-likelihood at draw " << s + 1
           << ", observation " << i + 1;
        throw Error(ErrorKind::invalid_argument, os.str());
      }
    }
  }
  if (!r_eff.empty()) {
    if (r_eff.size() != observations()) {
      std::ostringstream os;
      os << "model '" << model_id << "': r_eff has " << r_eff.size() << " entries for "
         << observations() << " observations";
      throw Error(ErrorKind::dimension_mismatch, os.str());
    }
    for (double r : r_eff) {
      if (!(r > 0.0) || !std::isfinite(r)) {
        throw Error(ErrorKind::invalid_argument, "model '" + model_id + "': r_eff entries must be positive");
      }
    }
  }
}

KhatGrade grade_khat(double khat) {
  if (khat <= 0.5) return KhatGrade::good;
  if (khat <= 0.7) return KhatGrade::ok;
  return KhatGrade::bad;
}

const char* to_string(KhatGrade g) {
  switch (g) {
    case KhatGrade::good: return "good";
    case KhatGrade::ok: return "ok";
    case KhatGrade::bad: return "bad";
  }
  return "bad";
}

double gpd_quantile(double p, double k, double sigma) {
  if (std::abs(k) < 1e-15) return -sigma * std::log1p(-p);
  return sigma * std::expm1(-k * std::log1p(-p)) / k;
}

ParetoTailFit fit_gpd(std::span<const double> exceedances) {
  const std::size_t n = exceedances.size();
  if (n < 5) {
    std::ostringstream os;
    os << "gpd fit: need at least 5 tail samples, got " << n;
    throw Error(ErrorKind::too_few_tail_samples, os.str());
  }
  std::vector<double> x(exceedances.begin(), exceedances.end());
  for (double v : x) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorKind::invalid_argument, "gpd fit: exceedances must be finite and nonnegative");
    }
  }
  std::sort(x.begin(), x.end());
  if (x.back() - x.front() <= 0.0) {
    throw Error(ErrorKind::degenerate_tail, "gpd fit: all tail samples are equal");
  }

  const double nd = static_cast<double>(n);
  constexpr double prior = 3.0;
  const std::size_t grid = 30 + static_cast<std::size_t>(std::floor(std::sqrt(nd)));
  // First quartile; fall back to the smallest positive value if it is zero.
  double xstar = x[static_cast<std::size_t>(std::floor(nd / 4.0 + 0.5)) - 1];
  if (xstar <= 0.0) xstar = *std::upper_bound(x.begin(), x.end(), 0.0);

  std::vector<double> theta(grid), profile(grid);
  for (std::size_t j = 0; j < grid; ++j) {
    const double jj = static_cast<double>(j + 1);
    theta[j] = 1.0 / x.back() + (1.0 - std::sqrt(static_cast<double>(grid) / (jj - 0.5))) / prior / xstar;
    const double a = -theta[j];
    double k = 0.0;
    for (double v : x) k += std::log1p(a * v);
    k /= nd;
    profile[j] = nd * (std::log(a / k) - k - 1.0);
    if (!std::isfinite(profile[j])) profile[j] = kNegInf;
  }
  const std::vector<double> post = softmax(profile);
  double theta_hat = 0.0;
  for (std::size_t j = 0; j < grid; ++j) theta_hat += theta[j] * post[j];

  double k = 0.0;
  for (double v : x) k += std::log1p(-theta_hat * v);
  k /= nd;
  const double sigma = -k / theta_hat;
  if (!std::isfinite(k) || !(sigma > 0.0) || !std::isfinite(sigma)) {
    throw Error(ErrorKind::degenerate_tail, "gpd fit: estimate is not finite");
  }
  // Weakly informative shrinkage toward k = 0.5, equivalent to 10 pseudo-observations.
  constexpr double a = 10.0;
  k = k * nd / (nd + a) + a * 0.5 / (nd + a);

  ParetoTailFit fit;
  fit.khat = k;
  fit.sigma_hat = sigma;
  fit.tail_size = n;
  fit.grade = grade_khat(k);
  fit.fitted = true;
  return fit;
}

std::size_t tail_length(std::size_t draws, double r_eff) {
  const double s_eff = static_cast<double>(draws) * r_eff;
  return static_cast<std::size_t>(std::ceil(std::min(0.2 * s_eff, 3.0 * std::sqrt(s_eff))));
}

SmoothedWeights psis_smooth(std::span<const double> log_ratios, double r_eff) {
  const std::size_t s = log_ratios.size();
  if (s < 2) throw Error(ErrorKind::invalid_argument, "psis: need at least 2 draws");
  if (!(r_eff > 0.0)) throw Error(ErrorKind::invalid_argument, "psis: r_eff must be positive");

  SmoothedWeights out;
  out.log_weights.assign(log_ratios.begin(), log_ratios.end());
  const auto [lo_it, hi_it] = std::minmax_element(log_ratios.begin(), log_ratios.end());
  const double mx = *hi_it;
  if (*hi_it - *lo_it <= 0.0) {
    // Constant ratios: no tail, weights already uniform.
    return out;
  }

  std::vector<double> lw(s);
  for (std::size_t i = 0; i < s; ++i) lw[i] = log_ratios[i] - mx;

  const std::size_t tail = std::min(tail_length(s, r_eff), s - 1);
  out.fit.tail_size = tail;
  if (tail < 5) {
    out.fit.grade = KhatGrade::bad;
    out.fit.khat = std::numeric_limits<double>::infinity();
    return out;
  }

  std::vector<std::size_t> order(s);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lw[a] < lw[b]; });
  const std::size_t first = s - tail;
  const double tail_lo = lw[order[first]];
  const double tail_hi = lw[order[s - 1]];
  if (tail_hi - tail_lo <= 0.0) {
    // Flat tail: nothing to smooth. Truncation below is a no-op here.
    return out;
  }

  const double cutoff = lw[order[first - 1]];
  const double exp_cutoff = std::exp(cutoff);
  std::vector<double> exceed(tail);
  for (std::size_t z = 0; z < tail; ++z) exceed[z] = std::exp(lw[order[first + z]]) - exp_cutoff;

  try {
    out.fit = fit_gpd(exceed);
  } catch (const Error&) {
    out.fit = ParetoTailFit{};
    out.fit.tail_size = tail;
    out.fit.khat = std::numeric_limits<double>::infinity();
    out.fit.grade = KhatGrade::bad;
    return out;
  }

  for (std::size_t z = 0; z < tail; ++z) {
    const double p = (static_cast<double>(z) + 0.5) / static_cast<double>(tail);
    lw[order[first + z]] = std::log(gpd_quantile(p, out.fit.khat, out.fit.sigma_hat) + exp_cutoff);
  }
  // Truncate at the largest raw ratio, which is 0 on the shifted scale.
  for (std::size_t i = 0; i < s; ++i) out.log_weights[i] = std::min(lw[i], 0.0) + mx;
  return out;
}

Eigen::MatrixXd raw_log_ratios(const LogLikDrawMatrix& m) { return -m.values; }

ElpdReport summarize_pointwise(std::vector<double> pointwise, std::vector<ParetoTailFit> khats) {
  ElpdReport r;
  const double n = static_cast<double>(pointwise.size());
  r.total = std::accumulate(pointwise.begin(), pointwise.end(), 0.0);
  if (pointwise.size() > 1) {
    const double mean = r.total / n;
    double ss = 0.0;
    for (double v : pointwise) ss += (v - mean) * (v - mean);
    r.se = std::sqrt(n * ss / (n - 1.0));
  }
  r.pointwise = std::move(pointwise);
  r.khats = std::move(khats);
  return r;
}

double weighted_log_mean(std::span<const double> log_weights, std::span<const double> loglik) {
  return log_sum_exp(log_weights, loglik) - log_sum_exp(log_weights);
}

LooResult psis_loo(const LogLikDrawMatrix& m) {
  m.validate();
  const std::size_t n = m.observations();
  const std::size_t s = m.draws();
  std::vector<double> loo(n);
  std::vector<ParetoTailFit> fits(n);

  parallel_for(n, [&](std::size_t i) {
    const auto col = m.values.col(static_cast<Eigen::Index>(i));
    std::vector<double> ll(col.data(), col.data() + s);
    std::vector<double> ratios(s);
    for (std::size_t k = 0; k < s; ++k) ratios[k] = -ll[k];
    SmoothedWeights sw = psis_smooth(ratios, m.r_eff_at(i));
    loo[i] = weighted_log_mean(sw.log_weights, ll);
    fits[i] = sw.fit;
  });

  LooResult out;
  out.loo = loo;
  out.report = summarize_pointwise(std::move(loo), std::move(fits));
  if (s < kRecommendedDraws) {
    std::ostringstream os;
    os << "model '" << m.model_id << "': only " << s << " draws; at least " << kRecommendedDraws
       << " are recommended";
    out.report.warnings.push_back(os.str());
  }
  std::size_t bad = 0;
  for (const auto& f : out.report.khats) bad += f.grade == KhatGrade::bad;
  if (bad > 0) {
    std::ostringstream os;
    os << "model '" << m.model_id << "': " << bad << " observation(s) with khat > 0.7";
    out.report.warnings.push_back(os.str());
  }
  return out;
}

}  // namespace stackd::psis
