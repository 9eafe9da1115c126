#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "stackd/numeric.hpp"
#include "stackd/scores.hpp"

#include <random>

using namespace stackd;
using namespace stackd::scores;

namespace {

SampleForecast univariate(std::vector<double> v, double beta = 1.0) {
  SampleForecast f;
  f.draws = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  f.beta = beta;
  return f;
}

}  // namespace

TEST_CASE("log score") {
  CHECK(score_log({1.0}).value == 0.0);
  CHECK(score_log({std::exp(-2.0)}).value == doctest::Approx(-2.0));
  const LogScore zero = score_log({0.0});
  CHECK(zero.neg_inf);
  CHECK(zero.value == kNegInf);
  CHECK_THROWS_AS(score_log({-1.0}), Error);
}

TEST_CASE("quadratic score of a Gaussian mixture") {
  const SimplexWeights one = SimplexWeights::vertex(1, 0);
  // 2 phi(0) - 1 / (2 sqrt(pi)); frozen from numerical integration of ||p||^2.
  CHECK(score_quadratic_gaussian_mixture(one, {{0.0, 1.0}}, 0.0) == doctest::Approx(0.5157897690289875).epsilon(1e-12));
  CHECK(score_quadratic_gaussian_mixture(one, {{0.0, 1.0}}, 50.0) ==
        doctest::Approx(-0.28209479177387786).epsilon(1e-12));

  // Identical components collapse to the single-component value.
  const SimplexWeights w({0.3, 0.7});
  CHECK(score_quadratic_gaussian_mixture(w, {{0.4, 1.3}, {0.4, 1.3}}, 1.1) ==
        doctest::Approx(score_quadratic_gaussian_mixture(one, {{0.4, 1.3}}, 1.1)));

  // Closed-form norm agrees with the quadrature fallback.
  const std::vector<GaussianForecast> comps{{-1.0, 0.5}, {2.0, 1.5}};
  const auto density = [&](double x) { return 0.3 * normal_pdf(x, -1.0, 0.5) + 0.7 * normal_pdf(x, 2.0, 1.5); };
  CHECK(score_quadratic_gaussian_mixture(w, comps, 0.7) ==
        doctest::Approx(score_quadratic_numeric(density, 0.7, -15.0, 20.0, 20001)).epsilon(1e-9));

  CHECK_THROWS_AS(score_quadratic_gaussian_mixture(one, {{0.0, 0.0}}, 0.0), Error);
  CHECK_THROWS_AS(score_quadratic_gaussian_mixture(w, {{0.0, 1.0}}, 0.0), Error);
}

TEST_CASE("Gaussian CRPS closed form") {
  CHECK(score_crps_gaussian({0.0, 1.0}, 0.0) == doctest::Approx(-0.23369497725510913).epsilon(1e-10));
  CHECK(score_crps_gaussian({0.0, 1.0}, 10.0) == doctest::Approx(-9.435810416452242).epsilon(1e-10));
  CHECK(score_crps_gaussian({0.0, 3.0}, 0.0) == doctest::Approx(3.0 * score_crps_gaussian({0.0, 1.0}, 0.0)));
}

TEST_CASE("Gaussian CRPS matches the defining integral over a grid") {
  for (double mu : {-1.0, 0.0, 2.5}) {
    for (double sigma : {0.3, 1.0, 4.0}) {
      for (double y : {-3.0, 0.0, 0.7, 5.0}) {
        CAPTURE(mu);
        CAPTURE(sigma);
        CAPTURE(y);
        CHECK(std::abs(score_crps_gaussian({mu, sigma}, y) - oracle::crps_by_integration(mu, sigma, y)) < 1e-6);
      }
    }
  }
}

TEST_CASE("empirical CRPS") {
  CHECK(score_crps_empirical(univariate({1.0, 1.0, 1.0}), 1.0) == 0.0);
  CHECK(score_crps_empirical(univariate({0.0, 2.0}), 1.0) == doctest::Approx(-0.5));
  CHECK_THROWS_AS(score_crps_empirical(univariate({0.0}), 1.0), Error);

  // Sorted O(S log S) pair sum versus brute force.
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd;
  std::vector<double> v(300);
  for (double& x : v) x = nd(gen);
  double to_obs = 0.0, pairs = 0.0;
  for (double a : v) {
    to_obs += std::abs(a - 0.3);
    for (double b : v) pairs += std::abs(a - b);
  }
  const double n = static_cast<double>(v.size());
  CHECK(score_crps_empirical(univariate(v), 0.3) == doctest::Approx(-(to_obs / n - 0.5 * pairs / (n * n))));

  // Large sample converges to the Gaussian closed form.
  std::vector<double> big(20000);
  for (double& x : big) x = nd(gen);
  CHECK(std::abs(score_crps_empirical(univariate(big), 0.5) - score_crps_gaussian({0.0, 1.0}, 0.5)) < 0.01);
}

TEST_CASE("energy score") {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> nd;
  SampleForecast f;
  f.draws.resize(500, 3);
  for (Eigen::Index i = 0; i < f.draws.size(); ++i) f.draws.data()[i] = nd(gen);
  f.beta = 2.0;
  Eigen::VectorXd y(3);
  y << 0.5, -1.0, 2.0;
  const Eigen::VectorXd mean = f.draws.colwise().mean().transpose();
  CHECK(score_energy(f, y) == doctest::Approx(-(mean - y).squaredNorm()).epsilon(1e-10));

  SampleForecast point;
  point.draws = y.transpose().replicate(10, 1);
  for (double beta : {0.5, 1.0, 2.0}) {
    point.beta = beta;
    CHECK(score_energy(point, y) == doctest::Approx(0.0));
  }

  const SampleForecast pair = univariate({0.0, 2.0}, 1.0);
  CHECK(score_energy(pair, Eigen::VectorXd::Constant(1, 1.0)) == doctest::Approx(-0.5));
  CHECK(score_energy(pair, Eigen::VectorXd::Constant(1, 1.0)) ==
        doctest::Approx(score_crps_empirical(pair, 1.0)));

  CHECK_THROWS_AS(score_energy(f, Eigen::VectorXd::Zero(2)), Error);
  f.beta = 2.5;
  CHECK_THROWS_AS(score_energy(f, y), Error);
}

TEST_CASE("energy score subsamples pairs above the limit, reproducibly") {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd;
  SampleForecast f;
  f.draws.resize(3000, 2);
  for (Eigen::Index i = 0; i < f.draws.size(); ++i) f.draws.data()[i] = nd(gen);
  f.beta = 1.0;
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(2, 0.3);
  EnergyOptions sub;
  sub.seed = 9;
  EnergyOptions full;
  full.full_pairing_limit = 5000;
  const double a = score_energy(f, y, sub);
  CHECK(a == score_energy(f, y, sub));
  CHECK(std::abs(a - score_energy(f, y, full)) < 5e-3);
}

TEST_CASE("moment score") {
  MomentForecast f{Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2)};
  CHECK(score_moments(f, Eigen::VectorXd::Zero(2)) == doctest::Approx(0.0));
  f.sigma.diagonal() << 4.0, 1.0;
  Eigen::VectorXd y(2);
  y << 1.0, 0.0;
  CHECK(score_moments(f, y) == doctest::Approx(-1.6362943611198906));
  f.sigma << 1.0, 1.0, 1.0, 1.0;
  CHECK_THROWS_WITH_AS(score_moments(f, y), doctest::Contains("Cholesky"), Error);
}

// Propriety and divergences for Gaussian P (forecast) and Q (truth).
TEST_CASE("sampled propriety: log score margin equals KL(q, p)") {
  const double mq = 0.0, sq = 1.0, mp = 0.8, sp = 1.5;
  std::mt19937_64 gen(17);
  std::normal_distribution<double> q(mq, sq);
  const int n = 400000;
  double sqq = 0.0, spq = 0.0, var = 0.0;
  for (int i = 0; i < n; ++i) {
    const double y = q(gen);
    const double d = normal_log_pdf(y, mq, sq) - normal_log_pdf(y, mp, sp);
    sqq += normal_log_pdf(y, mq, sq);
    spq += normal_log_pdf(y, mp, sp);
    var += d * d;
  }
  const double margin = (sqq - spq) / n;
  const double se = std::sqrt(var / n - margin * margin) / std::sqrt(static_cast<double>(n));
  const double kl = std::log(sp / sq) + (sq * sq + (mq - mp) * (mq - mp)) / (2 * sp * sp) - 0.5;
  CHECK(margin > 0.0);
  CHECK(std::abs(margin - kl) < 4.0 * se);
}

TEST_CASE("divergences are nonnegative and vanish only at P = Q") {
  const GaussianForecast q{0.0, 1.0};
  const GaussianForecast ps[] = {{0.0, 1.0}, {0.5, 1.0}, {0.0, 2.0}, {-1.0, 0.5}};
  const auto expected = [](const std::function<double(double)>& s) {
    // E_Q s(Y) by quadrature against N(0, 1).
    return oracle::trapezoid([&](double y) { return s(y) * normal_pdf(y, 0.0, 1.0); }, -12.0, 12.0, 24000);
  };
  const SimplexWeights one = SimplexWeights::vertex(1, 0);
  for (const auto& p : ps) {
    const bool same = p.mu == q.mu && p.sigma == q.sigma;
    const double d_crps = expected([&](double y) { return score_crps_gaussian(q, y); }) -
                          expected([&](double y) { return score_crps_gaussian(p, y); });
    const double d_quad = expected([&](double y) { return score_quadratic_gaussian_mixture(one, {q}, y); }) -
                          expected([&](double y) { return score_quadratic_gaussian_mixture(one, {p}, y); });
    const double d_log = expected([&](double y) { return normal_log_pdf(y, q.mu, q.sigma); }) -
                         expected([&](double y) { return normal_log_pdf(y, p.mu, p.sigma); });
    for (double d : {d_crps, d_quad, d_log}) {
      if (same) {
        CHECK(std::abs(d) < 1e-10);
      } else {
        CHECK(d > 1e-4);
      }
    }
  }
}

TEST_CASE("energy score with beta = 2 is proper but not strictly proper") {
  // P and Q share their mean but differ in spread: the divergence is zero.
  std::mt19937_64 gen(23);
  std::normal_distribution<double> nd;
  const int s = 300;
  SampleForecast p, q;
  p.draws.resize(s, 1);
  q.draws.resize(s, 1);
  for (int i = 0; i < s; ++i) {
    p.draws(i, 0) = 3.0 * nd(gen);
    q.draws(i, 0) = nd(gen);
  }
  // Center both samples exactly at zero.
  p.draws.array() -= p.draws.mean();
  q.draws.array() -= q.draws.mean();
  p.beta = q.beta = 2.0;
  double d2 = 0.0;
  double d1 = 0.0;
  std::normal_distribution<double> truth;
  const int m = 200;
  for (int j = 0; j < m; ++j) {
    const Eigen::VectorXd y = Eigen::VectorXd::Constant(1, truth(gen));
    d2 += score_energy(q, y) - score_energy(p, y);
    SampleForecast p1 = p, q1 = q;
    p1.beta = q1.beta = 1.0;
    d1 += score_energy(q1, y) - score_energy(p1, y);
  }
  CHECK(std::abs(d2 / m) < 1e-9);
  CHECK(d1 / m > 0.1);
}
