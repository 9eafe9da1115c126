#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "stackd/numeric.hpp"
#include "stackd/sequential.hpp"

#include <random>

using namespace stackd;
using namespace stackd::sequential;

namespace {

PrequentialMatrix regime_switch(int t_count, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0.0, 0.3);
  PrequentialMatrix m;
  m.logdens.resize(t_count, 2);
  for (int t = 0; t < t_count; ++t) {
    const bool first = t < t_count / 2;
    m.logdens(t, 0) = -1.0 + nd(gen) + (first ? 0.0 : -1.5);
    m.logdens(t, 1) = -1.0 + nd(gen) + (first ? -1.5 : 0.0);
  }
  m.model_ids = {"early", "late"};
  return m;
}

PrequentialMatrix noisy(int t_count, int k, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(-1.0, 1.0);
  PrequentialMatrix m;
  m.logdens.resize(t_count, k);
  for (Eigen::Index i = 0; i < m.logdens.size(); ++i) m.logdens.data()[i] = nd(gen);
  return m;
}

// AR(1) with coefficient phi and unit innovations.
std::vector<double> ar1(int n, double phi, std::mt19937_64& gen) {
  std::normal_distribution<double> nd;
  std::vector<double> y(n);
  double prev = nd(gen) / std::sqrt(1.0 - phi * phi);
  for (double& v : y) v = prev = phi * prev + nd(gen);
  return y;
}

}  // namespace

TEST_CASE("single time point gives the best vertex") {
  PrequentialMatrix m;
  m.logdens.resize(1, 3);
  m.logdens << -2.0, -0.5, -1.0;
  const weights::StackingResult r = static_prequential_weights(m);
  CHECK(r.weights[1] == doctest::Approx(1.0));
  const WeightPath p = time_varying_weights(m, 3.0);
  CHECK(p.path(0, 1) == doctest::Approx(1.0));
}

TEST_CASE("identical columns give uniform weights") {
  PrequentialMatrix m = noisy(30, 1, 2);
  m.logdens.conservativeResize(Eigen::NoChange, 2);
  m.logdens.col(1) = m.logdens.col(0);
  CHECK(static_prequential_weights(m).weights[0] == doctest::Approx(0.5));
  const WeightPath p = time_varying_weights(m, 1.0);
  for (Eigen::Index t = 0; t < 30; ++t) CHECK(p.path(t, 0) == doctest::Approx(0.5));
}

TEST_CASE("tau = 0 gives exact per-time vertices") {
  const PrequentialMatrix m = noisy(50, 3, 4);
  const WeightPath p = time_varying_weights(m, 0.0);
  for (Eigen::Index t = 0; t < 50; ++t) {
    Eigen::Index best = 0;
    m.logdens.row(t).maxCoeff(&best);
    for (Eigen::Index j = 0; j < 3; ++j) CHECK(p.path(t, j) == (j == best ? 1.0 : 0.0));
  }
}

TEST_CASE("large tau recovers the static weights") {
  const PrequentialMatrix m = noisy(60, 3, 6);
  const weights::StackingResult s = static_prequential_weights(m);
  const WeightPath p = time_varying_weights(m, 1e8);
  for (Eigen::Index t = 0; t < 60; ++t) {
    for (Eigen::Index j = 0; j < 3; ++j) CHECK(std::abs(p.path(t, j) - s.weights[j]) < 1e-4);
  }
}

TEST_CASE("regime switch: the path crosses 0.5 near the midpoint") {
  const PrequentialMatrix m = regime_switch(100, 8);
  const WeightPath p = time_varying_weights(m, 2.0);
  CHECK(p.converged);
  CHECK(p.path(5, 0) > 0.5);
  CHECK(p.path(94, 0) < 0.5);
  Eigen::Index cross = -1;
  for (Eigen::Index t = 1; t < 100; ++t) {
    if (p.path(t - 1, 0) >= 0.5 && p.path(t, 0) < 0.5) {
      cross = t;
      break;
    }
  }
  CHECK(std::abs(cross - 50) <= 5);
}

TEST_CASE("coordinate ascent never lowers the penalized objective") {
  for (double tau : {0.1, 1.0, 10.0}) {
    const WeightPath p = time_varying_weights(regime_switch(80, 3), tau);
    for (std::size_t i = 1; i < p.objective_trace.size(); ++i) {
      CHECK(p.objective_trace[i] >= p.objective_trace[i - 1]);
    }
    CHECK(p.objective == doctest::Approx(penalized_objective(regime_switch(80, 3), p.path, tau)));
  }
}

TEST_CASE("the path is continuous in tau") {
  const PrequentialMatrix m = regime_switch(60, 10);
  for (double tau : {0.5, 2.0, 8.0}) {
    const WeightPath a = time_varying_weights(m, tau);
    const WeightPath b = time_varying_weights(m, tau * 1.01);
    for (Eigen::Index t = 0; t < 60; ++t) CHECK((a.path.row(t) - b.path.row(t)).lpNorm<1>() < 0.1);
  }
}

TEST_CASE("invalid tau") {
  const PrequentialMatrix m = noisy(5, 2, 1);
  CHECK_THROWS_AS(time_varying_weights(m, -1.0), Error);
  CHECK_THROWS_AS(time_varying_weights(m, std::nan("")), Error);
}

TEST_CASE("AR(1) prequential stacking matches the grid oracle") {
  // Exact one-step predictive densities of AR(1) models with fixed phi.
  std::mt19937_64 gen(41);
  const std::vector<double> y = ar1(300, 0.6, gen);
  PrequentialMatrix m;
  m.logdens.resize(static_cast<Eigen::Index>(y.size()) - 1, 2);
  const double phis[2] = {0.2, 0.9};
  for (std::size_t t = 1; t < y.size(); ++t) {
    for (int k = 0; k < 2; ++k) m.logdens(static_cast<Eigen::Index>(t) - 1, k) = normal_log_pdf(y[t], phis[k] * y[t - 1], 1.0);
  }
  const weights::StackingResult r = static_prequential_weights(m);
  const oracle::GridOptimum g = oracle::stacking_grid_search(m.logdens);
  CHECK(std::abs(r.weights[0] - g.w[0]) < 1e-3);
  CHECK(std::abs(r.diagnostics.objective - g.value) < 1e-8);
}

TEST_CASE("prequential score on a stationary AR(1) tracks an independent continuation") {
  double gap = 0.0;
  const int seeds = 10;
  for (int s = 0; s < seeds; ++s) {
    std::mt19937_64 gen(500 + s);
    const std::vector<double> y = ar1(1500, 0.6, gen);
    // Fixed model: AR(1) with phi = 0.5 and unit variance.
    double train = 0.0;
    for (int t = 1; t < 500; ++t) train += normal_log_pdf(y[t], 0.5 * y[t - 1], 1.0);
    double test = 0.0;
    for (int t = 501; t < 1500; ++t) test += normal_log_pdf(y[t], 0.5 * y[t - 1], 1.0);
    gap += std::abs(train / 499.0 - test / 999.0);
  }
  CHECK(gap / seeds < 0.05);
}

TEST_CASE("psis prequential densities") {
  // Conjugate normal model with exact posterior draws; columns in time order.
  std::mt19937_64 gen(17);
  std::normal_distribution<double> nd(0.3, 1.0);
  std::vector<double> y(40);
  for (double& v : y) v = nd(gen);
  psis::LogLikDrawMatrix m;
  m.values = oracle::conjugate_loglik_draws(y, 1.0, 10.0, 4000, gen);
  const PrequentialDensities pd = psis_prequential(m);
  REQUIRE(pd.log_pred.size() == y.size());

  // Exact p(y_t | y_<t) for the same model.
  const auto exact = [&](std::size_t t) {
    double sum = 0.0;
    for (std::size_t u = 0; u < t; ++u) sum += y[u];
    const double prec = 1.0 / 100.0 + static_cast<double>(t);
    const double var = 1.0 + 1.0 / prec;
    return normal_log_pdf(y[t], sum / prec, std::sqrt(var));
  };
  // The last point leaves out only itself: the PSIS-LOO value.
  const psis::LooResult loo = psis::psis_loo(m);
  CHECK(pd.log_pred.back() == doctest::Approx(loo.loo.back()).epsilon(1e-12));
  for (std::size_t t = 30; t < y.size(); ++t) CHECK(std::abs(pd.log_pred[t] - exact(t)) < 0.05);
  // Early times remove most of the data and the weights degenerate.
  CHECK(pd.refit.front());
  CHECK(!pd.refit.back());
}

TEST_CASE("psis prequential flags drift") {
  std::mt19937_64 gen(19);
  std::vector<double> y(60);
  std::normal_distribution<double> early(-2.0, 0.5), late(2.0, 0.5);
  for (std::size_t t = 0; t < y.size(); ++t) y[t] = t < 30 ? early(gen) : late(gen);
  psis::LogLikDrawMatrix m;
  m.values = oracle::conjugate_loglik_draws(y, 1.0, 10.0, 2000, gen);
  const PrequentialDensities pd = psis_prequential(m);
  for (std::size_t t = 0; t < 5; ++t) CHECK(pd.refit[t]);
}
