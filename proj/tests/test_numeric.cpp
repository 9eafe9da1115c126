#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stackd/numeric.hpp"
#include "stackd/simplex.hpp"

#include <atomic>
#include <cstdlib>

using namespace stackd;

TEST_CASE("log_sum_exp is stable and handles -inf") {
  const std::vector<double> big{1000.0, 1000.0};
  CHECK(log_sum_exp(big) == doctest::Approx(1000.0 + std::log(2.0)));
  const std::vector<double> tiny{-1000.0, -1000.0 - std::log(3.0)};
  CHECK(log_sum_exp(tiny) == doctest::Approx(-1000.0 + std::log(4.0 / 3.0)));
  const std::vector<double> none{kNegInf, kNegInf};
  CHECK(log_sum_exp(none) == kNegInf);
  CHECK(log_sum_exp(std::vector<double>{}) == kNegInf);
}

TEST_CASE("softmax zeroes -inf entries") {
  const auto w = softmax(std::vector<double>{0.0, kNegInf, std::log(3.0)});
  CHECK(w[0] == doctest::Approx(0.25));
  CHECK(w[1] == 0.0);
  CHECK(w[2] == doctest::Approx(0.75));
}

TEST_CASE("Gauss-Hermite integrates polynomials and Gaussian moments") {
  for (int order : {20, 64, 128}) {
    const auto rule = gauss_hermite(order);
    double w = 0.0, m2 = 0.0, m4 = 0.0;
    for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
      const double t = rule.nodes[j];
      w += rule.weights[j];
      m2 += rule.weights[j] * t * t;
      m4 += rule.weights[j] * t * t * t * t;
    }
    CHECK(w == doctest::Approx(std::sqrt(kPi)).epsilon(1e-12));
    CHECK(m2 == doctest::Approx(std::sqrt(kPi) / 2.0).epsilon(1e-12));
    CHECK(m4 == doctest::Approx(3.0 * std::sqrt(kPi) / 4.0).epsilon(1e-12));
    CHECK(std::is_sorted(rule.nodes.begin(), rule.nodes.end()));
  }
}

TEST_CASE("Rng draws are reproducible and roughly standard") {
  Rng a(42), b(42);
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < 200000; ++i) {
    const double x = a.normal();
    CHECK_EQ(x, b.normal());
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / 200000) < 0.01);
  CHECK(std::abs(sq / 200000 - 1.0) < 0.02);
  Rng e(7);
  double es = 0.0;
  for (int i = 0; i < 200000; ++i) es += e.exponential();
  CHECK(std::abs(es / 200000 - 1.0) < 0.01);
}

TEST_CASE("parallel_for visits every index once and rethrows") {
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; });
  for (const auto& h : hits) CHECK(h.load() == 1);
  CHECK_THROWS_AS(parallel_for(10, [](std::size_t i) {
                    if (i == 7) throw Error(ErrorKind::invalid_argument, "boom");
                  }),
                  Error);
}

TEST_CASE("STACKD_THREADS caps the worker count") {
  setenv("STACKD_THREADS", "1", 1);
  CHECK(worker_count() == 1);
  unsetenv("STACKD_THREADS");
}

TEST_CASE("SimplexWeights validates and cleans rounding") {
  SimplexWeights w({0.25, 0.75 + 1e-13});
  double s = 0.0;
  for (double v : w.values()) s += v;
  CHECK(std::abs(s - 1.0) <= SimplexWeights::kSumTolerance);
  CHECK_THROWS_AS(SimplexWeights({0.5, 0.6}), Error);
  CHECK_THROWS_AS(SimplexWeights({-0.1, 1.1}), Error);
  CHECK_THROWS_AS(SimplexWeights(std::vector<double>{}), Error);
  CHECK(SimplexWeights::vertex(3, 1)[1] == 1.0);
  CHECK(SimplexWeights::uniform(4).l1_distance(SimplexWeights::vertex(4, 0)) == doctest::Approx(1.5));
}
