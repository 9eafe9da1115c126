#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stackd {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kLog2Pi = 1.83787706640934548356;

/// Error categories surfaced to callers. The CLI maps these onto exit codes.
enum class ErrorKind {
  invalid_argument,
  dimension_mismatch,
  degenerate_tail,
  too_few_tail_samples,
  singular_matrix,
  infeasible,
  quadrature,
  io,
  parse,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// log(sum(exp(x))). Returns -inf for an empty or all -inf input.
double log_sum_exp(std::span<const double> x);

// log(sum(exp(a + b))) elementwise over two equal-length spans.
double log_sum_exp(std::span<const double> a, std::span<const double> b);

inline double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& x) {
  return log_sum_exp(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
}

// Softmax with max shift; -inf entries map to exactly 0.
std::vector<double> softmax(std::span<const double> x);

double normal_pdf(double x, double mu, double sigma);
double normal_log_pdf(double x, double mu, double sigma);
double std_normal_cdf(double z);

/// Gauss-Hermite rule for the physicists' weight exp(-t^2).
/// Nodes are ascending; weights sum to sqrt(pi).
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
GaussHermiteRule gauss_hermite(int order);

// SplitMix64 step; used to derive independent per-replicate seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Portable uniform/exponential draws on top of std::mt19937_64, whose
/// output sequence is fixed by the standard (the std distributions are not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  double uniform();            // (0, 1)
  double exponential();        // rate 1
  double normal();             // standard normal, Box-Muller
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Worker count: STACKD_THREADS when set and positive, else hardware concurrency.
unsigned worker_count();

/// Runs body(i) for i in [0, n) across up to worker_count() threads.
/// body must not touch shared mutable state.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace stackd
