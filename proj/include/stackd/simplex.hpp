#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace stackd {

/// Nonnegative weights summing to one.
class SimplexWeights {
 public:
  static constexpr double kSumTolerance = 1e-12;

  SimplexWeights() = default;
  // Validates; entries within rounding of the simplex are cleaned up
  // (tiny negatives clamped to zero, sum renormalized).
  explicit SimplexWeights(std::vector<double> w);

  static SimplexWeights uniform(std::size_t k);
  static SimplexWeights vertex(std::size_t k, std::size_t at);

  std::size_t size() const noexcept { return w_.size(); }
  double operator[](std::size_t k) const { return w_[k]; }
  const std::vector<double>& values() const noexcept { return w_; }
  std::span<const double> span() const noexcept { return w_; }

  double l1_distance(const SimplexWeights& other) const;

 private:
  std::vector<double> w_;
};

}  // namespace stackd
