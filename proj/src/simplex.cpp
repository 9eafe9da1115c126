#include "stackd/simplex.hpp"

#include "stackd/numeric.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace stackd {

SimplexWeights::SimplexWeights(std::vector<double> w) : w_(std::move(w)) {
  if (w_.empty()) throw Error(ErrorKind::invalid_argument, "simplex weights: empty");
  double sum = 0.0;
  for (double& v : w_) {
    if (!std::isfinite(v) || v < -1e-12) {
      std::ostringstream os;
      os << "simplex weights: invalid entry " << v;
      throw Error(ErrorKind::invalid_argument, os.str());
    }
    if (v < 0.0) v = 0.0;
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    std::ostringstream os;
    os << "simplex weights: sum is " << sum;
    throw Error(ErrorKind::invalid_argument, os.str());
  }
  for (double& v : w_) v /= sum;
}

SimplexWeights SimplexWeights::uniform(std::size_t k) {
  return SimplexWeights(std::vector<double>(k, 1.0 / static_cast<double>(k)));
}

SimplexWeights SimplexWeights::vertex(std::size_t k, std::size_t at) {
  std::vector<double> w(k, 0.0);
  w.at(at) = 1.0;
  return SimplexWeights(std::move(w));
}

double SimplexWeights::l1_distance(const SimplexWeights& other) const {
  if (other.size() != size()) {
    throw Error(ErrorKind::dimension_mismatch, "simplex weights: length mismatch");
  }
  double d = 0.0;
  for (std::size_t k = 0; k < w_.size(); ++k) d += std::abs(w_[k] - other.w_[k]);
  return d;
}

}  // namespace stackd
