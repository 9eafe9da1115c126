#include "stackd/simplex_solver.hpp"

#include "stackd/numeric.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace stackd {

namespace {

constexpr double kLogFloor = -700.0;
constexpr double kArmijo = 1e-4;
constexpr int kMaxHalvings = 60;
// A coordinate below this weight whose gradient points out of the support is
// moved to the boundary.
constexpr double kDropWeight = 1e-8;
constexpr int kMaxActiveSetRounds = 50;
// Largest move of any log weight in one step.
constexpr double kMaxLogStep = 30.0;

struct Point {
  Eigen::VectorXd z;  // free coordinates
  std::vector<double> w;
  std::vector<double> grad;  // df/dw, full length
  double f = kNegInf;
  Eigen::VectorXd gz;
};

/// Softmax over the active coordinates, with the reference coordinate held at
/// zero and inactive coordinates at weight zero.
class Problem {
 public:
  Problem(const SimplexObjective& f, std::vector<std::size_t> active, std::size_t ref, std::size_t k)
      : f_(f), active_(std::move(active)), ref_(ref), k_(k) {}

  Eigen::Index dim() const { return static_cast<Eigen::Index>(active_.size()) - 1; }

  Eigen::VectorXd encode(const std::vector<double>& w) const {
    const auto log_of = [](double v) { return v > 0.0 ? std::max(std::log(v), kLogFloor) : kLogFloor; };
    Eigen::VectorXd z(dim());
    Eigen::Index free = 0;
    for (std::size_t j : active_) {
      if (j != ref_) z[free++] = log_of(w[j]) - log_of(w[ref_]);
    }
    return z;
  }

  Point eval(const Eigen::VectorXd& z) const {
    Point p;
    p.z = z;
    std::vector<double> logits(active_.size());
    Eigen::Index free = 0;
    for (std::size_t a = 0; a < active_.size(); ++a) logits[a] = active_[a] == ref_ ? 0.0 : z[free++];
    const std::vector<double> sm = softmax(logits);
    p.w.assign(k_, 0.0);
    for (std::size_t a = 0; a < active_.size(); ++a) p.w[active_[a]] = sm[a];
    p.grad.assign(k_, 0.0);
    p.f = f_(p.w, p.grad);
    p.gz = Eigen::VectorXd::Zero(z.size());
    if (!std::isfinite(p.f)) {
      p.f = kNegInf;
      return p;
    }
    const double mean = mean_gradient(p);
    free = 0;
    for (std::size_t j : active_) {
      if (j != ref_) p.gz[free++] = p.w[j] * (p.grad[j] - mean);
    }
    return p;
  }

  /// Inverse of the softmax metric: a step along H0 * gz moves each log
  /// weight by its raw gradient excess, which stays well scaled when some
  /// weights are tiny.
  Eigen::MatrixXd initial_inverse_hessian(const Point& p) const {
    Eigen::VectorXd diag(dim());
    Eigen::Index free = 0;
    for (std::size_t j : active_) {
      if (j != ref_) diag[free++] = 1.0 / std::max(p.w[j], 1e-300);
    }
    return diag.asDiagonal();
  }

  static double mean_gradient(const Point& p) {
    double mean = 0.0;
    for (std::size_t j = 0; j < p.w.size(); ++j) mean += p.w[j] * p.grad[j];
    return mean;
  }

 private:
  const SimplexObjective& f_;
  std::vector<std::size_t> active_;
  std::size_t ref_;
  std::size_t k_;
};

struct Phase {
  Point point;
  std::size_t iterations = 0;
  bool converged = false;
  bool dropped = false;  // stopped early to shrink the support
};

/// BFGS ascent in softmax coordinates over a fixed support.
Phase ascend(const Problem& problem, Point cur, double reltol, std::size_t max_iter) {
  Phase out;
  const Eigen::Index d = problem.dim();
  if (d == 0) {
    out.point = std::move(cur);
    out.converged = true;
    return out;
  }
  Eigen::MatrixXd h = problem.initial_inverse_hessian(cur);
  bool fresh_h = true;
  int small_steps = 0;
  std::size_t it = 0;
  for (; it < max_iter; ++it) {
    if (cur.gz.norm() < 1e-14) {
      out.converged = true;
      break;
    }
    Eigen::VectorXd dir = h * cur.gz;
    double slope = cur.gz.dot(dir);
    if (!(slope > 0.0)) {
      h = problem.initial_inverse_hessian(cur);
      fresh_h = true;
      dir = h * cur.gz;
      slope = cur.gz.dot(dir);
    }

    double step = std::min(1.0, kMaxLogStep / std::max(dir.lpNorm<Eigen::Infinity>(), 1e-300));
    Point next;
    bool accepted = false;
    for (int half = 0; half < kMaxHalvings; ++half) {
      next = problem.eval(cur.z + step * dir);
      if (next.f >= cur.f + kArmijo * step * slope && next.f > kNegInf) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (!fresh_h) {
        h = problem.initial_inverse_hessian(cur);
        fresh_h = true;
        continue;
      }
      // No ascent possible along the gradient: numerically stationary.
      out.converged = true;
      break;
    }

    const double change = next.f - cur.f;
    const Eigen::VectorXd s = next.z - cur.z;
    const Eigen::VectorXd y = cur.gz - next.gz;  // gradient change of -f
    cur = std::move(next);

    const double sy = s.dot(y);
    if (sy > 1e-300 && std::isfinite(sy)) {
      fresh_h = false;
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
      h = (eye - rho * s * y.transpose()) * h * (eye - rho * y * s.transpose()) + rho * s * s.transpose();
    }

    const double mean = Problem::mean_gradient(cur);
    bool shrink = false;
    for (std::size_t j = 0; j < cur.w.size(); ++j) {
      shrink = shrink || (cur.w[j] > 0.0 && cur.w[j] < kDropWeight && cur.grad[j] < mean);
    }
    if (shrink) {
      out.dropped = true;
      ++it;
      break;
    }

    if (change <= reltol * (std::abs(cur.f) + reltol)) {
      if (++small_steps >= 2) {
        out.converged = true;
        ++it;
        break;
      }
    } else {
      small_steps = 0;
    }
  }
  out.point = std::move(cur);
  out.iterations = it;
  return out;
}

}  // namespace

SimplexSolve maximize_on_simplex(const SimplexObjective& f, std::span<const double> start,
                                 std::size_t pinned, double reltol, std::size_t max_iter) {
  const std::size_t k = start.size();
  if (k == 0) throw Error(ErrorKind::invalid_argument, "simplex solver: empty start");
  if (pinned >= k) throw Error(ErrorKind::invalid_argument, "simplex solver: pinned index out of range");

  std::vector<std::size_t> all(k);
  for (std::size_t j = 0; j < k; ++j) all[j] = j;
  std::vector<double> w(start.begin(), start.end());
  Point cur = Problem(f, all, pinned, k).eval(Problem(f, all, pinned, k).encode(w));

  SimplexSolve out;
  if (k == 1) {
    out.w = cur.w;
    out.objective = cur.f;
    out.converged = true;
    return out;
  }
  if (cur.f == kNegInf) {
    throw Error(ErrorKind::infeasible, "simplex solver: objective is -inf at the starting point");
  }

  std::vector<bool> active(k, true);
  std::size_t used = 0;
  for (int round = 0; round < kMaxActiveSetRounds && used < max_iter; ++round) {
    std::vector<std::size_t> support;
    for (std::size_t j = 0; j < k; ++j) {
      if (active[j]) support.push_back(j);
    }
    // Reference coordinate: the pinned one while it is in the support,
    // otherwise the heaviest.
    std::size_t ref = pinned;
    if (!active[pinned]) {
      ref = support.front();
      for (std::size_t j : support) {
        if (cur.w[j] > cur.w[ref]) ref = j;
      }
    }
    const Problem problem(f, support, ref, k);
    const Point from = problem.eval(problem.encode(cur.w));
    if (from.f > kNegInf) cur = from;
    Phase phase = ascend(problem, cur, reltol, max_iter - used);
    used += phase.iterations;
    cur = std::move(phase.point);

    if (phase.dropped) {
      const double mean = Problem::mean_gradient(cur);
      for (std::size_t j = 0; j < k; ++j) {
        if (active[j] && cur.w[j] < kDropWeight && cur.grad[j] < mean) active[j] = false;
      }
      if (std::none_of(active.begin(), active.end(), [](bool a) { return a; })) active[ref] = true;
      continue;
    }
    if (!phase.converged) break;

    // Optimality: no near-zero model may want mass. Excluded models that do
    // are brought back; tiny ones that do not are excluded.
    const double mean = Problem::mean_gradient(cur);
    const double tol = 1e-9 * std::max(1.0, std::abs(mean));
    bool changed = false;
    for (std::size_t j = 0; j < k; ++j) {
      if (cur.w[j] >= kDropWeight) continue;
      if (cur.grad[j] > mean + tol) {
        active[j] = true;
        cur.w[j] = 1e-6;
        changed = true;
      } else if (active[j] && cur.w[j] > 0.0 && std::count(active.begin(), active.end(), true) > 1) {
        active[j] = false;
        cur.w[j] = 0.0;
        changed = true;
      }
    }
    if (!changed) {
      out.converged = true;
      break;
    }
    double total = 0.0;
    for (double v : cur.w) total += v;
    for (double& v : cur.w) v /= total;
  }

  out.w = cur.w;
  out.objective = cur.f;
  out.iterations = used;
  out.grad_norm = cur.gz.norm();
  return out;
}

}  // namespace stackd
