#include "stackd/simlab.hpp"

#include "stackd/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace stackd::simlab {

namespace {

constexpr int kMaxQuadratureOrder = 1024;
constexpr double kOrderShiftTolerance = 1e-4;

void check_sd(double sd, const char* what) {
  if (!(sd > 0.0) || !std::isfinite(sd)) {
    std::ostringstream os;
    os << what << " must be positive and finite, got " << sd;
    throw Error(ErrorKind::invalid_argument, os.str());
  }
}

double mixture_cdf(const TruthSpec& t, double x, double y) {
  if (y == kNegInf) return 0.0;
  if (y == std::numeric_limits<double>::infinity()) return 1.0;
  double c = 0.0;
  for (const auto& comp : t.components) c += comp.weight * std_normal_cdf((y - comp.mu(x)) / comp.sigma(x));
  return c;
}

/// Coefficients of log N(y | a) - log N(y | b) - margin = A y^2 + B y + C.
struct Quadratic {
  double a, b, c;
  double operator()(double y) const { return (a * y + b) * y + c; }
};

Quadratic log_ratio_quadratic(double mu_a, double sd_a, double mu_b, double sd_b, double margin) {
  const double va = sd_a * sd_a;
  const double vb = sd_b * sd_b;
  return {-0.5 / va + 0.5 / vb, mu_a / va - mu_b / vb,
          -0.5 * mu_a * mu_a / va + 0.5 * mu_b * mu_b / vb - std::log(sd_a) + std::log(sd_b) - margin};
}

void push_roots(const Quadratic& q, std::vector<double>& roots) {
  const double scale = std::max({std::abs(q.a), std::abs(q.b), 1e-300});
  if (std::abs(q.a) <= 1e-14 * scale) {
    if (q.b != 0.0) roots.push_back(-q.c / q.b);
    return;
  }
  const double disc = q.b * q.b - 4.0 * q.a * q.c;
  if (disc < 0.0) return;
  const double sq = std::sqrt(disc);
  // Numerically stable pair of roots.
  const double qq = -0.5 * (q.b + std::copysign(sq, q.b));
  if (qq != 0.0) {
    roots.push_back(qq / q.a);
    roots.push_back(q.c / qq);
  } else {
    roots.push_back(0.0);
  }
}

struct Expanded {
  weights::LooDensityMatrix matrix;
  std::vector<double> row_weights;
};

Expanded expand_quadrature(const std::vector<NormalPredictiveSpec>& specs, const TruthSpec& t, int order) {
  const GaussHermiteRule rule = gauss_hermite(order);
  const double inv_sqrt_pi = 1.0 / std::sqrt(kPi);
  std::size_t rows = 0;
  for (const auto& g : t.grid) {
    if (g.mass > 0.0) rows += t.components.size() * rule.nodes.size();
  }
  Expanded e;
  e.matrix.logdens.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(specs.size()));
  e.row_weights.reserve(rows);
  Eigen::Index r = 0;
  for (const auto& g : t.grid) {
    if (g.mass <= 0.0) continue;
    for (const auto& comp : t.components) {
      const double mu = comp.mu(g.x);
      const double sd = comp.sigma(g.x);
      for (std::size_t j = 0; j < rule.nodes.size(); ++j, ++r) {
        const double y = mu + std::sqrt(2.0) * sd * rule.nodes[j];
        e.row_weights.push_back(g.mass * comp.weight * rule.weights[j] * inv_sqrt_pi);
        for (std::size_t k = 0; k < specs.size(); ++k) {
          const double v = normal_log_pdf(y, specs[k].mu(g.x), specs[k].sigma(g.x));
          if (!std::isfinite(v)) {
            std::ostringstream os;
            os << "population stacking: non-finite log density at x = " << g.x << ", node " << j;
            throw Error(ErrorKind::quadrature, os.str());
          }
          e.matrix.logdens(r, static_cast<Eigen::Index>(k)) = v;
        }
      }
    }
  }
  return e;
}

PopulationStacking solve_at_order(const std::vector<NormalPredictiveSpec>& specs, const TruthSpec& t, int order) {
  const Expanded e = expand_quadrature(specs, t, order);
  weights::StackingConfig cfg;
  cfg.reltol = 1e-12;
  const weights::StackingResult r = weights::stacking_weights(e.matrix, e.row_weights, cfg);
  return {r.weights, order, r.diagnostics.objective};
}

double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

struct SampleMoments {
  double mean, sd, mean_se, sd_se;
};

SampleMoments sample_moments(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double m2 = 0.0, m4 = 0.0;
  for (double x : v) {
    const double d = (x - mean) * (x - mean);
    m2 += d;
    m4 += d * d;
  }
  const double var = m2 / (n - 1.0);
  m4 /= n;
  const double sd = std::sqrt(var);
  // Delta method: Var(s^2) ~ (m4 - var^2) / n, and s = sqrt(s^2).
  const double sd_se = std::sqrt(std::max(m4 - var * var, 0.0) / n) / (2.0 * sd);
  return {mean, sd, sd / std::sqrt(n), sd_se};
}

}  // namespace

TruthSpec TruthSpec::normal(Curve mu_star, Curve sigma_star, std::vector<GridPoint> grid) {
  TruthSpec t;
  t.components.push_back({1.0, std::move(mu_star), std::move(sigma_star)});
  t.grid = std::move(grid);
  t.validate();
  return t;
}

void TruthSpec::validate() const {
  if (components.empty()) throw Error(ErrorKind::invalid_argument, "truth: no components");
  if (grid.empty()) throw Error(ErrorKind::invalid_argument, "truth: empty covariate grid");
  double cw = 0.0;
  for (const auto& c : components) {
    if (!(c.weight >= 0.0)) throw Error(ErrorKind::invalid_argument, "truth: negative component weight");
    cw += c.weight;
  }
  double mass = 0.0;
  for (const auto& g : grid) {
    if (!(g.mass >= 0.0)) throw Error(ErrorKind::invalid_argument, "truth: negative grid mass");
    mass += g.mass;
    for (const auto& c : components) check_sd(c.sigma(g.x), "truth sigma");
  }
  if (std::abs(cw - 1.0) > 1e-9 || std::abs(mass - 1.0) > 1e-9) {
    throw Error(ErrorKind::invalid_argument, "truth: component weights and grid masses must each sum to 1");
  }
}

std::vector<GridPoint> uniform_grid(double lo, double hi, std::size_t n) {
  if (n == 0 || !(hi > lo)) throw Error(ErrorKind::invalid_argument, "uniform grid: need n >= 1 and hi > lo");
  std::vector<GridPoint> g(n);
  const double h = (hi - lo) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = {lo + (static_cast<double>(i) + 0.5) * h, 1.0 / static_cast<double>(n)};
  return g;
}

double normal_normal_log_marginal(std::span<const double> y, double lik_sd, double prior_sd) {
  check_sd(lik_sd, "lik_sd");
  check_sd(prior_sd, "prior_sd");
  if (y.empty()) throw Error(ErrorKind::invalid_argument, "log marginal: need at least one observation");
  const double n = static_cast<double>(y.size());
  const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : y) ss += (v - ybar) * (v - ybar);
  const double s2 = lik_sd * lik_sd;
  // Factor the likelihood through ybar, then integrate the mean out:
  // ybar ~ N(0, s2 / n + prior_sd^2).
  return -0.5 * n * (kLog2Pi + std::log(s2)) - ss / (2.0 * s2) + 0.5 * (kLog2Pi + std::log(s2 / n)) +
         normal_log_pdf(ybar, 0.0, std::sqrt(s2 / n + prior_sd * prior_sd));
}

std::vector<double> exact_conjugate_loo(std::span<const double> y, double lik_sd, double prior_sd) {
  check_sd(lik_sd, "lik_sd");
  check_sd(prior_sd, "prior_sd");
  if (y.size() < 2) throw Error(ErrorKind::invalid_argument, "exact loo: need at least two observations");
  const double total = std::accumulate(y.begin(), y.end(), 0.0);
  const double s2 = lik_sd * lik_sd;
  const double prior_prec = 1.0 / (prior_sd * prior_sd);
  const double post_prec = prior_prec + static_cast<double>(y.size() - 1) / s2;
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double mean = ((total - y[i]) / s2) / post_prec;
    out[i] = normal_log_pdf(y[i], mean, std::sqrt(s2 + 1.0 / post_prec));
  }
  return out;
}

LpdMoments lpd_moments(const NormalPredictiveSpec& k, const TruthSpec& t, double x) {
  if (t.components.size() != 1) {
    throw Error(ErrorKind::invalid_argument, "lpd moments: truth must be a single normal");
  }
  const double mu_star = t.components[0].mu(x);
  const double sd_star = t.components[0].sigma(x);
  const double mu_k = k.mu(x);
  const double sd_k = k.sigma(x);
  check_sd(sd_k, "model sigma");
  check_sd(sd_star, "truth sigma");
  // log p = -c Z - 0.5 log(2 pi sd_k^2), Z ~ noncentral chi^2(1, lambda).
  const double c = sd_star * sd_star / (2.0 * sd_k * sd_k);
  const double lambda = (mu_star - mu_k) * (mu_star - mu_k) / (sd_star * sd_star);
  const double z_mean = 1.0 + lambda;
  const double z_var = 2.0 * (1.0 + 2.0 * lambda);
  return {-c * z_mean - 0.5 * (kLog2Pi + 2.0 * std::log(sd_k)), c * std::sqrt(z_var)};
}

double pointwise_elpd(const NormalPredictiveSpec& k, const TruthSpec& t, double x) {
  const double mu_k = k.mu(x);
  const double sd_k = k.sigma(x);
  check_sd(sd_k, "model sigma");
  double second = 0.0;
  for (const auto& c : t.components) {
    const double d = c.mu(x) - mu_k;
    const double s = c.sigma(x);
    second += c.weight * (d * d + s * s);
  }
  return -second / (2.0 * sd_k * sd_k) - 0.5 * (kLog2Pi + 2.0 * std::log(sd_k));
}

std::vector<LocalBest> local_best_map(const std::vector<NormalPredictiveSpec>& specs, const TruthSpec& t) {
  if (specs.empty()) throw Error(ErrorKind::invalid_argument, "local best: no models");
  t.validate();
  std::vector<LocalBest> out;
  out.reserve(t.grid.size());
  std::vector<double> elpd(specs.size());
  for (const auto& g : t.grid) {
    for (std::size_t k = 0; k < specs.size(); ++k) elpd[k] = pointwise_elpd(specs[k], t, g.x);
    const double best = *std::max_element(elpd.begin(), elpd.end());
    LocalBest lb{g.x, std::vector<double>(specs.size(), 0.0), 0, std::numeric_limits<double>::infinity()};
    std::size_t ties = 0;
    for (std::size_t k = 0; k < specs.size(); ++k) ties += elpd[k] == best;
    bool first = true;
    for (std::size_t k = 0; k < specs.size(); ++k) {
      if (elpd[k] == best) {
        lb.share[k] = 1.0 / static_cast<double>(ties);
        if (first) lb.best = k;
        first = false;
      } else {
        lb.margin = std::min(lb.margin, best - elpd[k]);
      }
    }
    if (ties > 1) lb.margin = 0.0;
    out.push_back(std::move(lb));
  }
  return out;
}

SimplexWeights local_best_proportions(const std::vector<NormalPredictiveSpec>& specs, const TruthSpec& t) {
  const auto map = local_best_map(specs, t);
  std::vector<double> p(specs.size(), 0.0);
  for (std::size_t i = 0; i < map.size(); ++i) {
    for (std::size_t k = 0; k < specs.size(); ++k) p[k] += t.grid[i].mass * map[i].share[k];
  }
  return SimplexWeights(std::move(p));
}

PopulationStacking population_stacking(const std::vector<NormalPredictiveSpec>& specs, const TruthSpec& t,
                                       int quadrature_order) {
  if (specs.empty()) throw Error(ErrorKind::invalid_argument, "population stacking: no models");
  if (quadrature_order < 20) {
    throw Error(ErrorKind::invalid_argument, "population stacking: quadrature order must be >= 20");
  }
  t.validate();
  if (specs.size() == 1) return {SimplexWeights::vertex(1, 0), quadrature_order, 0.0};

  PopulationStacking cur = solve_at_order(specs, t, quadrature_order);
  while (cur.order * 2 <= kMaxQuadratureOrder) {
    PopulationStacking next = solve_at_order(specs, t, cur.order * 2);
    const double shift = next.weights.l1_distance(cur.weights);
    cur = std::move(next);
    if (shift <= kOrderShiftTolerance) break;
  }
  return cur;
}

double separation_probability(const std::vector<NormalPredictiveSpec>& specs, const TruthSpec& t,
                              double margin) {
  t.validate();
  if (specs.size() < 2) return 1.0;
  const auto map = local_best_map(specs, t);
  double p0 = 1.0;
  for (std::size_t i = 0; i < t.grid.size(); ++i) {
    if (t.grid[i].mass <= 0.0) continue;
    const double x = t.grid[i].x;
    const std::size_t best = map[i].best;
    std::vector<Quadratic> conds;
    std::vector<double> roots;
    for (std::size_t k = 0; k < specs.size(); ++k) {
      if (k == best) continue;
      conds.push_back(log_ratio_quadratic(specs[best].mu(x), specs[best].sigma(x), specs[k].mu(x),
                                          specs[k].sigma(x), margin));
      push_roots(conds.back(), roots);
    }
    std::sort(roots.begin(), roots.end());
    std::vector<double> cuts{kNegInf};
    cuts.insert(cuts.end(), roots.begin(), roots.end());
    cuts.push_back(std::numeric_limits<double>::infinity());

    double prob = 0.0;
    for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
      const double lo = cuts[s];
      const double hi = cuts[s + 1];
      if (!(hi > lo)) continue;
      double probe;
      if (lo == kNegInf && hi == std::numeric_limits<double>::infinity()) {
        probe = 0.0;
      } else if (lo == kNegInf) {
        probe = hi - 1.0;
      } else if (hi == std::numeric_limits<double>::infinity()) {
        probe = lo + 1.0;
      } else {
        probe = 0.5 * (lo + hi);
      }
      const bool ok = std::all_of(conds.begin(), conds.end(), [&](const Quadratic& q) { return q(probe) >= 0.0; });
      if (ok) prob += mixture_cdf(t, x, hi) - mixture_cdf(t, x, lo);
    }
    // Ties leave no margin anywhere.
    if (map[i].margin == 0.0) prob = 0.0;
    p0 = std::min(p0, prob);
  }
  return p0;
}

SeparationReport theorem2_experiment(const std::vector<NormalPredictiveSpec>& specs, const TruthSpec& t,
                                   const SeparationParams& params, int quadrature_order) {
  SeparationReport r;
  r.stacking = population_stacking(specs, t, quadrature_order).weights;
  r.local_best = local_best_proportions(specs, t);
  r.l1_distance = r.stacking.l1_distance(r.local_best);
  const auto map = local_best_map(specs, t);
  r.min_elpd_margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (t.grid[i].mass > 0.0) r.min_elpd_margin = std::min(r.min_elpd_margin, map[i].margin);
  }
  r.requested_margin = params.margin;
  r.requested_p0 = params.p0;
  r.measured_p0 = separation_probability(specs, t, params.margin);
  r.separated = r.measured_p0 >= params.p0;
  return r;
}

SimplexWeights marginal_style_weights(const std::vector<NormalPredictiveSpec>& specs, const TruthSpec& t,
                                      double n_obs) {
  t.validate();
  std::vector<double> z(specs.size(), 0.0);
  for (std::size_t k = 0; k < specs.size(); ++k) {
    for (const auto& g : t.grid) z[k] += g.mass * pointwise_elpd(specs[k], t, g.x);
    z[k] *= n_obs;
  }
  return SimplexWeights(softmax(z));
}

Design regime_design(double offset, double share_first, std::size_t grid_points, double spread) {
  const auto truth_mu = [](double x) { return std::sin(2.0 * kPi * x); };
  const auto unit = [](double) { return 1.0; };
  Design d;
  d.specs.push_back({[=](double x) { return truth_mu(x) + (x < share_first ? 0.0 : offset); }, unit});
  d.specs.push_back({[=](double x) { return truth_mu(x) + (x < share_first ? offset : 0.0); },
                     [=](double x) { return x < share_first ? spread : 1.0; }});
  d.truth = TruthSpec::normal(truth_mu, unit, uniform_grid(0.0, 1.0, grid_points));
  return d;
}

Design two_mode_surrogate(double noise_sd, double miss, std::size_t grid_points) {
  const auto latent = [](double x) { return 0.3 + 0.4 * x + 0.5 * std::sin(2.7 * x) + 1.1 / (1.0 + x * x); };
  // Band 1 (short length scale) follows the curve left of the split, band 2 right of it.
  constexpr double split = 0.6;
  Design d;
  d.specs.push_back({[=](double x) { return latent(x) + (x < split ? 0.0 : miss); }, [](double) { return 0.24; }});
  d.specs.push_back({[=](double x) { return latent(x) + (x < split ? miss : 0.0); }, [](double) { return 0.26; }});
  d.truth = TruthSpec::normal(latent, [=](double) { return noise_sd; }, uniform_grid(-3.0, 3.0, grid_points));
  return d;
}

Design mixture_truth_design(double first_weight) {
  Design d;
  d.specs.push_back({[](double) { return -1.0; }, [](double) { return 1.0; }});
  d.specs.push_back({[](double) { return 1.0; }, [](double) { return 1.0; }});
  d.truth.components.push_back({first_weight, d.specs[0].mu, d.specs[0].sigma});
  d.truth.components.push_back({1.0 - first_weight, d.specs[1].mu, d.specs[1].sigma});
  d.truth.grid = {{0.0, 1.0}};
  d.truth.validate();
  return d;
}

std::vector<PriorSensitivityRow> prior_sensitivity(std::uint64_t seed, std::size_t n, double data_sd, double lik_sd,
                                                   std::vector<double> prior_sds) {
  if (prior_sds.empty()) throw Error(ErrorKind::invalid_argument, "prior sensitivity: no prior sds");
  Rng rng(seed);
  std::vector<double> y(n);
  for (double& v : y) v = data_sd * rng.normal();
  std::vector<PriorSensitivityRow> rows;
  const double first = normal_normal_log_marginal(y, lik_sd, prior_sds.front());
  for (double sd : prior_sds) {
    const double lm = normal_normal_log_marginal(y, lik_sd, sd);
    rows.push_back({sd, lm, std::exp(first - lm)});
  }
  return rows;
}

ChisqReport chisq_moments(std::uint64_t seed, std::size_t draws, std::vector<double> gammas,
                          std::vector<double> sigma_ks) {
  if (draws < 2) throw Error(ErrorKind::invalid_argument, "chisq moments: need at least 2 draws");
  ChisqReport rep;
  const auto unit = [](double) { return 1.0; };
  const auto zero = [](double) { return 0.0; };
  const TruthSpec truth = TruthSpec::normal(zero, unit, {{0.0, 1.0}});

  std::uint64_t cell = 0;
  const auto simulate = [&](double gamma, double sigma_k) {
    Rng rng(splitmix64(seed ^ splitmix64(++cell)));
    std::vector<double> lpd(draws);
    for (double& v : lpd) v = normal_log_pdf(rng.normal(), gamma, sigma_k);
    return sample_moments(lpd);
  };

  for (double sk : sigma_ks) {
    const SampleMoments ref = simulate(0.0, sk);
    std::vector<double> lg, lshift, lsd;
    for (double g : gammas) {
      const NormalPredictiveSpec model{[=](double) { return g; }, [=](double) { return sk; }};
      const LpdMoments closed = lpd_moments(model, truth, 0.0);
      const SampleMoments mc = simulate(g, sk);
      rep.rows.push_back({g, sk, closed.mean, closed.sd, mc.mean, mc.sd, mc.mean_se, mc.sd_se});
      lg.push_back(std::log(g));
      lshift.push_back(std::log(std::abs(mc.mean - ref.mean)));
      lsd.push_back(std::log(mc.sd));
    }
    rep.mean_exponent.push_back(least_squares_slope(lg, lshift));
    rep.sd_exponent.push_back(least_squares_slope(lg, lsd));
  }
  return rep;
}

}  // namespace stackd::simlab
