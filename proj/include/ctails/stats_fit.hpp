#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ctails/brw.hpp"
#include "ctails/covariance.hpp"
#include "ctails/errors.hpp"
#include "ctails/numeric.hpp"
#include "ctails/parallel.hpp"
#include "ctails/rng.hpp"
#include "ctails/tilt_box.hpp"

namespace ctails {

// --- Tail estimates ------------------------------------------------------------

enum class TailMethod { naive, box };

inline std::string tail_method_name(TailMethod m) {
  return m == TailMethod::naive ? "naive" : "box";
}

struct TailPoint {
  double x = 0.0;
  double log_prob = kNegInf;  // log P(Z_n < -x)
  double ci_lo = kNegInf;     // on log_prob
  double ci_hi = kNegInf;
  std::size_t hits = 0;
  bool one_sided = false;  // no hits: only the upper limit is meaningful
};

struct TailEstimate {
  TailMethod method = TailMethod::naive;
  int n = 0;
  double beta = 0.0;
  double epsilon = 0.0;  // box method only
  std::size_t replicas = 0;
  std::vector<TailPoint> points;
};

inline TailEstimate empirical_tail(int n, double beta, std::size_t replicas,
                                   std::span<const double> x_grid, TailMethod method,
                                   std::uint64_t seed, double epsilon = 0.5,
                                   unsigned threads = 0) {
  TailEstimate est;
  est.method = method;
  est.n = n;
  est.beta = beta;
  est.replicas = replicas;

  if (method == TailMethod::box) {
    // One lower-bound point at x = (1 - eps) m_n from the box-event probability.
    est.epsilon = epsilon;
    RngStream rng(seed, 0);
    const BoxProbability bp = box_probability(n, epsilon, beta, replicas, rng);
    TailPoint pt;
    pt.x = (1.0 - epsilon) * essential_infimum(n, beta).magnitude;
    pt.log_prob = bp.log_prob;
    pt.ci_lo = bp.ci_lo;
    pt.ci_hi = bp.ci_hi;
    est.points.push_back(pt);
    return est;
  }

  if (replicas < 1000) throw ConfigError("empirical_tail: naive method needs >= 1000 replicas");
  const std::vector<double> z = replica_map<double>(
      replicas, seed,
      [n, beta](std::size_t, RngStream& rng) {
        return derivative_martingale(BrwRealization::sample(n, rng), beta);
      },
      threads);
  const double nn = static_cast<double>(replicas);
  for (double x : x_grid) {
    TailPoint pt;
    pt.x = x;
    for (double v : z) pt.hits += v < -x;
    const Interval w = wilson_interval(pt.hits, replicas);
    pt.ci_lo = w.lo > 0.0 ? std::log(w.lo) : kNegInf;
    pt.ci_hi = w.hi > 0.0 ? std::log(w.hi) : kNegInf;
    if (pt.hits == 0) {
      pt.one_sided = true;
    } else {
      pt.log_prob = std::log(static_cast<double>(pt.hits) / nn);
    }
    est.points.push_back(pt);
  }
  return est;
}

// --- The kappa functional --------------------------------------------------------

inline double kappa_epsilon(double epsilon, double beta, double theta_tol = 1e-10) {
  if (beta <= 0.0) throw ConfigError("kappa_epsilon: beta must be > 0");
  const AlphaPair a = solve_alphas(epsilon);
  return 0.5 * (std::log(2.0 * M_PI) + theta_constant(theta_tol)) -
         std::log((a.plus - a.minus) / beta) +
         0.5 * ((a.plus - 1.0) / beta) * ((a.plus - 1.0) / beta);
}

// --- Lower-bound report -----------------------------------------------------------

enum class BoxEstimator { importance_sampling, recursive };

struct LowerBoundRow {
  int n = 0;
  double log_prob = kNegInf;   // L_n
  double ratio = kNegInf;      // L_n / 2^n
  double neg_kappa = 0.0;      // -kappa_eps
  double margin = 0.0;         // finite-size allowance c n^2 / 2^n
  bool bound_ok = false;       // ratio >= -kappa - margin
  double ci_lo = kNegInf;      // on log_prob (importance sampling only)
  double ci_hi = kNegInf;
};

inline std::vector<LowerBoundRow> lower_bound_report(
    std::span<const int> n_grid, double epsilon, double beta, std::size_t samples,
    std::uint64_t seed, BoxEstimator estimator = BoxEstimator::importance_sampling,
    double margin_coeff = 5.0) {
  const double kappa = kappa_epsilon(epsilon, beta);
  std::vector<LowerBoundRow> rows;
  for (std::size_t j = 0; j < n_grid.size(); ++j) {
    const int n = n_grid[j];
    LowerBoundRow row;
    row.n = n;
    if (estimator == BoxEstimator::importance_sampling) {
      RngStream rng(seed, j);
      const BoxProbability bp = box_probability(n, epsilon, beta, samples, rng);
      row.log_prob = bp.log_prob;
      row.ci_lo = bp.ci_lo;
      row.ci_hi = bp.ci_hi;
    } else {
      row.log_prob = log_box_probability_recursive(n, epsilon, beta);
    }
    const double p = std::pow(2.0, n);
    row.ratio = row.log_prob / p;
    row.neg_kappa = -kappa;
    row.margin = margin_coeff * static_cast<double>(n) * static_cast<double>(n) / p;
    row.bound_ok = row.ratio >= row.neg_kappa - row.margin;
    rows.push_back(row);
  }
  return rows;
}

// --- Tail-exponent regression -------------------------------------------------------

struct GammaFit {
  double gamma_hat = 0.0;
  double stderr_ = 0.0;
  double intercept = 0.0;  // fitted log c in log(-log p) = intercept + gamma log x
  std::size_t n_points = 0;
};

inline GammaFit fit_gamma(std::span<const double> x, std::span<const double> log_prob) {
  if (x.size() != log_prob.size() || x.size() < 3)
    throw ConfigError("fit_gamma: need >= 3 (x, log_prob) points");
  std::vector<double> lx(x.size()), lly(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0)) throw ConfigError("fit_gamma: x values must be positive");
    if (!(log_prob[i] < 0.0)) throw ConfigError("fit_gamma: log_prob values must be < 0");
    lx[i] = std::log(x[i]);
    lly[i] = std::log(-log_prob[i]);
  }
  const LinearFit f = linear_fit(lx, lly);
  return {f.slope, f.slope_se, f.intercept, f.n};
}

// Full pipeline: lower-bound tail points at x = (1 - eps) m_n across n, then the
// log(-log) regression. The deterministic recursion supplies the points; the
// uniform-proposal importance sampler degenerates past n ~ 8 (weight variance
// grows like 2^n) while the fit needs the largest n for leverage.
inline GammaFit fit_gamma_from_box(std::span<const int> n_grid, double epsilon,
                                   double beta) {
  std::vector<double> x, lp;
  for (int n : n_grid) {
    x.push_back((1.0 - epsilon) * essential_infimum(n, beta).magnitude);
    lp.push_back(log_box_probability_recursive(n, epsilon, beta));
  }
  return fit_gamma(x, lp);
}

// --- Conditional remainder experiment -------------------------------------------------

struct RemainderCheckConfig {
  double epsilon = 0.25;
  double delta = 0.25;
  double p = 1.5;  // informational: the decay-rate exponent slot, in (1, min(gamma, 2))
  std::vector<int> n_grid;
  int m = 6;
};

inline void validate_remainder_config(const RemainderCheckConfig& cfg, double beta) {
  if (!(cfg.epsilon > 0.0 && cfg.epsilon < 1.0))
    throw ConfigError("remainder check: epsilon must lie in (0,1)");
  if (cfg.delta <= 0.0) throw ConfigError("remainder check: delta must be > 0");
  const double gamma = BetaParams{beta}.gamma();
  if (!(cfg.p > 1.0 && cfg.p < std::min(gamma, 2.0)))
    throw ConfigError("remainder check: p must lie in (1, min(gamma, 2))");
  if (cfg.m < 0) throw ConfigError("remainder check: m must be >= 0");
  if (cfg.n_grid.empty()) throw ConfigError("remainder check: empty n grid");
}

struct RemainderRow {
  int n = 0;
  std::size_t hits = 0;
  std::size_t samples = 0;
  double estimate = 0.0;  // P(|Z_{n+m} - Z_n| >= delta |Z_n| | box)
  Interval ci;
};

// Exact conditional-on-box leaf sampling (the box event has probability
// ~ e^{-kappa 2^n}, far beyond accept/reject or reweighting), then fresh
// depth-m subtrees hung off every leaf to realize Z_{n+m}.
inline std::vector<RemainderRow> box_conditional_remainder(
    const RemainderCheckConfig& cfg, double beta, std::size_t samples,
    std::uint64_t seed, unsigned threads = 0) {
  validate_remainder_config(cfg, beta);
  std::vector<RemainderRow> rows;
  for (std::size_t j = 0; j < cfg.n_grid.size(); ++j) {
    const int n = cfg.n_grid[j];
    const BoxConditionalSampler sampler(n, cfg.epsilon, beta);
    const int m = cfg.m;
    const std::vector<char> flags = replica_map<char>(
        samples, RngStream::derive(seed, j),
        [&sampler, &cfg, n, m, beta](std::size_t, RngStream& rng) -> char {
          const std::vector<double> leaves = sampler.sample_leaves(rng);
          const double zn = derivative_martingale(leaves, beta, static_cast<double>(n));
          if (m == 0) return 0;
          std::vector<double> terms(leaves.size());
          for (std::size_t u = 0; u < leaves.size(); ++u) {
            const BrwRealization sub = BrwRealization::sample(m, rng);
            const double zu = derivative_martingale(sub, beta);
            const double wu = additive_martingale(sub, beta);
            terms[u] = std::exp(beta * leaves[u] - 0.5 * beta * beta * n) *
                       (zu + (leaves[u] - beta * n) * wu);
          }
          const double znm =
              pairwise_sum(terms) / static_cast<double>(leaves.size());
          return std::abs(znm - zn) >= cfg.delta * std::abs(zn) ? 1 : 0;
        },
        threads);
    RemainderRow row;
    row.n = n;
    row.samples = samples;
    for (char f : flags) row.hits += f;
    row.estimate = static_cast<double>(row.hits) / static_cast<double>(samples);
    row.ci = wilson_interval(row.hits, samples);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace ctails
