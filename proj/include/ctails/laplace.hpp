#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ctails/brw.hpp"
#include "ctails/errors.hpp"
#include "ctails/numeric.hpp"
#include "ctails/parallel.hpp"
#include "ctails/rng.hpp"

namespace ctails {

// --- Estimator core ----------------------------------------------------------

struct LaplaceEstimate {
  double lambda = 0.0;
  double value = 1.0;
  double log_value = 0.0;
  double se_log = 0.0;  // jackknife standard error of log_value
  Interval ci;          // log_value +/- 1.96 se
  int n = 0;
  std::size_t replicas = 0;
};

// log-mean-exp with a leave-one-out jackknife error bar, all in scaled space
// (e^{-lambda Z} spans hundreds of orders of magnitude).
inline LaplaceEstimate log_mean_exp_estimate(std::span<const double> logs) {
  LaplaceEstimate est;
  est.replicas = logs.size();
  if (logs.empty()) throw ConfigError("log_mean_exp_estimate: empty sample");
  const std::size_t n = logs.size();
  double m = kNegInf;
  for (double l : logs) m = std::max(m, l);
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = std::exp(logs[i] - m);
  const double total = pairwise_sum(w);
  est.log_value = m + std::log(total / static_cast<double>(n));
  est.value = std::exp(est.log_value);
  if (n > 1) {
    // theta_{-i} = log((S - w_i)/(n-1)); jackknife variance of the log.
    std::vector<double> loo(n);
    for (std::size_t i = 0; i < n; ++i)
      loo[i] = std::log(std::max(total - w[i], 1e-300) / static_cast<double>(n - 1));
    const MeanVar mv = mean_and_variance(loo);
    est.se_log = std::sqrt(std::max(0.0, mv.var * static_cast<double>(n - 1) *
                                             static_cast<double>(n - 1) /
                                             static_cast<double>(n)));
  }
  est.ci = {est.log_value - 1.959963984540054 * est.se_log,
            est.log_value + 1.959963984540054 * est.se_log};
  return est;
}

// --- Sample batches ----------------------------------------------------------

struct ZwSample {
  double z = 0.0;
  double w = 1.0;
};

// One (W_n, Z_n) pair per replica, replica-keyed streams, replica order fixed.
inline std::vector<ZwSample> sample_zw_batch(int n, double beta, std::size_t replicas,
                                             std::uint64_t seed, unsigned threads = 0) {
  return replica_map<ZwSample>(
      replicas, seed,
      [n, beta](std::size_t, RngStream& rng) {
        const BrwRealization r = BrwRealization::sample(n, rng);
        return ZwSample{derivative_martingale(r, beta), additive_martingale(r, beta)};
      },
      threads);
}

enum class LaplaceTarget { Z, W, ZPlusAW };

inline LaplaceEstimate laplace_from_batch(std::span<const ZwSample> batch,
                                          LaplaceTarget target, double lambda, int n,
                                          double a = 0.0) {
  if (lambda < 0.0) throw ConfigError("laplace: lambda must be >= 0");
  std::vector<double> logs(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double t = target == LaplaceTarget::Z   ? batch[i].z
                     : target == LaplaceTarget::W ? batch[i].w
                                                  : batch[i].z + a * batch[i].w;
    logs[i] = -lambda * t;
  }
  LaplaceEstimate est = log_mean_exp_estimate(logs);
  est.lambda = lambda;
  est.n = n;
  return est;
}

inline LaplaceEstimate laplace_mc(LaplaceTarget target, double lambda, double beta, int n,
                                  std::size_t replicas, std::uint64_t seed,
                                  double a = 0.0, unsigned threads = 0) {
  if (replicas < 1000) throw ConfigError("laplace_mc: need >= 1000 replicas");
  const std::vector<ZwSample> batch = sample_zw_batch(n, beta, replicas, seed, threads);
  return laplace_from_batch(batch, target, lambda, n, a);
}

// --- Tilted Cauchy-Schwarz check: E e^{-l(Z+aW)} <= e^{a^2/(2(1-2^-n))} (E e^{-2l e^{-ba} Z})^{1/2}

enum class Verdict { pass, inconclusive, fail };

inline std::string verdict_name(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::inconclusive: return "inconclusive";
    default: return "fail";
  }
}

struct ZwCheck {
  int n = 0;
  double beta = 0.0;
  double a = 0.0;
  double lambda = 0.0;
  double lhs_log = 0.0;
  double rhs_log = 0.0;
  double combined_se = 0.0;
  Verdict verdict = Verdict::pass;
};

inline ZwCheck check_lemma_zw_from_batch(std::span<const ZwSample> batch, int n,
                                         double beta, double a, double lambda) {
  if (lambda < 0.0) throw ConfigError("check_lemma_zw: lambda must be >= 0");
  ZwCheck c;
  c.n = n;
  c.beta = beta;
  c.a = a;
  c.lambda = lambda;
  const double shrink = 1.0 - std::pow(2.0, -n);
  const LaplaceEstimate lhs = laplace_from_batch(batch, LaplaceTarget::ZPlusAW, lambda, n, a);
  const LaplaceEstimate half =
      laplace_from_batch(batch, LaplaceTarget::Z, 2.0 * lambda * std::exp(-beta * a), n);
  c.lhs_log = lhs.log_value;
  c.rhs_log = 0.5 * a * a / shrink + 0.5 * half.log_value;
  c.combined_se = std::sqrt(lhs.se_log * lhs.se_log + 0.25 * half.se_log * half.se_log);
  if (c.lhs_log <= c.rhs_log)
    c.verdict = Verdict::pass;
  else if (c.lhs_log <= c.rhs_log + 3.0 * c.combined_se)
    c.verdict = Verdict::inconclusive;
  else
    c.verdict = Verdict::fail;
  return c;
}

inline ZwCheck check_lemma_zw(int n, double a, double lambda, double beta,
                              std::size_t replicas, std::uint64_t seed,
                              unsigned threads = 0) {
  const std::vector<ZwSample> batch = sample_zw_batch(n, beta, replicas, seed, threads);
  return check_lemma_zw_from_batch(batch, n, beta, a, lambda);
}

// --- Sub-Gaussian fit: E e^{-l Z} <= e^{C l^2} for beta < beta_c / 2 ----------

struct SubgaussianFit {
  double c = 0.0;  // min C making the bound hold on the grid
  bool beta_in_hypothesis = true;
  std::vector<LaplaceEstimate> grid;  // one per lambda
  std::vector<double> ratios;         // log_value / lambda^2 (lambda > 0)
};

inline SubgaussianFit subgaussian_fit_from_batch(std::span<const ZwSample> batch, int n,
                                                 double beta,
                                                 std::span<const double> lambda_grid) {
  SubgaussianFit f;
  f.beta_in_hypothesis = beta > 0.0 && beta < 0.5 * BetaParams::critical();
  for (double lambda : lambda_grid) {
    LaplaceEstimate est = laplace_from_batch(batch, LaplaceTarget::Z, lambda, n);
    if (lambda > 0.0) {
      f.ratios.push_back(est.log_value / (lambda * lambda));
      f.c = std::max(f.c, f.ratios.back());
    }
    f.grid.push_back(std::move(est));
  }
  return f;
}

inline SubgaussianFit subgaussian_fit(double beta, int n, std::span<const double> lambda_grid,
                                      std::size_t replicas, std::uint64_t seed,
                                      unsigned threads = 0) {
  const std::vector<ZwSample> batch = sample_zw_batch(n, beta, replicas, seed, threads);
  return subgaussian_fit_from_batch(batch, n, beta, lambda_grid);
}

// --- Three-bucket Chernoff split of the branching recomposition ---------------

struct BucketSplit {
  double low = 0.0;   // X_u < beta n
  double mid = 0.0;   // beta n <= X_u <= beta n + 1
  double high = 0.0;  // X_u > beta n + 1
  double full = 0.0;  // independent evaluation of Z_{n+m} on the same tree
};

inline BucketSplit bucket_decomposition_from(const BrwRealization& r, int n, double beta) {
  const int total = r.generation();
  if (n < 0 || n > total) throw ConfigError("bucket_decomposition: need 0 <= n <= n+m");
  const int m = total - n;
  BucketSplit out;
  out.full = derivative_martingale(r, beta);

  const std::vector<double> tops = r.positions_at_level(n);
  const std::vector<double>& leaves = r.leaf_positions();
  const std::size_t subtree = std::size_t{1} << m;
  std::vector<double> rel(subtree);
  std::vector<double> low, mid, high;
  for (std::size_t u = 0; u < tops.size(); ++u) {
    for (std::size_t v = 0; v < subtree; ++v) rel[v] = leaves[u * subtree + v] - tops[u];
    const double zu = derivative_martingale(rel, beta, static_cast<double>(m));
    const double wu = additive_martingale(rel, beta, static_cast<double>(m));
    const double term = std::exp(beta * tops[u] - 0.5 * beta * beta * n) /
                        static_cast<double>(tops.size()) *
                        (zu + (tops[u] - beta * n) * wu);
    if (tops[u] < beta * n)
      low.push_back(term);
    else if (tops[u] <= beta * n + 1.0)
      mid.push_back(term);
    else
      high.push_back(term);
  }
  out.low = pairwise_sum(low);
  out.mid = pairwise_sum(mid);
  out.high = pairwise_sum(high);
  return out;
}

inline BucketSplit bucket_decomposition(int n, int m, double beta, RngStream& rng,
                                        int max_generation = kDefaultMaxGeneration) {
  if (n < 0 || m < 0) throw ConfigError("bucket_decomposition: n, m must be >= 0");
  const BrwRealization r = BrwRealization::sample(n + m, rng, max_generation);
  return bucket_decomposition_from(r, n, beta);
}

// --- Additive-martingale Laplace decay: E e^{-l W} <= e^{-c log^{3/2} l} ------

struct WLaplaceEntry {
  double lambda = 0.0;
  double log_value = 0.0;
  double c_lambda = 0.0;  // -log_value / log^{3/2}(lambda); 0 at lambda = 1
  bool pass = false;      // value <= 1 and c_lambda > 0 (or lambda == 1)
};

struct WLaplaceFit {
  double c = 0.0;  // min over lambda > 1 of c_lambda
  std::vector<WLaplaceEntry> entries;
};

inline WLaplaceFit w_laplace_check_from_batch(std::span<const ZwSample> batch,
                                              std::span<const double> lambda_grid, int n) {
  WLaplaceFit f;
  f.c = std::numeric_limits<double>::infinity();
  for (double lambda : lambda_grid) {
    if (lambda < 1.0) throw ConfigError("w_laplace_check: lambdas must be >= 1");
    WLaplaceEntry e;
    e.lambda = lambda;
    e.log_value = laplace_from_batch(batch, LaplaceTarget::W, lambda, n).log_value;
    if (lambda > 1.0) {
      e.c_lambda = -e.log_value / std::pow(std::log(lambda), 1.5);
      e.pass = e.c_lambda > 0.0;
      f.c = std::min(f.c, e.c_lambda);
    } else {
      e.pass = e.log_value <= 0.0;
    }
    f.entries.push_back(e);
  }
  if (!std::isfinite(f.c)) f.c = 0.0;
  return f;
}

inline WLaplaceFit w_laplace_check(double beta, int n, std::span<const double> lambda_grid,
                                   std::size_t replicas, std::uint64_t seed,
                                   unsigned threads = 0) {
  const std::vector<ZwSample> batch = sample_zw_batch(n, beta, replicas, seed, threads);
  return w_laplace_check_from_batch(batch, lambda_grid, n);
}

// --- Tilted exponential-moment constants --------------------------------------
//
// Positive shifts: E e^{-l(Z+aW)} <= e^{C(l' a + l'^2)}, l' = l e^{-beta a}.
// Nonpositive shifts: E e^{-l(Z+aW)} <= e^{-l a + C(l'^2 + 1)}.
// Fits the smallest C making each hold across the (a, lambda) grid.

struct TiltedConstantFit {
  double c_positive_shift = 0.0;
  double c_nonpositive_shift = 0.0;
  bool finite = true;
};

inline TiltedConstantFit fit_tilted_constants(std::span<const ZwSample> batch, int n,
                                              double beta, std::span<const double> a_grid,
                                              std::span<const double> lambda_grid) {
  TiltedConstantFit f;
  for (double a : a_grid) {
    for (double lambda : lambda_grid) {
      if (lambda <= 0.0) continue;
      const double lp = lambda * std::exp(-beta * a);
      const double lhs =
          laplace_from_batch(batch, LaplaceTarget::ZPlusAW, lambda, n, a).log_value;
      if (a > 0.0) {
        f.c_positive_shift = std::max(f.c_positive_shift, lhs / (lp * a + lp * lp));
      } else {
        f.c_nonpositive_shift =
            std::max(f.c_nonpositive_shift, (lhs + lambda * a) / (lp * lp + 1.0));
      }
    }
  }
  f.finite = std::isfinite(f.c_positive_shift) && std::isfinite(f.c_nonpositive_shift);
  return f;
}

}  // namespace ctails
