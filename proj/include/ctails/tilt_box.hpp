#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "ctails/brw.hpp"
#include "ctails/covariance.hpp"
#include "ctails/errors.hpp"
#include "ctails/numeric.hpp"
#include "ctails/rng.hpp"

namespace ctails {

inline constexpr int kMaxBoxGeneration = 10;    // quadratic-form cost guard
inline constexpr double kMinBoxWidth = 1e-8;    // degenerate-box guard

// --- Roots of alpha e^{-alpha} = (1 - eps)/e --------------------------------

struct AlphaPair {
  double minus = 1.0;  // in (0, 1)
  double plus = 1.0;   // in (1, inf)
};

inline AlphaPair solve_alphas(double epsilon, double tol = 1e-13) {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw ConfigError("solve_alphas: epsilon must lie in (0,1)");
  if (tol <= 0.0) throw ConfigError("solve_alphas: tol must be > 0");
  const double target = (1.0 - epsilon) / std::exp(1.0);
  auto f = [](double a) { return a * std::exp(-a); };

  auto bisect = [&](double lo, double hi, bool increasing) {
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      const bool below = (f(mid) < target) == increasing;
      (below ? lo : hi) = mid;
      if (hi - lo < 1e-16 * std::max(1.0, hi)) break;
    }
    return 0.5 * (lo + hi);
  };

  AlphaPair ap;
  ap.minus = bisect(0.0, 1.0, /*increasing=*/true);
  double cap = 2.0;
  while (f(cap) > target) cap *= 2.0;  // f decreases past 1, so this brackets
  ap.plus = bisect(1.0, cap, /*increasing=*/false);
  if (std::abs(f(ap.minus) - target) > tol || std::abs(f(ap.plus) - target) > tol)
    throw ConfigError("solve_alphas: bisection failed to reach tolerance");
  return ap;
}

// The per-coordinate interval of the box scenario.
struct BoxSpec {
  int n = 0;
  double epsilon = 0.0;
  double beta = 0.0;
  AlphaPair alphas;
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
};

inline BoxSpec make_box(int n, double epsilon, double beta, double tol = 1e-13) {
  if (beta <= 0.0) throw ConfigError("make_box: beta must be > 0");
  BoxSpec b;
  b.n = n;
  b.epsilon = epsilon;
  b.beta = beta;
  b.alphas = solve_alphas(epsilon, tol);
  b.lo = beta * n - b.alphas.plus / beta;
  b.hi = beta * n - b.alphas.minus / beta;
  if (b.width() < kMinBoxWidth)
    throw ConfigError("make_box: degenerate box (epsilon too close to 0)");
  return b;
}

// --- Box probability, importance sampling -----------------------------------

struct BoxProbability {
  double log_prob = kNegInf;
  double se_log = 0.0;          // delta-method standard error of log_prob
  double ci_lo = kNegInf;       // 95% interval
  double ci_hi = kNegInf;
  double log_analytic_lower_bound = kNegInf;
  std::size_t samples = 0;
};

// Worst-case exponent of the Gaussian density over the box, via the
// ones-direction split; used for the reported closed-form lower bound.
inline double box_sup_quad_form(const BoxSpec& b) {
  const double p = std::pow(2.0, b.n);
  const double c = b.beta * b.n - 1.0 / b.beta;
  const double h_max = (b.alphas.plus - 1.0) / b.beta;  // > 1 - alpha_- side
  return c * c * p / (p - 1.0) + 2.0 * std::abs(c) * p * h_max / (p - 1.0) +
         p * h_max * h_max;
}

inline double log_box_analytic_lower_bound(const BoxSpec& b) {
  const double p = std::pow(2.0, b.n);
  return p * std::log(b.width()) - 0.5 * p * std::log(2.0 * M_PI) - 0.5 * log_det(b.n) -
         0.5 * box_sup_quad_form(b);
}

// P((X_u) in Pi_n^eps) by importance sampling: propose i.i.d. coordinates
// uniform on the box, weight by the exact Gaussian density.
inline BoxProbability box_probability(int n, double epsilon, double beta,
                                      std::size_t samples, RngStream& rng) {
  if (n < 1) throw ConfigError("box_probability: n must be >= 1");
  if (n > kMaxBoxGeneration)
    throw ResourceGuardError("box-dimension", "box_probability limited to n <= 10");
  const BoxSpec box = make_box(n, epsilon, beta);
  const std::size_t dim = std::size_t{1} << n;
  const double log_const = static_cast<double>(dim) * std::log(box.width()) -
                           0.5 * static_cast<double>(dim) * std::log(2.0 * M_PI) -
                           0.5 * log_det(n);

  std::vector<double> logs(samples);
  std::vector<double> x(dim);
  for (std::size_t s = 0; s < samples; ++s) {
    for (double& xi : x) xi = rng.uniform(box.lo, box.hi);
    logs[s] = log_const - 0.5 * quad_form_inv(n, x);
  }

  BoxProbability out;
  out.samples = samples;
  out.log_prob = log_mean_exp(logs);
  const double lmax = *std::max_element(logs.begin(), logs.end());
  std::vector<double> w(samples);
  for (std::size_t s = 0; s < samples; ++s) w[s] = std::exp(logs[s] - lmax);
  const MeanVar mv = mean_and_variance(w);
  out.se_log = mv.mean > 0.0 ? mv.se() / mv.mean : 0.0;
  out.ci_lo = out.log_prob - 1.959963984540054 * out.se_log;
  out.ci_hi = out.log_prob + 1.959963984540054 * out.se_log;
  out.log_analytic_lower_bound = log_box_analytic_lower_bound(box);
  return out;
}

// --- Box probability, deterministic functional recursion ---------------------
//
// h_l(z) = P(every leaf of the subtree under a level-l node at z lands in the
// box). Then h_n = 1_box, h_l(z) = (integral phi(g) h_{l+1}(z+g) dg)^2 and the
// answer is h_0(0). One smooth 1-D convolution per level on a fixed grid;
// works to n = 10 and beyond where the importance-sampling weights degenerate.

namespace detail {

struct BoxGrid {
  double zmin = 0.0;
  double step = 0.0;
  std::size_t size = 0;
  double z(std::size_t j) const { return zmin + step * static_cast<double>(j); }
};

// log h tables for levels 1..n-1 (level n handled analytically).
struct BoxTables {
  BoxSpec box;
  BoxGrid grid;
  int kernel_radius = 0;                   // in grid steps
  std::vector<std::vector<double>> log_h;  // log_h[l-1] for level l = 1..n-1
};

inline BoxTables build_box_tables(const BoxSpec& box, double grid_step, double pad) {
  BoxTables t;
  t.box = box;
  const double zmin_raw = std::min(0.0, box.lo) - pad;
  const double zmax_raw = box.hi + pad;
  t.grid.step = grid_step;
  t.grid.zmin = std::floor(zmin_raw / grid_step) * grid_step;
  t.grid.size = static_cast<std::size_t>(std::ceil((zmax_raw - t.grid.zmin) / grid_step)) + 1;
  t.kernel_radius = static_cast<int>(std::ceil(pad / grid_step));

  const int n = box.n;
  if (n < 2) return t;
  t.log_h.resize(n - 1);

  // Level n-1: exact one-step probability squared.
  std::vector<double>& top = t.log_h[n - 2];
  top.resize(t.grid.size);
  for (std::size_t j = 0; j < t.grid.size; ++j) {
    const double z = t.grid.z(j);
    const double p = normal_interval(box.lo - z, box.hi - z);
    top[j] = p > 0.0 ? 2.0 * std::log(p) : kNegInf;
  }

  // Precompute log kernel on grid offsets.
  const int kr = t.kernel_radius;
  std::vector<double> log_kernel(2 * kr + 1);
  for (int k = -kr; k <= kr; ++k) {
    const double g = grid_step * k;
    log_kernel[k + kr] = -0.5 * g * g - 0.5 * std::log(2.0 * M_PI) + std::log(grid_step);
  }

  for (int l = n - 2; l >= 1; --l) {
    const std::vector<double>& upper = t.log_h[l];  // level l+1
    std::vector<double>& cur = t.log_h[l - 1];
    cur.resize(t.grid.size);
    for (std::size_t j = 0; j < t.grid.size; ++j) {
      double m = kNegInf;
      const int jmin = std::max<int>(0, static_cast<int>(j) - kr);
      const int jmax = std::min<int>(static_cast<int>(t.grid.size) - 1,
                                     static_cast<int>(j) + kr);
      for (int jj = jmin; jj <= jmax; ++jj) {
        const double v = log_kernel[jj - static_cast<int>(j) + kr] + upper[jj];
        if (v > m) m = v;
      }
      if (m == kNegInf) {
        cur[j] = kNegInf;
        continue;
      }
      double s = 0.0;
      for (int jj = jmin; jj <= jmax; ++jj)
        s += std::exp(log_kernel[jj - static_cast<int>(j) + kr] + upper[jj] - m);
      cur[j] = 2.0 * (m + std::log(s));
    }
  }
  return t;
}

// log of integral phi(g) exp(level_table(z+g)/2)... folded at the root:
// returns log h_0(0) given tables.
inline double box_tables_root_log_prob(const BoxTables& t) {
  const BoxSpec& box = t.box;
  if (box.n == 1) {
    const double p = normal_interval(box.lo, box.hi);
    return p > 0.0 ? 2.0 * std::log(p) : kNegInf;
  }
  const std::vector<double>& h1 = t.log_h[0];
  const int kr = t.kernel_radius;
  // index of z = 0 on the grid
  const auto j0 = static_cast<std::ptrdiff_t>(std::llround(-t.grid.zmin / t.grid.step));
  double m = kNegInf;
  std::vector<double> vals;
  for (int k = -kr; k <= kr; ++k) {
    const std::ptrdiff_t jj = j0 + k;
    if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(t.grid.size)) continue;
    const double g = t.grid.step * k;
    const double v = -0.5 * g * g - 0.5 * std::log(2.0 * M_PI) +
                     std::log(t.grid.step) + h1[jj];
    vals.push_back(v);
  }
  return 2.0 * log_sum_exp(vals);
}

}  // namespace detail

inline double log_box_probability_recursive(int n, double epsilon, double beta,
                                            double grid_step = 0.01, double pad = 8.0) {
  if (n < 1) throw ConfigError("log_box_probability_recursive: n must be >= 1");
  if (n > 12)
    throw ResourceGuardError("box-dimension",
                             "recursive box probability limited to n <= 12 (underflow)");
  const BoxSpec box = make_box(n, epsilon, beta);
  const detail::BoxTables t = detail::build_box_tables(box, grid_step, pad);
  return detail::box_tables_root_log_prob(t);
}

// Exact sampler of the leaf vector conditioned on the box event, descending
// the tree with the h tables: each child of a level-(l-1) node at z has
// density proportional to phi(z'-z) h_l(z'), children independent.
class BoxConditionalSampler {
 public:
  BoxConditionalSampler(int n, double epsilon, double beta, double grid_step = 0.02,
                        double pad = 6.0)
      : tables_(detail::build_box_tables(make_box(n, epsilon, beta), grid_step, pad)) {
    if (n < 1) throw ConfigError("BoxConditionalSampler: n must be >= 1");
  }

  const BoxSpec& box() const { return tables_.box; }

  std::vector<double> sample_leaves(RngStream& rng) const {
    const int n = tables_.box.n;
    std::vector<double> level(1, 0.0);
    for (int l = 1; l <= n; ++l) {
      std::vector<double> next(std::size_t{1} << l);
      for (std::size_t i = 0; i < next.size(); ++i)
        next[i] = (l == n) ? sample_leaf_child(level[i / 2], rng)
                           : sample_inner_child(l, level[i / 2], rng);
      level.swap(next);
    }
    return level;
  }

 private:
  // Level-n child: truncated normal on the box around the parent.
  double sample_leaf_child(double parent, RngStream& rng) const {
    const double a = normal_cdf(tables_.box.lo - parent);
    const double b = normal_cdf(tables_.box.hi - parent);
    const double u = a + (b - a) * rng.uniform();
    return parent + normal_quantile(std::min(1.0 - 1e-16, std::max(1e-300, u)));
  }

  double sample_inner_child(int level, double parent, RngStream& rng) const {
    const std::vector<double>& h = tables_.log_h[level - 1];
    const detail::BoxGrid& grid = tables_.grid;
    const int kr = tables_.kernel_radius;
    const auto jc = static_cast<std::ptrdiff_t>(
        std::llround((parent - grid.zmin) / grid.step));
    const std::ptrdiff_t jmin = std::max<std::ptrdiff_t>(0, jc - kr);
    const std::ptrdiff_t jmax =
        std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(grid.size) - 1, jc + kr);

    scratch_.resize(static_cast<std::size_t>(jmax - jmin + 1));
    double m = kNegInf;
    for (std::ptrdiff_t j = jmin; j <= jmax; ++j) {
      const double g = grid.z(static_cast<std::size_t>(j)) - parent;
      const double v = -0.5 * g * g + h[j];
      scratch_[j - jmin] = v;
      if (v > m) m = v;
    }
    double total = 0.0;
    for (double& v : scratch_) {
      v = (m == kNegInf) ? 0.0 : std::exp(v - m);
      total += v;
    }
    // Inverse CDF over grid cells, uniform within the chosen cell.
    double u = rng.uniform() * total;
    std::size_t pick = scratch_.size() - 1;
    for (std::size_t i = 0; i < scratch_.size(); ++i) {
      if (u <= scratch_[i]) {
        pick = i;
        break;
      }
      u -= scratch_[i];
    }
    const double frac = scratch_[pick] > 0.0 ? u / scratch_[pick] : 0.5;
    return grid.z(static_cast<std::size_t>(jmin + pick)) + (frac - 0.5) * grid.step;
  }

  detail::BoxTables tables_;
  mutable std::vector<double> scratch_;
};

// --- Exponential tilt --------------------------------------------------------

// Sample under Q_a: the base walk with every leaf mean shifted to a
// (covariance unchanged; guarded at runtime by the density-ratio test).
inline BrwRealization tilted_sample(int n, double a, RngStream& rng,
                                    int max_generation = kDefaultMaxGeneration) {
  BrwRealization r = BrwRealization::sample(n, rng, max_generation);
  r.shift_ancestor(a);
  return r;
}

inline double log_tilt_density(const BrwRealization& r, double a) {
  const int n = r.generation();
  const double shrink = 1.0 - std::pow(2.0, -n);
  if (shrink == 0.0) throw ConfigError("tilt density undefined at n = 0");
  const double mean_leaf =
      pairwise_sum(r.leaf_positions()) / static_cast<double>(r.leaf_count());
  return a * mean_leaf / shrink - 0.5 * a * a / shrink;
}

inline double tilt_density(const BrwRealization& r, double a) {
  return std::exp(log_tilt_density(r, a));
}

// --- Shift identity Z + aW = e^{-beta a} Z^{[a]} ------------------------------

struct ShiftIdentity {
  double z_shifted = 0.0;  // Z_n^{[a]}
  double residual = 0.0;   // |Z + aW - e^{-beta a} Z^{[a]}| / max(1, |Z^{[a]}|)
};

inline ShiftIdentity shifted_derivative(const BrwRealization& r, double a, double beta) {
  const double n = static_cast<double>(r.generation());
  std::vector<double> shifted(r.leaf_positions());
  for (double& x : shifted) x += a;
  ShiftIdentity out;
  out.z_shifted = derivative_martingale(shifted, beta, n);
  const double z = derivative_martingale(r, beta);
  const double w = additive_martingale(r, beta);
  out.residual = std::abs(z + a * w - std::exp(-beta * a) * out.z_shifted) /
                 std::max(1.0, std::abs(out.z_shifted));
  return out;
}

}  // namespace ctails
