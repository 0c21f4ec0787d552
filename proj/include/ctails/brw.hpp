#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "ctails/errors.hpp"
#include "ctails/numeric.hpp"
#include "ctails/rng.hpp"

namespace ctails {

inline constexpr int kDefaultMaxGeneration = 24;  // 2^24 leaves, memory guard

// Inverse temperature with its derived critical value and tail exponent.
struct BetaParams {
  double beta = 0.0;

  static double critical() {
    static const double bc = std::sqrt(2.0 * std::log(2.0));
    return bc;
  }
  double gamma() const {
    double r = critical() / beta;
    return r * r;
  }
  bool subcritical() const { return beta >= 0.0 && beta < critical(); }
};

// One generation-n realization of the binary-tree Gaussian walk.
// Increments are heap-indexed: level l (1-based) occupies the slice
// [(1<<l)-2, (1<<(l+1))-2). Leaf positions are the root-to-leaf prefix sums.
class BrwRealization {
 public:
  static BrwRealization sample(int n, RngStream& rng,
                               int max_generation = kDefaultMaxGeneration) {
    check_generation(n, max_generation);
    BrwRealization r;
    r.n_ = n;
    if (n == 0) {
      r.leaves_.assign(1, 0.0);
      return r;
    }
    r.increments_.resize((std::size_t{2} << n) - 2);
    for (double& g : r.increments_) g = rng.normal();
    r.rebuild_leaves();
    return r;
  }

  // Build from explicit increments (tests, synthetic inputs).
  static BrwRealization from_increments(int n, std::vector<double> increments,
                                        int max_generation = kDefaultMaxGeneration) {
    check_generation(n, max_generation);
    BrwRealization r;
    r.n_ = n;
    if (n == 0) {
      r.leaves_.assign(1, 0.0);
      return r;
    }
    if (increments.size() != (std::size_t{2} << n) - 2)
      throw ConfigError("from_increments: wrong increment count");
    r.increments_ = std::move(increments);
    r.rebuild_leaves();
    return r;
  }

  int generation() const { return n_; }
  std::size_t leaf_count() const { return std::size_t{1} << n_; }
  const std::vector<double>& leaf_positions() const { return leaves_; }
  const std::vector<double>& increments() const { return increments_; }

  double increment(int level, std::size_t index) const {
    return increments_[(std::size_t{1} << level) - 2 + index];
  }

  // Positions of the 2^level particles at `level`.
  std::vector<double> positions_at_level(int level) const {
    std::vector<double> pos(1, 0.0);
    for (int l = 1; l <= level; ++l) {
      std::vector<double> next(std::size_t{1} << l);
      for (std::size_t i = 0; i < next.size(); ++i)
        next[i] = pos[i / 2] + increment(l, i);
      pos.swap(next);
    }
    return pos;
  }

  // Shifts the whole tree by a: every leaf moves by a, covariance unchanged.
  void shift_ancestor(double a) {
    if (n_ == 0) {
      leaves_[0] += a;
      return;
    }
    increments_[0] += a;
    increments_[1] += a;
    for (double& x : leaves_) x += a;
  }

 private:
  static void check_generation(int n, int max_generation) {
    if (n < 0) throw ConfigError("generation must be >= 0");
    if (n > max_generation)
      throw ResourceGuardError("generation-limit",
                               "requested generation exceeds the configured cap");
  }

  void rebuild_leaves() {
    leaves_ = positions_at_level(n_);
  }

  int n_ = 0;
  std::vector<double> increments_;
  std::vector<double> leaves_;
};

// --- Martingale evaluation kernels -----------------------------------------
//
// Shared by the discrete walk and the continuous-time process at grid times,
// so integer-time values agree bit for bit. Sums are scaled by the largest
// exponent, split by sign, and accumulated pairwise in index order.

inline double log_additive_martingale(std::span<const double> positions, double beta,
                                      double time) {
  const double count = static_cast<double>(positions.size());
  std::vector<double> logs(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) logs[i] = beta * positions[i];
  return log_sum_exp(logs) - std::log(count) - 0.5 * beta * beta * time;
}

inline double additive_martingale(std::span<const double> positions, double beta,
                                  double time) {
  return std::exp(log_additive_martingale(positions, beta, time));
}

inline double derivative_martingale(std::span<const double> positions, double beta,
                                    double time) {
  const std::size_t count = positions.size();
  double m = 0.0;
  for (double x : positions) m = std::max(m, beta * x);
  std::vector<double> pos, neg;
  pos.reserve(count);
  neg.reserve(count);
  for (double x : positions) {
    const double term = std::exp(beta * x - m) * (x - beta * time);
    if (term >= 0.0)
      pos.push_back(term);
    else
      neg.push_back(-term);
  }
  const double s = pairwise_sum(pos) - pairwise_sum(neg);
  const double log_scale =
      m - 0.5 * beta * beta * time - std::log(static_cast<double>(count));
  return s * std::exp(log_scale);
}

inline double additive_martingale(const BrwRealization& r, double beta) {
  return additive_martingale(r.leaf_positions(), beta, static_cast<double>(r.generation()));
}

inline double derivative_martingale(const BrwRealization& r, double beta) {
  return derivative_martingale(r.leaf_positions(), beta,
                               static_cast<double>(r.generation()));
}

struct MartingalePair {
  double w = 1.0;
  double z = 0.0;
  int n = 0;
  double beta = 0.0;
};

inline MartingalePair martingale_pair(const BrwRealization& r, double beta) {
  return {additive_martingale(r, beta), derivative_martingale(r, beta), r.generation(),
          beta};
}

// --- Essential infimum ------------------------------------------------------

struct EssentialInfimum {
  double magnitude = 0.0;  // m_n; the infimum itself is -m_n
  double minimizer = 0.0;  // common particle location achieving it
};

inline EssentialInfimum essential_infimum(int n, double beta) {
  if (beta <= 0.0) throw ConfigError("essential_infimum: beta must be > 0");
  EssentialInfimum e;
  e.magnitude = std::exp(0.5 * beta * beta * n) / (beta * std::exp(1.0));
  e.minimizer = beta * n - 1.0 / beta;
  return e;
}

// --- Branching recomposition ------------------------------------------------

struct Recomposition {
  double direct = 0.0;      // Z_{n+m} on the full tree
  double recomposed = 0.0;  // branching identity assembled from depth-m subtrees
};

// Subtree martingales of the generation-(n+m) tree rooted at level-n node u,
// evaluated on the same increments; both routes must agree pathwise.
inline Recomposition recompose_branching(int n, int m, double beta, RngStream& rng,
                                         int max_generation = kDefaultMaxGeneration) {
  if (n < 0 || m < 0) throw ConfigError("recompose_branching: n, m must be >= 0");
  const BrwRealization r = BrwRealization::sample(n + m, rng, max_generation);
  Recomposition out;
  out.direct = derivative_martingale(r, beta);

  const std::vector<double> tops = r.positions_at_level(n);
  const std::vector<double>& leaves = r.leaf_positions();
  const std::size_t subtree = std::size_t{1} << m;
  std::vector<double> rel(subtree);
  std::vector<double> terms(tops.size());
  for (std::size_t u = 0; u < tops.size(); ++u) {
    for (std::size_t v = 0; v < subtree; ++v) rel[v] = leaves[u * subtree + v] - tops[u];
    const double zu = derivative_martingale(rel, beta, static_cast<double>(m));
    const double wu = additive_martingale(rel, beta, static_cast<double>(m));
    terms[u] = std::exp(beta * tops[u] - 0.5 * beta * beta * n) *
               (zu + (tops[u] - beta * n) * wu);
  }
  out.recomposed = pairwise_sum(terms) / static_cast<double>(tops.size());
  return out;
}

}  // namespace ctails
