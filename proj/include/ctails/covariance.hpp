#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "ctails/errors.hpp"
#include "ctails/numeric.hpp"

namespace ctails {

inline constexpr int kMaxDenseSigma = 10;  // dense 2^n x 2^n guard

// Dense hierarchical covariance matrix: entry (u,v) is the depth of the last
// common ancestor of leaves u and v, n on the diagonal. Integer-exact.
struct SigmaMatrix {
  int n = 0;
  std::size_t dim = 1;
  std::vector<std::int64_t> entries;  // row-major

  std::int64_t at(std::size_t i, std::size_t j) const { return entries[i * dim + j]; }
};

inline std::int64_t common_ancestor_depth(int n, std::size_t u, std::size_t v) {
  if (u == v) return n;
  return n - std::bit_width(u ^ v);
}

inline SigmaMatrix build_sigma(int n) {
  if (n < 0) throw ConfigError("build_sigma: n must be >= 0");
  if (n > kMaxDenseSigma)
    throw ResourceGuardError("dense-dimension", "build_sigma limited to n <= 10");
  SigmaMatrix s;
  s.n = n;
  s.dim = std::size_t{1} << n;
  s.entries.resize(s.dim * s.dim);
  for (std::size_t i = 0; i < s.dim; ++i)
    for (std::size_t j = 0; j < s.dim; ++j)
      s.entries[i * s.dim + j] = common_ancestor_depth(n, i, j);
  return s;
}

struct EigenvalueMultiplicity {
  std::int64_t value = 0;
  std::int64_t multiplicity = 0;
};

// Spectrum of Sigma_n in closed form: 2^n - 1 twice, then 2^{n-k} - 1 with
// multiplicity 2^k for k = 1..n-1 (count 2^n in total).
inline std::vector<EigenvalueMultiplicity> eigenvalues_closed_form(int n) {
  if (n < 1) throw ConfigError("eigenvalues_closed_form: n must be >= 1");
  std::vector<EigenvalueMultiplicity> eig;
  eig.push_back({(std::int64_t{1} << n) - 1, 2});
  for (int k = 1; k < n; ++k)
    eig.push_back({(std::int64_t{1} << (n - k)) - 1, std::int64_t{1} << k});
  return eig;
}

inline std::vector<std::int64_t> eigenvalues_flat(int n) {
  std::vector<std::int64_t> flat;
  flat.reserve(std::size_t{1} << n);
  for (const auto& [value, mult] : eigenvalues_closed_form(n))
    flat.insert(flat.end(), static_cast<std::size_t>(mult), value);
  return flat;
}

// log det Sigma_n from the closed-form product; no dense matrix involved.
inline double log_det(int n) {
  if (n < 1) throw ConfigError("log_det: n must be >= 1");
  double s = std::log(std::pow(2.0, n) - 1.0);
  for (int k = 0; k < n; ++k)
    s += std::pow(2.0, k) * std::log(std::pow(2.0, n - k) - 1.0);
  return s;
}

// theta = 2 log 2 + sum_{k>=1} 2^{-k} log(1 - 2^{-k}); all series terms are
// negative, so partial sums decrease from 2 log 2. The geometric tail bound
// sum_{k>K} 2^{-2k+1} drives the stopping rule.
inline double theta_constant(double tolerance) {
  if (tolerance <= 0.0) throw ConfigError("theta_constant: tolerance must be > 0");
  long double sum = 2.0L * std::log(2.0L);
  for (int k = 1; k < 1024; ++k) {
    const long double tk = std::exp2l(-k);
    sum += tk * std::log1pl(-tk);
    const long double tail = 2.0L * std::exp2l(-2 * (k + 1)) * 2.0L;  // sum_{j>k} 2^{-2j+1}
    if (tail < tolerance) break;
  }
  return static_cast<double>(sum);
}

// --- Inverse quadratic form -------------------------------------------------
//
// Sigma_{n+1} = diag(J_n + Sigma_n, J_n + Sigma_n) and Sigma_m 1 = (2^m - 1) 1
// give a rank-one update per level:
//   (J_m + Sigma_m)^{-1} x = Sigma_m^{-1} x - (1^t Sigma_m^{-1} x) / (2^{m+1} - 1) * 1.
// Cost O(n 2^n) instead of a dense solve.

namespace detail {
inline void sigma_solve_in_place(int n, std::span<double> x) {
  if (n == 1) return;  // Sigma_1 = I_2
  const std::size_t half = x.size() / 2;
  for (int side = 0; side < 2; ++side) {
    std::span<double> h = x.subspan(side * half, half);
    sigma_solve_in_place(n - 1, h);
    const double total = pairwise_sum(h);
    const double corr = total / (std::pow(2.0, n) - 1.0);
    for (double& v : h) v -= corr;
  }
}
}  // namespace detail

inline std::vector<double> sigma_solve(int n, std::span<const double> x) {
  if (n < 1) throw ConfigError("sigma_solve: n must be >= 1");
  if (x.size() != (std::size_t{1} << n))
    throw ConfigError("sigma_solve: vector length must be 2^n");
  std::vector<double> y(x.begin(), x.end());
  detail::sigma_solve_in_place(n, y);
  return y;
}

inline double quad_form_inv(int n, std::span<const double> x) {
  const std::vector<double> y = sigma_solve(n, x);
  std::vector<double> prods(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) prods[i] = x[i] * y[i];
  return pairwise_sum(prods);
}

// 1^t Sigma_n^{-1} 1 in closed form.
inline double ones_quad_form(int n) {
  const double p = std::pow(2.0, n);
  return p / (p - 1.0);
}

}  // namespace ctails
