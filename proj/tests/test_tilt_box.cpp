#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ctails/brw.hpp"
#include "ctails/numeric.hpp"
#include "ctails/tilt_box.hpp"

using namespace ctails;

TEST_CASE("alpha roots of a e^{-a} = (1-eps)/e") {
  for (double eps : {0.1, 0.25, 0.5, 0.9}) {
    const AlphaPair a = solve_alphas(eps);
    const double target = (1.0 - eps) / std::exp(1.0);
    CHECK(a.minus * std::exp(-a.minus) == Catch::Approx(target).margin(1e-12));
    CHECK(a.plus * std::exp(-a.plus) == Catch::Approx(target).margin(1e-12));
    CHECK(a.minus > 0.0);
    CHECK(a.minus < 1.0);
    CHECK(a.plus > 1.0);
    // the box reaches farther below the minimizer than above it
    CHECK(a.plus - 1.0 > 1.0 - a.minus);
  }
  // eps = 1 - 2/e makes the target 2 e^{-2}, so alpha_+ = 2 exactly
  const AlphaPair special = solve_alphas(1.0 - 2.0 / std::exp(1.0));
  CHECK(special.plus == Catch::Approx(2.0).margin(1e-10));
  CHECK_THROWS_AS(solve_alphas(0.0), ConfigError);
  CHECK_THROWS_AS(solve_alphas(1.0), ConfigError);
}

TEST_CASE("box spec geometry") {
  const double beta = 0.8;
  const BoxSpec b = make_box(3, 0.4, beta);
  const AlphaPair a = solve_alphas(0.4);
  CHECK(b.lo == Catch::Approx(beta * 3 - a.plus / beta).margin(1e-12));
  CHECK(b.hi == Catch::Approx(beta * 3 - a.minus / beta).margin(1e-12));
  CHECK(b.width() > 0.0);
  // the minimizer of the essential infimum lies inside the box
  const double minimizer = essential_infimum(3, beta).minimizer;
  CHECK(b.lo < minimizer);
  CHECK(b.hi > minimizer);
  CHECK_THROWS_AS(make_box(3, -0.1, beta), ConfigError);
  CHECK_THROWS_AS(make_box(3, 0.4, 0.0), ConfigError);
}

TEST_CASE("box membership forces the deep tail") {
  const double beta = 0.5 * BetaParams::critical();
  for (int n : {2, 4, 6}) {
    const double eps = 0.5;
    const BoxSpec b = make_box(n, eps, beta);
    const double floor = (1.0 - eps) * essential_infimum(n, beta).magnitude;
    RngStream rng(3, static_cast<std::uint64_t>(n));
    std::vector<double> x(std::size_t{1} << n);
    for (int k = 0; k < 2000; ++k) {
      for (double& v : x) v = rng.uniform(b.lo, b.hi);
      CHECK(derivative_martingale(x, beta, n) <= -floor);
    }
  }
}

TEST_CASE("box probability n=1 against the exact product value") {
  const double beta = 0.7;
  const double eps = 0.5;
  const BoxSpec b = make_box(1, eps, beta);
  const double exact = 2.0 * std::log(normal_interval(b.lo, b.hi));
  RngStream rng(8);
  const BoxProbability is = box_probability(1, eps, beta, 40000, rng);
  CHECK(std::abs(is.log_prob - exact) <= 3.0 * is.se_log);
  CHECK(log_box_probability_recursive(1, eps, beta) ==
        Catch::Approx(exact).margin(1e-9));
}

TEST_CASE("box probability n=2 against quadrature") {
  const double beta = 0.5 * BetaParams::critical();
  const double eps = 0.5;
  const BoxSpec b = make_box(2, eps, beta);
  auto inner = [&](double g) {
    const double p = normal_interval(b.lo - g, b.hi - g);
    return normal_pdf(g) * p * p;
  };
  const double exact = 2.0 * std::log(integrate(inner, -12.0, 12.0, 1e-13));
  RngStream rng(9);
  const BoxProbability is = box_probability(2, eps, beta, 60000, rng);
  CHECK(std::abs(is.log_prob - exact) <= 3.0 * is.se_log);
  CHECK(log_box_probability_recursive(2, eps, beta) == Catch::Approx(exact).margin(1e-6));
  // the closed-form lower bound really is a lower bound
  CHECK(is.log_analytic_lower_bound <= exact);
}

TEST_CASE("recursive estimator is stable under grid refinement") {
  const double beta = 0.5 * BetaParams::critical();
  const double coarse = log_box_probability_recursive(4, 0.5, beta, 0.02, 7.0);
  const double fine = log_box_probability_recursive(4, 0.5, beta, 0.005, 9.0);
  CHECK(std::abs(coarse - fine) < 1e-4);
}

TEST_CASE("box probability resource guard") {
  RngStream rng(1);
  CHECK_THROWS_AS(box_probability(11, 0.5, 0.6, 1000, rng), ResourceGuardError);
  CHECK_THROWS_AS(log_box_probability_recursive(13, 0.5, 0.6), ResourceGuardError);
}

TEST_CASE("conditional sampler stays in the box and matches reweighted moments") {
  const double beta = 0.5 * BetaParams::critical();
  const double eps = 0.5;
  const int n = 3;
  const BoxSpec b = make_box(n, eps, beta);
  const BoxConditionalSampler sampler(n, eps, beta);

  // conditional mean of Z_n given the box, two independent estimators:
  // exact-conditional sampling vs density-weighted uniform proposal
  const std::size_t reps = 20000;
  std::vector<double> direct(reps);
  RngStream rng(12);
  for (std::size_t i = 0; i < reps; ++i) {
    const std::vector<double> leaves = sampler.sample_leaves(rng);
    for (double x : leaves) {
      CHECK(x >= b.lo - 1e-9);
      CHECK(x <= b.hi + 1e-9);
    }
    direct[i] = derivative_martingale(leaves, beta, n);
  }
  std::vector<double> wsum(reps), wzsum(reps);
  RngStream rng2(13);
  std::vector<double> x(std::size_t{1} << n);
  for (std::size_t i = 0; i < reps; ++i) {
    for (double& v : x) v = rng2.uniform(b.lo, b.hi);
    const double w = std::exp(-0.5 * quad_form_inv(n, x));
    wsum[i] = w;
    wzsum[i] = w * derivative_martingale(x, beta, n);
  }
  const MeanVar md = mean_and_variance(direct);
  const MeanVar mw = mean_and_variance(wsum);
  const MeanVar mwz = mean_and_variance(wzsum);
  const double ratio = mwz.mean / mw.mean;
  // delta-method error bar for the ratio estimator plus the direct one
  const double se_ratio =
      std::abs(ratio) * std::sqrt(std::pow(mwz.se() / mwz.mean, 2) +
                                  std::pow(mw.se() / mw.mean, 2));
  CHECK(std::abs(md.mean - ratio) <=
        3.0 * std::sqrt(md.se() * md.se() + se_ratio * se_ratio) + 2e-3);
}

TEST_CASE("tilted sampling shifts every leaf mean to a") {
  const int n = 5;
  const double a = -1.5;
  const std::size_t reps = 20000;
  const std::size_t dim = std::size_t{1} << n;
  std::vector<double> sums(dim, 0.0);
  for (std::size_t i = 0; i < reps; ++i) {
    RngStream rng(31, i);
    const BrwRealization t = tilted_sample(n, a, rng);
    for (std::size_t u = 0; u < dim; ++u) sums[u] += t.leaf_positions()[u];
  }
  // per-leaf variance is n, so the mean of reps draws has sd sqrt(n/reps)
  const double se = std::sqrt(static_cast<double>(n) / static_cast<double>(reps));
  for (std::size_t u = 0; u < dim; ++u)
    CHECK(std::abs(sums[u] / static_cast<double>(reps) - a) <= 4.0 * se);
}

TEST_CASE("tilt density integrates to one and reweights means") {
  const int n = 4;
  const double a = -1.0;
  const std::size_t reps = 40000;
  std::vector<double> y(reps), yx(reps);
  for (std::size_t i = 0; i < reps; ++i) {
    RngStream rng(32, i);
    const BrwRealization r = BrwRealization::sample(n, rng);
    y[i] = tilt_density(r, a);
    yx[i] = y[i] * r.leaf_positions()[0];
  }
  const MeanVar my = mean_and_variance(y);
  CHECK(std::abs(my.mean - 1.0) <= 3.0 * my.se());
  // E_P[Y X_u] = E_{Q_a}[X_u] = a
  const MeanVar myx = mean_and_variance(yx);
  CHECK(std::abs(myx.mean - a) <= 3.0 * myx.se());
}

TEST_CASE("tilt density closed form on constructed increments") {
  // n=1 tree with known leaves
  const BrwRealization r = BrwRealization::from_increments(1, {0.3, -0.2});
  const double a = 0.7;
  const double shrink = 0.5;  // 1 - 2^{-1}
  const double mean_leaf = 0.05;
  CHECK(log_tilt_density(r, a) ==
        Catch::Approx(a * mean_leaf / shrink - 0.5 * a * a / shrink).margin(1e-14));
}

TEST_CASE("shift identity Z + aW = e^{-beta a} Z^{[a]}") {
  for (double a : {-2.0, -0.5, 1.0}) {
    for (double beta : {0.3, 0.9}) {
      for (std::uint64_t k = 0; k < 30; ++k) {
        RngStream rng(33, k);
        const BrwRealization r = BrwRealization::sample(5, rng);
        const ShiftIdentity s = shifted_derivative(r, a, beta);
        CHECK(s.residual <= 1e-12);
        // z_shifted equals the derivative martingale of the ancestor-shifted tree
        BrwRealization shifted = r;
        shifted.shift_ancestor(a);
        CHECK(s.z_shifted ==
              Catch::Approx(derivative_martingale(shifted, beta)).margin(1e-12));
      }
    }
  }
}
