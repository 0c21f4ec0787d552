#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ctails/stats_fit.hpp"

using namespace ctails;

TEST_CASE("naive tail at x=0 and beyond the essential infimum") {
  const int n = 6;
  const std::vector<double> grid = {0.0, 1e9};
  const TailEstimate t = empirical_tail(n, 0.0, 20000, grid, TailMethod::naive, 1);
  // beta = 0: Z_n ~ N(0, 1 - 2^{-n}), so P(Z_n < 0) = 1/2
  const double p0 = std::exp(t.points[0].log_prob);
  CHECK(std::abs(p0 - 0.5) <= 3.0 * std::sqrt(0.25 / 20000.0));
  // far beyond the worst case: no hits, one-sided interval
  CHECK(t.points[1].hits == 0);
  CHECK(t.points[1].one_sided);
  CHECK(t.points[1].log_prob == kNegInf);
  CHECK(t.points[1].ci_hi < 0.0);
  CHECK_THROWS_AS(empirical_tail(3, 0.0, 10, grid, TailMethod::naive, 1), ConfigError);
}

TEST_CASE("tail is non-increasing in x") {
  const std::vector<double> grid = {0.0, 0.2, 0.4, 0.8, 1.2, 1.6};
  const TailEstimate t = empirical_tail(5, 0.4, 20000, grid, TailMethod::naive, 2);
  for (std::size_t i = 1; i < t.points.size(); ++i)
    CHECK(t.points[i].log_prob <= t.points[i - 1].log_prob + 1e-15);
}

TEST_CASE("box tail point is a lower bound for the naive frequency") {
  const double beta = 0.5 * BetaParams::critical();
  const int n = 5;
  const double eps = 0.5;
  const TailEstimate box = empirical_tail(n, beta, 40000, {}, TailMethod::box, 3, eps);
  REQUIRE(box.points.size() == 1);
  const double x = box.points[0].x;
  CHECK(x == Catch::Approx((1.0 - eps) * essential_infimum(n, beta).magnitude));
  const std::vector<double> grid = {x};
  const TailEstimate naive =
      empirical_tail(n, beta, 200000, grid, TailMethod::naive, 4);
  REQUIRE(naive.points[0].hits > 0);
  // the box event implies the tail event, so the naive frequency dominates
  CHECK(naive.points[0].log_prob >= box.points[0].ci_lo - 1e-9);
}

TEST_CASE("kappa functional value, continuity, and blow-up") {
  // plug-in check at eps = 1 - 2/e where alpha_+ = 2 exactly
  const double eps = 1.0 - 2.0 / std::exp(1.0);
  const double beta = 1.0;
  const AlphaPair a = solve_alphas(eps, 1e-15);
  const double by_hand = 0.5 * (std::log(2.0 * M_PI) + theta_constant(1e-14)) -
                         std::log(a.plus - a.minus) + 0.5 * (a.plus - 1.0) * (a.plus - 1.0);
  CHECK(kappa_epsilon(eps, beta) == Catch::Approx(by_hand).margin(1e-10));

  for (double e : {0.15, 0.5, 0.85}) {
    CHECK(std::abs(kappa_epsilon(e, 0.7) - kappa_epsilon(e + 1e-6, 0.7)) <= 1e-3);
  }
  CHECK(kappa_epsilon(0.999, 1.0) > kappa_epsilon(0.9, 1.0));
  CHECK(kappa_epsilon(0.9, 1.0) > kappa_epsilon(0.5, 1.0));
  CHECK_THROWS_AS(kappa_epsilon(0.5, -1.0), ConfigError);
}

TEST_CASE("lower-bound report satisfies the displayed bound") {
  const double beta = 0.5 * BetaParams::critical();
  const std::vector<int> ns = {4, 5, 6, 7, 8};
  const std::vector<LowerBoundRow> rows =
      lower_bound_report(ns, 0.5, beta, 0, 5, BoxEstimator::recursive);
  for (const auto& r : rows) {
    CHECK(r.bound_ok);
    CHECK(r.ratio >= r.neg_kappa - r.margin);
    CHECK(r.log_prob < 0.0);
  }
  // the log-probabilities scale like 2^n: slope of log(-L_n) on n log 2 is ~1,
  // with a finite-size drift from the slowly converging prefactor at small n
  std::vector<double> xs, ys;
  for (const auto& r : rows) {
    xs.push_back(r.n * std::log(2.0));
    ys.push_back(std::log(-r.log_prob));
  }
  const LinearFit f = linear_fit(xs, ys);
  CHECK(f.slope == Catch::Approx(1.0).margin(0.1));
}

TEST_CASE("importance sampling agrees with the recursion at moderate n") {
  const double beta = 0.5 * BetaParams::critical();
  const std::vector<int> ns = {5};
  const std::vector<LowerBoundRow> is =
      lower_bound_report(ns, 0.5, beta, 200000, 6, BoxEstimator::importance_sampling);
  const double rec = log_box_probability_recursive(5, 0.5, beta);
  CHECK(std::abs(is[0].log_prob - rec) <= (is[0].ci_hi - is[0].log_prob) + 0.05);
}

TEST_CASE("gamma fit is exact on power-law data and scale equivariant") {
  std::vector<double> x, lp;
  for (int i = 1; i <= 10; ++i) {
    x.push_back(0.3 * i);
    lp.push_back(-std::pow(0.3 * i, 4.0));
  }
  const GammaFit f = fit_gamma(x, lp);
  CHECK(f.gamma_hat == Catch::Approx(4.0).margin(1e-12));
  CHECK(f.stderr_ == Catch::Approx(0.0).margin(1e-10));
  // rescaling x leaves the exponent untouched
  std::vector<double> sx = x, slp;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx[i] = 7.5 * x[i];
    slp.push_back(-std::pow(sx[i], 4.0));
  }
  CHECK(fit_gamma(sx, slp).gamma_hat == Catch::Approx(4.0).margin(1e-12));
}

TEST_CASE("gamma fit recovers a noisy known exponent") {
  RngStream rng(7);
  std::vector<double> x, lp;
  for (int i = 1; i <= 20; ++i) {
    const double xi = 0.5 + 0.25 * i;
    x.push_back(xi);
    lp.push_back(-std::pow(xi, 2.5) * (1.0 + 0.05 * rng.normal()));
  }
  const GammaFit f = fit_gamma(x, lp);
  CHECK(f.gamma_hat == Catch::Approx(2.5).margin(0.1));
  CHECK(f.stderr_ > 0.0);
}

TEST_CASE("gamma fit input validation") {
  CHECK_THROWS_AS(fit_gamma(std::vector<double>{1.0, 2.0}, std::vector<double>{-1.0, -2.0}),
                  ConfigError);
  CHECK_THROWS_AS(
      fit_gamma(std::vector<double>{1.0, 1.0, 1.0}, std::vector<double>{-1.0, -2.0, -3.0}),
      ConfigError);
  CHECK_THROWS_AS(
      fit_gamma(std::vector<double>{1.0, 2.0, 3.0}, std::vector<double>{-1.0, 0.5, -3.0}),
      ConfigError);
  CHECK_THROWS_AS(
      fit_gamma(std::vector<double>{-1.0, 2.0, 3.0}, std::vector<double>{-1.0, -2.0, -3.0}),
      ConfigError);
}

TEST_CASE("full box pipeline hits the target exponent") {
  const double beta = 0.5 * BetaParams::critical();
  const GammaFit f = fit_gamma_from_box(std::vector<int>{4, 5, 6, 7, 8}, 0.5, beta);
  CHECK(f.gamma_hat > 3.4);
  CHECK(f.gamma_hat < 4.6);
}

TEST_CASE("essential infimum scaling identity") {
  for (double beta : {0.4, 0.5 * BetaParams::critical(), 1.0}) {
    const double gamma = BetaParams{beta}.gamma();
    for (int n : {3, 9}) {
      const double mn = essential_infimum(n, beta).magnitude;
      const double lhs = gamma * std::log(mn);
      const double rhs = -gamma * std::log(beta * std::exp(1.0)) + n * std::log(2.0);
      CHECK(lhs == Catch::Approx(rhs).margin(1e-12 * std::max(1.0, std::abs(rhs))));
    }
  }
}

TEST_CASE("remainder config validation") {
  const double beta = 0.5 * BetaParams::critical();  // gamma = 4
  RemainderCheckConfig cfg;
  cfg.n_grid = {3};
  validate_remainder_config(cfg, beta);  // p = 1.5 is fine
  RemainderCheckConfig bad = cfg;
  bad.p = 2.5;  // outside (1, min(gamma, 2))
  CHECK_THROWS_AS(validate_remainder_config(bad, beta), ConfigError);
  bad = cfg;
  bad.p = 1.5;
  CHECK_THROWS_AS(validate_remainder_config(bad, 1.17),  // gamma < 1.5 + margin
                  ConfigError);
  bad = cfg;
  bad.delta = 0.0;
  CHECK_THROWS_AS(validate_remainder_config(bad, beta), ConfigError);
  bad = cfg;
  bad.n_grid.clear();
  CHECK_THROWS_AS(validate_remainder_config(bad, beta), ConfigError);
}

TEST_CASE("conditional remainder edge cases and trend") {
  const double beta = 0.5 * BetaParams::critical();
  RemainderCheckConfig cfg;
  cfg.n_grid = {3};

  // m = 0: the remainder is identically zero
  cfg.m = 0;
  auto rows = box_conditional_remainder(cfg, beta, 500, 1);
  CHECK(rows[0].hits == 0);

  // enormous delta: the relative remainder never reaches it
  cfg.m = 4;
  cfg.delta = 1e3;
  rows = box_conditional_remainder(cfg, beta, 500, 2);
  CHECK(rows[0].estimate <= 0.01);

  // the conditional exceedance probability decays in n
  cfg.delta = 0.25;
  cfg.n_grid = {3, 5};
  rows = box_conditional_remainder(cfg, beta, 4000, 3);
  CHECK(rows[1].estimate <= rows[0].estimate);
}
