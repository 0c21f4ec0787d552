#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "ctails/numeric.hpp"
#include "ctails/rng.hpp"

using namespace ctails;

TEST_CASE("pairwise sum matches sequential accumulation") {
  RngStream rng(1);
  std::vector<double> v(1037);
  for (double& x : v) x = rng.normal();
  long double ref = 0.0L;
  for (double x : v) ref += x;
  CHECK(std::abs(pairwise_sum(v) - static_cast<double>(ref)) < 1e-12);
  CHECK(pairwise_sum(std::vector<double>{}) == 0.0);
  CHECK(pairwise_sum(std::vector<double>{3.5}) == 3.5);
}

TEST_CASE("log-sum-exp handles extreme scales") {
  std::vector<double> v = {-1000.0, -1000.0};
  CHECK(log_sum_exp(v) == Catch::Approx(-1000.0 + std::log(2.0)).margin(1e-12));
  std::vector<double> w = {700.0, 0.0};
  CHECK(log_sum_exp(w) == Catch::Approx(700.0).margin(1e-12));
  std::vector<double> empty_like = {kNegInf, kNegInf};
  CHECK(log_sum_exp(empty_like) == kNegInf);
  std::vector<double> three = {0.0, 1.0, 2.0};
  CHECK(log_mean_exp(three) ==
        Catch::Approx(std::log((1.0 + std::exp(1.0) + std::exp(2.0)) / 3.0)));
}

TEST_CASE("log_diff_exp") {
  CHECK(log_diff_exp(1.0, kNegInf) == 1.0);
  CHECK(log_diff_exp(std::log(5.0), std::log(3.0)) == Catch::Approx(std::log(2.0)));
}

TEST_CASE("normal cdf, interval and quantile") {
  CHECK(normal_cdf(0.0) == Catch::Approx(0.5));
  CHECK(normal_interval(-1.0, 1.0) == Catch::Approx(0.6826894921370859).margin(1e-12));
  // tail stability: interval far in the right tail stays positive and accurate
  const double p = normal_interval(8.0, 9.0);
  CHECK(p > 0.0);
  CHECK(p == Catch::Approx(6.219831985865866e-16).epsilon(1e-6));
  for (double q : {1e-10, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-12}) {
    CHECK(normal_cdf(normal_quantile(q)) == Catch::Approx(q).margin(1e-12));
  }
  CHECK_THROWS_AS(normal_quantile(0.0), ConfigError);
  CHECK_THROWS_AS(normal_quantile(1.0), ConfigError);
}

TEST_CASE("mean and variance two-pass") {
  std::vector<double> v = {1.0, 2.0, 3.0, 4.0};
  const MeanVar mv = mean_and_variance(v);
  CHECK(mv.mean == Catch::Approx(2.5));
  CHECK(mv.var == Catch::Approx(5.0 / 3.0));
  CHECK(mv.se() == Catch::Approx(std::sqrt(5.0 / 12.0)));
}

TEST_CASE("wilson interval") {
  const Interval i = wilson_interval(0, 100);
  CHECK(i.lo <= 1e-12);
  CHECK(i.hi > 0.0);
  CHECK(i.hi < 0.05);
  const Interval j = wilson_interval(50, 100);
  CHECK(j.lo < 0.5);
  CHECK(j.hi > 0.5);
  const Interval full = wilson_interval(0, 0);
  CHECK(full.lo == 0.0);
  CHECK(full.hi == 1.0);
}

TEST_CASE("linear fit recovers exact line and rejects degenerate input") {
  std::vector<double> x = {1.0, 2.0, 3.0, 4.0, 5.0};
  std::vector<double> y;
  for (double xi : x) y.push_back(2.0 - 3.0 * xi);
  const LinearFit f = linear_fit(x, y);
  CHECK(f.slope == Catch::Approx(-3.0).margin(1e-13));
  CHECK(f.intercept == Catch::Approx(2.0).margin(1e-13));
  CHECK(f.slope_se == Catch::Approx(0.0).margin(1e-12));
  std::vector<double> same = {1.0, 1.0, 1.0};
  std::vector<double> any = {0.0, 1.0, 2.0};
  CHECK_THROWS_AS(linear_fit(same, any), ConfigError);
  CHECK_THROWS_AS(linear_fit(std::vector<double>{1.0}, std::vector<double>{1.0}),
                  ConfigError);
}

TEST_CASE("adaptive quadrature on known integrals") {
  CHECK(integrate([](double x) { return normal_pdf(x); }, -10.0, 10.0, 1e-12) ==
        Catch::Approx(1.0).margin(1e-10));
  CHECK(integrate([](double x) { return x * x; }, 0.0, 1.0, 1e-12) ==
        Catch::Approx(1.0 / 3.0).margin(1e-12));
  CHECK(integrate([](double x) { return std::exp(-x); }, 0.0, 40.0, 1e-12) ==
        Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("rng streams are deterministic and key-separated") {
  RngStream a(42, 7), b(42, 7), c(42, 8);
  const double va = a.normal();
  CHECK(va == b.normal());
  CHECK(va != c.normal());
  RngStream u(3);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
}
