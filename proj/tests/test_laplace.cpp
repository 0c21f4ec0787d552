#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ctails/laplace.hpp"

using namespace ctails;

TEST_CASE("laplace transform at lambda zero is exactly one") {
  const std::vector<ZwSample> batch = sample_zw_batch(4, 0.6, 2000, 1);
  for (auto target : {LaplaceTarget::Z, LaplaceTarget::W, LaplaceTarget::ZPlusAW}) {
    const LaplaceEstimate est = laplace_from_batch(batch, target, 0.0, 4, -1.0);
    CHECK(est.value == 1.0);
    CHECK(est.log_value == 0.0);
  }
  CHECK_THROWS_AS(laplace_from_batch(batch, LaplaceTarget::Z, -1.0, 4), ConfigError);
}

TEST_CASE("laplace transform of W is non-increasing in lambda") {
  const std::vector<ZwSample> batch = sample_zw_batch(6, 0.5, 5000, 2);
  double prev = 1.0;
  for (double lambda : {0.0, 0.5, 1.0, 2.0, 5.0, 20.0}) {
    const double v = laplace_from_batch(batch, LaplaceTarget::W, lambda, 6).value;
    CHECK(v <= prev + 1e-15);
    prev = v;
  }
}

TEST_CASE("beta zero reduces to the Gaussian Laplace transform") {
  const int n = 8;
  const std::vector<ZwSample> batch = sample_zw_batch(n, 0.0, 100000, 3);
  for (double lambda : {0.5, 1.0, 2.0}) {
    const LaplaceEstimate est = laplace_from_batch(batch, LaplaceTarget::Z, lambda, n);
    const double target = 0.5 * lambda * lambda * (1.0 - std::pow(2.0, -n));
    CHECK(std::abs(est.log_value - target) <= 3.0 * est.se_log);
  }
}

TEST_CASE("jackknife error bar shrinks like root n") {
  const std::vector<ZwSample> big = sample_zw_batch(4, 0.5, 40000, 4);
  const std::span<const ZwSample> small(big.data(), 10000);
  const double se_small = laplace_from_batch(small, LaplaceTarget::Z, 1.0, 4).se_log;
  const double se_big = laplace_from_batch(big, LaplaceTarget::Z, 1.0, 4).se_log;
  CHECK(se_big < se_small);
  CHECK(se_big == Catch::Approx(0.5 * se_small).epsilon(0.35));
}

TEST_CASE("a=0 reduces to sample Cauchy-Schwarz and always passes") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const std::vector<ZwSample> batch = sample_zw_batch(4, 0.5, 2000, seed);
    for (double lambda : {0.1, 1.0, 5.0}) {
      const ZwCheck c = check_lemma_zw_from_batch(batch, 4, 0.5, 0.0, lambda);
      CHECK(c.lhs_log <= c.rhs_log + 1e-12);
      CHECK(c.verdict == Verdict::pass);
    }
  }
}

TEST_CASE("lambda=0 tilted bound is 1 <= e^{a^2/2}") {
  const std::vector<ZwSample> batch = sample_zw_batch(4, 0.5, 2000, 6);
  const ZwCheck c = check_lemma_zw_from_batch(batch, 4, 0.5, -2.0, 0.0);
  CHECK(c.lhs_log == 0.0);
  CHECK(c.rhs_log == Catch::Approx(0.5 * 4.0 / (1.0 - 1.0 / 16.0)).margin(1e-12));
  CHECK(c.verdict == Verdict::pass);
}

TEST_CASE("tilted bound holds on a small grid") {
  const std::vector<ZwSample> batch = sample_zw_batch(4, 0.5, 50000, 7);
  for (double a : {-1.0, 1.0}) {
    for (double lambda : {0.1, 1.0, 5.0}) {
      const ZwCheck c = check_lemma_zw_from_batch(batch, 4, 0.5, a, lambda);
      CHECK(c.verdict != Verdict::fail);
    }
  }
}

TEST_CASE("bucket split partitions the recomposition") {
  for (std::uint64_t k = 0; k < 30; ++k) {
    RngStream rng(8, k);
    const BucketSplit b = bucket_decomposition(3, 2, 0.7, rng);
    const double rel = std::abs(b.low + b.mid + b.high - b.full) /
                       std::max(1.0, std::abs(b.full));
    CHECK(rel <= 1e-12);
  }
}

TEST_CASE("bucket split on constructed trees") {
  // n=0: the root sits at 0, inside [0, 1]
  RngStream rng(9);
  const BrwRealization r = BrwRealization::sample(2, rng);
  const BucketSplit root = bucket_decomposition_from(r, 0, 1.0);
  CHECK(root.low == 0.0);
  CHECK(root.high == 0.0);
  CHECK(root.mid == Catch::Approx(root.full).margin(1e-12 * std::abs(root.full)));

  // push both level-1 positions far below beta*n: only the low bucket fills
  std::vector<double> inc = r.increments();
  inc[0] -= 50.0;
  inc[1] -= 50.0;
  const BrwRealization low_tree = BrwRealization::from_increments(2, inc);
  const BucketSplit low = bucket_decomposition_from(low_tree, 1, 1.0);
  CHECK(low.mid == 0.0);
  CHECK(low.high == 0.0);
  CHECK(low.low == Catch::Approx(low.full).margin(1e-12 * std::abs(low.full)));
  CHECK_THROWS_AS(bucket_decomposition_from(r, 5, 1.0), ConfigError);
}

TEST_CASE("subgaussian fit") {
  const double beta = 0.25 * BetaParams::critical();
  const int n = 8;
  const std::vector<ZwSample> batch = sample_zw_batch(n, beta, 50000, 10);
  const std::vector<double> grid = {0.0, 0.25, 0.5, 1.0, 2.0, 4.0};
  const SubgaussianFit f = subgaussian_fit_from_batch(batch, n, beta, grid);
  CHECK(f.beta_in_hypothesis);
  CHECK(std::isfinite(f.c));
  CHECK(f.c > 0.0);
  // grid entry at lambda=0 has log value 0
  CHECK(f.grid.front().log_value == 0.0);
  // small-lambda quadratic behavior: ratio at the smallest positive lambda is
  // close to Var(Z)/2
  std::vector<double> z(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) z[i] = batch[i].z;
  const MeanVar mz = mean_and_variance(z);
  // the O(lambda) cumulant correction is still visible at lambda = 0.25
  CHECK(f.ratios.front() == Catch::Approx(0.5 * mz.var).margin(0.3 * mz.var));
  CHECK_FALSE(subgaussian_fit_from_batch(batch, n, 0.9, grid).beta_in_hypothesis);
}

TEST_CASE("additive-martingale Laplace decay fit") {
  const std::vector<ZwSample> batch = sample_zw_batch(10, 0.5, 30000, 11);
  const std::vector<double> grid = {1.0, 10.0, 100.0, 1000.0};
  const WLaplaceFit f = w_laplace_check_from_batch(batch, grid, 10);
  CHECK(f.c > 0.0);
  for (const auto& e : f.entries) CHECK(e.pass);
  // strictly decreasing along the grid
  for (std::size_t i = 1; i < f.entries.size(); ++i)
    CHECK(f.entries[i].log_value < f.entries[i - 1].log_value);
  CHECK_THROWS_AS(w_laplace_check_from_batch(batch, std::vector<double>{0.5}, 10),
                  ConfigError);
}

TEST_CASE("tilted constant fits are finite and stable") {
  const std::vector<ZwSample> batch = sample_zw_batch(5, 0.5, 30000, 12);
  const std::vector<double> a_grid = {-2.0, -1.0, -0.5, 0.5, 1.0};
  const std::vector<double> l_grid = {0.1, 0.5, 1.0, 2.0};
  const TiltedConstantFit f = fit_tilted_constants(batch, 5, 0.5, a_grid, l_grid);
  CHECK(f.finite);
  const std::vector<ZwSample> batch2 = sample_zw_batch(5, 0.5, 30000, 13);
  const TiltedConstantFit g = fit_tilted_constants(batch2, 5, 0.5, a_grid, l_grid);
  CHECK(std::abs(f.c_positive_shift - g.c_positive_shift) <
        0.5 * std::max(1.0, std::abs(f.c_positive_shift)));
  CHECK(std::abs(f.c_nonpositive_shift - g.c_nonpositive_shift) <
        0.5 * std::max(1.0, std::abs(f.c_nonpositive_shift)));
}
