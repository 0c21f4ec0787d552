// cascade-tails: simulation and verification driver for branching random walk
// derivative-martingale tail studies.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Dense>

#include "ctails/brw.hpp"
#include "ctails/continuous.hpp"
#include "ctails/covariance.hpp"
#include "ctails/errors.hpp"
#include "ctails/laplace.hpp"
#include "ctails/numeric.hpp"
#include "ctails/parallel.hpp"
#include "ctails/report.hpp"
#include "ctails/rng.hpp"
#include "ctails/stats_fit.hpp"
#include "ctails/tilt_box.hpp"
#include "ctails/version.hpp"

namespace {

using namespace ctails;

struct CommonOpts {
  std::uint64_t seed = 12345;
  unsigned threads = 0;  // 0: CASCADE_TAILS_THREADS, then hardware
  std::string output;    // empty: stdout
  std::string format = "csv";
  bool plot = false;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
  cmd->add_option("--seed", c.seed, "RNG seed recorded in every artifact")
      ->capture_default_str();
  cmd->add_option("--threads", c.threads,
                  "worker threads (0 = CASCADE_TAILS_THREADS env, then hardware)")
      ->capture_default_str();
  cmd->add_option("-o,--output", c.output, "output file (default: stdout)");
  cmd->add_option("--format", c.format, "output format")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  cmd->add_flag("--plot", c.plot, "also write an SVG plot next to --output");
}

std::vector<int> parse_range(const std::string& s) {
  const auto dots = s.find("..");
  try {
    if (dots == std::string::npos) return {std::stoi(s)};
    const int lo = std::stoi(s.substr(0, dots));
    const int hi = std::stoi(s.substr(dots + 2));
    if (hi < lo) throw ConfigError("range '" + s + "': upper end below lower end");
    std::vector<int> out;
    for (int v = lo; v <= hi; ++v) out.push_back(v);
    return out;
  } catch (const std::invalid_argument&) {
    throw ConfigError("cannot parse integer range '" + s + "' (expected N or A..B)");
  }
}

std::vector<double> parse_grid(const std::string& s) {
  std::vector<double> out;
  std::size_t pos = 0;
  try {
    while (pos < s.size()) {
      std::size_t used = 0;
      out.push_back(std::stod(s.substr(pos), &used));
      pos += used;
      if (pos < s.size() && s[pos] == ',') ++pos;
    }
  } catch (const std::invalid_argument&) {
    throw ConfigError("cannot parse numeric grid '" + s + "'");
  }
  if (out.empty()) throw ConfigError("empty numeric grid '" + s + "'");
  return out;
}

void emit(const Table& t, const ReportMeta& meta, const CommonOpts& c) {
  const std::string body = c.format == "json" ? render_json(t, meta) : render_csv(t, meta);
  if (c.output.empty())
    std::cout << body;
  else
    write_file(c.output, body);
}

std::string fmt(double v) { return format_double(v); }

// ---------------------------------------------------------------------------
// verify: property suites. One row per check; exit 1 if any row fails.

struct CheckRow {
  std::string check;
  std::string n, beta, a, lambda;
  double lhs = 0.0, rhs = 0.0, ci = 0.0;
  Verdict verdict = Verdict::pass;
};

class Suite {
 public:
  explicit Suite(std::vector<CheckRow>& rows) : rows_(rows) {}

  CheckRow& close(const std::string& check, double lhs, double rhs, double tol) {
    CheckRow r;
    r.check = check;
    r.lhs = lhs;
    r.rhs = rhs;
    r.ci = tol;
    r.verdict = std::abs(lhs - rhs) <= tol ? Verdict::pass : Verdict::fail;
    rows_.push_back(r);
    return rows_.back();
  }

  CheckRow& below(const std::string& check, double lhs, double rhs, double slack) {
    CheckRow r;
    r.check = check;
    r.lhs = lhs;
    r.rhs = rhs;
    r.ci = slack;
    r.verdict = lhs <= rhs + slack ? Verdict::pass : Verdict::fail;
    rows_.push_back(r);
    return rows_.back();
  }

  bool ok() const {
    for (const auto& r : rows_)
      if (r.verdict == Verdict::fail) return false;
    return true;
  }

 private:
  std::vector<CheckRow>& rows_;
};

void covariance_suite(std::uint64_t seed, std::vector<CheckRow>& rows) {
  Suite s(rows);
  s.close("theta_value", theta_constant(1e-6), 0.9458, 5e-4);

  const SigmaMatrix s2 = build_sigma(2);
  const std::int64_t expect2[16] = {2, 1, 0, 0, 1, 2, 0, 0, 0, 0, 2, 1, 0, 0, 1, 2};
  double diff2 = 0.0;
  for (int i = 0; i < 16; ++i)
    diff2 = std::max(diff2, std::abs(static_cast<double>(s2.entries[i] - expect2[i])));
  s.close("sigma2_exact", diff2, 0.0, 0.0).n = "2";

  for (int n = 1; n <= 5; ++n) {
    const SigmaMatrix sm = build_sigma(n);
    Eigen::MatrixXd m(sm.dim, sm.dim);
    for (std::size_t i = 0; i < sm.dim; ++i)
      for (std::size_t j = 0; j < sm.dim; ++j)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            static_cast<double>(sm.at(i, j));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    std::vector<std::int64_t> closed = eigenvalues_flat(n);
    std::sort(closed.begin(), closed.end());
    double max_err = 0.0;
    for (std::size_t i = 0; i < sm.dim; ++i)
      max_err = std::max(max_err,
                         std::abs(es.eigenvalues()[static_cast<Eigen::Index>(i)] -
                                  static_cast<double>(closed[i])));
    s.close("eigenvalues_vs_dense", max_err, 0.0, 1e-8).n = std::to_string(n);

    const double dense_logdet = std::log(m.determinant());
    s.close("logdet_vs_dense", log_det(n), dense_logdet,
            1e-8 * std::max(1.0, std::abs(dense_logdet))).n = std::to_string(n);
  }

  {
    const int n = 5;
    RngStream rng(seed, 99);
    std::vector<double> x(std::size_t{1} << n);
    for (double& v : x) v = rng.normal();
    const std::vector<double> y = sigma_solve(n, x);
    const SigmaMatrix sm = build_sigma(n);
    double resid = 0.0;
    for (std::size_t i = 0; i < sm.dim; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < sm.dim; ++j)
        row += static_cast<double>(sm.at(i, j)) * y[j];
      resid = std::max(resid, std::abs(row - x[i]));
    }
    s.close("recursive_solve_residual", resid, 0.0, 1e-9).n = std::to_string(n);

    const std::vector<double> ones(std::size_t{1} << n, 1.0);
    s.close("ones_quad_form", quad_form_inv(n, ones), ones_quad_form(n), 1e-10)
        .n = std::to_string(n);
  }
}

void brw_suite(std::uint64_t seed, std::vector<CheckRow>& rows) {
  Suite s(rows);
  const int n = 8;
  const std::size_t reps = 20000;
  for (double beta : {0.0, 0.3, 0.5 * BetaParams::critical()}) {
    const std::vector<ZwSample> batch = sample_zw_batch(n, beta, reps, seed);
    std::vector<double> w(reps), z(reps);
    for (std::size_t i = 0; i < reps; ++i) {
      w[i] = batch[i].w;
      z[i] = batch[i].z;
    }
    const MeanVar mw = mean_and_variance(w);
    const MeanVar mz = mean_and_variance(z);
    s.close("mean_additive", mw.mean, 1.0, 3.0 * mw.se()).beta = fmt(beta);
    s.close("mean_derivative", mz.mean, 0.0, 3.0 * mz.se()).beta = fmt(beta);
    if (beta == 0.0) {
      const double target = 1.0 - std::pow(2.0, -n);
      const double se_var = mz.var * std::sqrt(2.0 / static_cast<double>(reps - 1));
      s.close("variance_derivative_beta0", mz.var, target, 3.0 * se_var).n =
          std::to_string(n);
    }
  }

  double worst = 0.0;
  for (std::uint64_t k = 0; k < 20; ++k) {
    RngStream rng(seed, 1000 + k);
    const Recomposition rc = recompose_branching(3, 3, 0.7, rng);
    worst = std::max(worst, std::abs(rc.direct - rc.recomposed) /
                                std::max(1.0, std::abs(rc.direct)));
  }
  s.close("recomposition_residual", worst, 0.0, 1e-9);

  {
    const double beta = 0.5 * BetaParams::critical();
    const EssentialInfimum e = essential_infimum(6, beta);
    double zmin = 0.0;
    for (std::uint64_t k = 0; k < 200; ++k) {
      RngStream rng(seed, 2000 + k);
      zmin = std::min(zmin, derivative_martingale(BrwRealization::sample(6, rng), beta));
    }
    s.below("essential_infimum_floor", -zmin, e.magnitude, 0.0).n = "6";
  }
}

void tilt_suite(std::uint64_t seed, std::vector<CheckRow>& rows) {
  Suite s(rows);
  const int n = 6;
  const double a = -1.0;
  const double beta = 0.6;
  const std::size_t reps = 20000;

  double worst = 0.0;
  for (std::uint64_t k = 0; k < 20; ++k) {
    RngStream rng(seed, 3000 + k);
    const BrwRealization r = BrwRealization::sample(n, rng);
    worst = std::max(worst, shifted_derivative(r, a, beta).residual);
  }
  s.close("shift_identity_residual", worst, 0.0, 1e-12);

  std::vector<double> leaf_means(reps), dens(reps), w_tilted(reps), w_direct(reps);
  for (std::size_t i = 0; i < reps; ++i) {
    RngStream rng(seed, 4000 + i);
    const BrwRealization t = tilted_sample(n, a, rng);
    leaf_means[i] = pairwise_sum(t.leaf_positions()) / static_cast<double>(t.leaf_count());
    w_tilted[i] = additive_martingale(t, beta) / tilt_density(t, a);
    RngStream rng2(seed, 5000 + i);
    const BrwRealization p = BrwRealization::sample(n, rng2);
    dens[i] = tilt_density(p, a);
    w_direct[i] = additive_martingale(p, beta);
  }
  const MeanVar mlm = mean_and_variance(leaf_means);
  s.close("tilted_leaf_mean", mlm.mean, a, 3.0 * mlm.se()).a = fmt(a);
  const MeanVar md = mean_and_variance(dens);
  s.close("tilt_density_mean", md.mean, 1.0, 3.0 * md.se()).a = fmt(a);
  const MeanVar mt = mean_and_variance(w_tilted);
  const MeanVar mdw = mean_and_variance(w_direct);
  s.close("two_estimator_additive", mt.mean, mdw.mean,
          3.0 * std::sqrt(mt.se() * mt.se() + mdw.se() * mdw.se()))
      .beta = fmt(beta);

  {
    const double bb = 0.5 * BetaParams::critical();
    const BoxSpec box = make_box(4, 0.5, bb);
    const double floor = (1.0 - 0.5) * essential_infimum(4, bb).magnitude;
    RngStream rng(seed, 6000);
    double worst_z = kNegInf;
    std::vector<double> x(16);
    for (int k = 0; k < 1000; ++k) {
      for (double& v : x) v = rng.uniform(box.lo, box.hi);
      worst_z = std::max(worst_z, derivative_martingale(x, bb, 4.0));
    }
    s.below("box_forces_tail", worst_z, -floor, 0.0).n = "4";
  }
}

void laplace_suite(std::uint64_t seed, std::vector<CheckRow>& rows) {
  Suite s(rows);
  const int n = 4;
  const double beta = 0.5;
  const std::size_t reps = 20000;
  const std::vector<ZwSample> batch = sample_zw_batch(n, beta, reps, seed);

  s.close("laplace_at_zero", laplace_from_batch(batch, LaplaceTarget::Z, 0.0, n).value,
          1.0, 0.0);

  for (double a : {-1.0, 0.0, 1.0}) {
    for (double lambda : {0.5, 2.0}) {
      const ZwCheck c = check_lemma_zw_from_batch(batch, n, beta, a, lambda);
      CheckRow r;
      r.check = "tilted_cauchy_schwarz";
      r.n = std::to_string(n);
      r.beta = fmt(beta);
      r.a = fmt(a);
      r.lambda = fmt(lambda);
      r.lhs = c.lhs_log;
      r.rhs = c.rhs_log;
      r.ci = c.combined_se;
      r.verdict = c.verdict;
      rows.push_back(r);
    }
  }

  {
    const std::vector<ZwSample> b0 = sample_zw_batch(6, 0.0, reps, seed + 1);
    const LaplaceEstimate est = laplace_from_batch(b0, LaplaceTarget::Z, 1.0, 6);
    const double target = 0.5 * (1.0 - std::pow(2.0, -6));
    s.close("gaussian_mgf_beta0", est.log_value, target, 3.0 * est.se_log).n = "6";
  }

  double worst = 0.0;
  for (std::uint64_t k = 0; k < 20; ++k) {
    RngStream rng(seed, 7000 + k);
    const BucketSplit b = bucket_decomposition(3, 2, 0.7, rng);
    worst = std::max(worst, std::abs(b.low + b.mid + b.high - b.full) /
                                std::max(1.0, std::abs(b.full)));
  }
  s.close("bucket_partition_residual", worst, 0.0, 1e-12);
}

void box_suite(std::uint64_t seed, std::vector<CheckRow>& rows) {
  Suite s(rows);
  const double beta = 0.5 * BetaParams::critical();
  const double eps = 0.5;

  {
    const BoxSpec b = make_box(1, eps, beta);
    const double exact = 2.0 * std::log(normal_interval(b.lo, b.hi));
    RngStream rng(seed, 0);
    const BoxProbability is = box_probability(1, eps, beta, 20000, rng);
    s.close("box_n1_is_vs_exact", is.log_prob, exact, 3.0 * is.se_log).n = "1";
    s.close("box_n1_recursive_vs_exact", log_box_probability_recursive(1, eps, beta),
            exact, 1e-9).n = "1";
  }
  {
    const BoxSpec b = make_box(2, eps, beta);
    auto inner = [&](double g) {
      const double p = normal_interval(b.lo - g, b.hi - g);
      return normal_pdf(g) * p * p;
    };
    const double one_subtree = integrate(inner, -10.0, 10.0, 1e-12);
    const double exact = 2.0 * std::log(one_subtree);
    RngStream rng(seed, 1);
    const BoxProbability is = box_probability(2, eps, beta, 50000, rng);
    s.close("box_n2_is_vs_quadrature", is.log_prob, exact, 3.0 * is.se_log).n = "2";
    s.close("box_n2_recursive_vs_quadrature",
            log_box_probability_recursive(2, eps, beta), exact, 1e-6).n = "2";
    s.below("box_analytic_lower_bound", is.log_analytic_lower_bound, is.log_prob,
            3.0 * is.se_log).n = "2";
  }
  {
    RngStream rng(seed, 2);
    const BoxProbability is = box_probability(4, eps, beta, 100000, rng);
    s.close("box_n4_is_vs_recursive", is.log_prob,
            log_box_probability_recursive(4, eps, beta), 3.0 * is.se_log + 0.05).n = "4";
  }
}

void continuous_suite(std::uint64_t seed, std::vector<CheckRow>& rows) {
  Suite s(rows);
  for (double alpha : {0.5, 1.0, 2.0}) {
    for (double b : {0.2, 1.0, 2.5}) {
      auto dens = [&](double t) { return hitting_time_density(alpha, b, t); };
      double mass = 0.0;
      double t0 = 1e-12;
      for (double t1 : {0.1, 1.0, 10.0, 100.0, 2000.0}) {
        mass += integrate(dens, t0, t1, 1e-10);
        t0 = t1;
      }
      CheckRow& r = s.close("hitting_density_normalization",
                            mass + hitting_atom_mass(alpha, b), 1.0, 1e-6);
      r.a = fmt(alpha);
      r.lambda = fmt(b);
    }
  }

  s.close("bracket_series_zero", bracket_series(0.0).value, 1.0, 1e-15);
  s.close("bracket_series_half_log2", bracket_series(0.5 * std::log(2.0)).value,
          1.0 / (2.0 - std::sqrt(2.0)), 1e-12);
  s.close("bracket_series_divergence",
          bracket_series(std::log(2.0)).divergent ? 1.0 : 0.0, 1.0, 0.0);

  const LineCrossConfig cfg;  // defaults are a valid configuration
  {
    const std::size_t reps = 2000;
    std::vector<double> z(reps), zt(reps);
    for (std::size_t i = 0; i < reps; ++i) {
      RngStream rng(seed, i);
      const BranchingWienerPath p = BranchingWienerPath::sample(1.5, 0.02, rng);
      z[i] = continuous_derivative_martingale(p, cfg.beta, 1.5);
      zt[i] = truncated_martingale(p, cfg, cfg.beta, 1.5);
    }
    const MeanVar mz = mean_and_variance(z);
    const MeanVar mzt = mean_and_variance(zt);
    s.close("continuous_mean_derivative", mz.mean, 0.0, 3.0 * mz.se());
    s.close("truncated_mean", mzt.mean, 0.0, 3.0 * mzt.se());
  }
  {
    std::size_t ordered = 0;
    const std::size_t reps = 500;
    bool alternating = true;
    for (std::size_t i = 0; i < reps; ++i) {
      RngStream rng(seed, 50000 + i);
      const auto [base, shifted] = simulate_coupled_lineages(cfg, 10.0, 1e-2, -1.0, rng);
      ordered += shifted.t1 >= base.t1;
      alternating = alternating && base.record.alternating() &&
                    shifted.record.alternating();
    }
    s.close("coupled_t1_ordering", static_cast<double>(ordered),
            static_cast<double>(reps), 0.0).a = fmt(-1.0);
    s.close("crossing_alternation", alternating ? 1.0 : 0.0, 1.0, 0.0);
  }
}

void stats_suite(std::uint64_t seed, std::vector<CheckRow>& rows) {
  Suite s(rows);
  {
    std::vector<double> x, lp;
    for (int i = 1; i <= 8; ++i) {
      x.push_back(0.5 * i);
      lp.push_back(-std::pow(0.5 * i, 4.0));
    }
    const GammaFit f = fit_gamma(x, lp);
    s.close("fit_gamma_synthetic_quartic", f.gamma_hat, 4.0, 1e-12);
  }
  for (double eps : {0.2, 0.5, 0.8}) {
    CheckRow& r = s.close("kappa_continuity", kappa_epsilon(eps, 1.0),
                          kappa_epsilon(eps + 1e-6, 1.0), 1e-3);
    r.a = fmt(eps);
  }
  {
    const double beta = 0.5 * BetaParams::critical();
    const double gamma = BetaParams{beta}.gamma();
    for (int n : {4, 8, 12}) {
      const double mn = essential_infimum(n, beta).magnitude;
      const double lhs = gamma * std::log(mn);
      const double rhs = -gamma * std::log(beta * std::exp(1.0)) + n * std::log(2.0);
      s.close("essinf_gamma_scaling", lhs, rhs, 1e-12 * std::max(1.0, std::abs(rhs)))
          .n = std::to_string(n);
    }
  }
  {
    const std::vector<double> grid = {0.0, 0.25, 0.5, 0.75, 1.0};
    const TailEstimate t =
        empirical_tail(6, 0.3, 20000, grid, TailMethod::naive, seed);
    bool monotone = true;
    for (std::size_t i = 1; i < t.points.size(); ++i)
      monotone = monotone && t.points[i].log_prob <= t.points[i - 1].log_prob + 1e-15;
    s.close("tail_monotone", monotone ? 1.0 : 0.0, 1.0, 0.0).beta = fmt(0.3);
  }
}

int run_verify(const std::string& suite, const CommonOpts& c, const ReportMeta& meta) {
  std::vector<CheckRow> rows;
  const bool all = suite == "all";
  if (all || suite == "covariance") covariance_suite(c.seed, rows);
  if (all || suite == "brw") brw_suite(c.seed, rows);
  if (all || suite == "tilt") tilt_suite(c.seed, rows);
  if (all || suite == "laplace") laplace_suite(c.seed, rows);
  if (all || suite == "box") box_suite(c.seed, rows);
  if (all || suite == "continuous") continuous_suite(c.seed, rows);
  if (all || suite == "stats") stats_suite(c.seed, rows);
  if (rows.empty()) throw ConfigError("unknown suite '" + suite + "'");

  Table t;
  t.columns = {"check", "n", "beta", "a", "lambda", "lhs_log", "rhs_log", "ci", "verdict"};
  bool ok = true;
  for (const auto& r : rows) {
    t.add_row({r.check, r.n, r.beta, r.a, r.lambda, fmt(r.lhs), fmt(r.rhs), fmt(r.ci),
               verdict_name(r.verdict)});
    ok = ok && r.verdict != Verdict::fail;
  }
  emit(t, meta, c);
  return ok ? 0 : 1;
}

// ---------------------------------------------------------------------------

int run_simulate(double beta, const std::string& n_range, std::size_t replicas,
                 const CommonOpts& c, const ReportMeta& meta) {
  Table t;
  t.columns = {"beta", "n", "replicas", "mean_w", "se_w", "mean_z", "se_z"};
  for (int n : parse_range(n_range)) {
    const std::vector<ZwSample> batch =
        sample_zw_batch(n, beta, replicas, c.seed, c.threads);
    std::vector<double> w(replicas), z(replicas);
    for (std::size_t i = 0; i < replicas; ++i) {
      w[i] = batch[i].w;
      z[i] = batch[i].z;
    }
    const MeanVar mw = mean_and_variance(w);
    const MeanVar mz = mean_and_variance(z);
    t.add_row({fmt(beta), std::to_string(n), std::to_string(replicas), fmt(mw.mean),
               fmt(mw.se()), fmt(mz.mean), fmt(mz.se())});
  }
  emit(t, meta, c);
  return 0;
}

int run_tail(const std::string& method, double beta, const std::string& n_range,
             std::size_t replicas, double epsilon, const std::string& x_grid,
             const CommonOpts& c, const ReportMeta& meta) {
  Table t;
  if (method == "naive") {
    t.columns = {"method", "beta", "n", "x", "log_prob", "ci_lo", "ci_hi"};
    const std::vector<double> grid = parse_grid(x_grid);
    for (int n : parse_range(n_range)) {
      const TailEstimate est = empirical_tail(n, beta, replicas, grid, TailMethod::naive,
                                              c.seed, epsilon, c.threads);
      for (const TailPoint& p : est.points)
        t.add_row({"naive", fmt(beta), std::to_string(n), fmt(p.x), fmt(p.log_prob),
                   fmt(p.ci_lo), fmt(p.ci_hi)});
    }
  } else {
    t.columns = {"n", "epsilon", "log_prob", "ci_lo", "ci_hi", "analytic_lower_bound"};
    for (int n : parse_range(n_range)) {
      RngStream rng(c.seed, static_cast<std::uint64_t>(n));
      const BoxProbability bp = box_probability(n, epsilon, beta, replicas, rng);
      t.add_row({std::to_string(n), fmt(epsilon), fmt(bp.log_prob), fmt(bp.ci_lo),
                 fmt(bp.ci_hi), fmt(bp.log_analytic_lower_bound)});
    }
  }
  emit(t, meta, c);
  return 0;
}

int run_fit_gamma(double beta, const std::string& n_range, double epsilon,
                  const CommonOpts& c, const ReportMeta& meta) {
  const std::vector<int> ns = parse_range(n_range);
  std::vector<double> x, lp;
  for (int n : ns) {
    x.push_back((1.0 - epsilon) * essential_infimum(n, beta).magnitude);
    lp.push_back(log_box_probability_recursive(n, epsilon, beta));
  }
  const GammaFit f = fit_gamma(x, lp);
  Table t;
  t.columns = {"gamma_hat", "stderr", "target_gamma", "n_points"};
  t.add_row({fmt(f.gamma_hat), fmt(f.stderr_), fmt(BetaParams{beta}.gamma()),
             std::to_string(f.n_points)});
  emit(t, meta, c);
  if (c.plot) {
    if (c.output.empty()) throw ConfigError("--plot requires --output");
    write_file(c.output + ".svg", render_loglog_svg(x, lp, f.gamma_hat, f.intercept));
  }
  return 0;
}

int run_covariance(int n, const CommonOpts& c, const ReportMeta& meta) {
  std::vector<CheckRow> rows;
  covariance_suite(c.seed, rows);
  Suite s(rows);
  if (n >= 1) {
    const std::vector<double> ones(std::size_t{1} << n, 1.0);
    s.close("ones_quad_form_requested_n", quad_form_inv(n, ones), ones_quad_form(n),
            1e-10).n = std::to_string(n);
    const double theta = theta_constant(1e-10);
    const double asym = theta * std::pow(2.0, n) - 2.0 * std::log(2.0);
    s.close("logdet_asymptote", log_det(n) / asym, 1.0, 0.35 / std::pow(2.0, n))
        .n = std::to_string(n);
  }
  Table t;
  t.columns = {"check", "n", "closed_form", "reference", "tolerance", "verdict"};
  bool ok = true;
  for (const auto& r : rows) {
    t.add_row({r.check, r.n, fmt(r.lhs), fmt(r.rhs), fmt(r.ci), verdict_name(r.verdict)});
    ok = ok && r.verdict != Verdict::fail;
  }
  emit(t, meta, c);
  return ok ? 0 : 1;
}

int run_continuous(double beta, double eta, double A, double dt, double horizon,
                   std::size_t replicas, const CommonOpts& c, const ReportMeta& meta) {
  LineCrossConfig cfg;
  cfg.beta = beta;
  cfg.eta = eta;
  cfg.A = A;
  std::vector<double> tgrid;
  for (double t = 0.5; t <= horizon + 1e-9; t += 0.5) tgrid.push_back(t);
  if (tgrid.empty()) throw ConfigError("continuous: horizon must be >= 0.5");

  struct PerPath {
    std::vector<double> z, zt, q, cross;
  };
  const std::vector<PerPath> paths = replica_map<PerPath>(
      replicas, c.seed,
      [&](std::size_t, RngStream& rng) {
        const BranchingWienerPath p = BranchingWienerPath::sample(horizon, dt, rng);
        PerPath out;
        for (double t : tgrid) {
          const ContinuousStats st = tree_scan(p, cfg, beta, t);
          out.z.push_back(continuous_derivative_martingale(p, beta, t));
          out.zt.push_back(st.ztilde);
          out.q.push_back(st.q);
          out.cross.push_back(st.crossings_per_lineage);
        }
        return out;
      },
      c.threads);

  Table t;
  t.columns = {"t", "mean_Z", "mean_Ztilde", "mean_Q", "bracket_bound",
               "crossings_per_lineage"};
  for (std::size_t j = 0; j < tgrid.size(); ++j) {
    std::vector<double> z(replicas), zt(replicas), q(replicas), cr(replicas);
    for (std::size_t i = 0; i < replicas; ++i) {
      z[i] = paths[i].z[j];
      zt[i] = paths[i].zt[j];
      q[i] = paths[i].q[j];
      cr[i] = paths[i].cross[j];
    }
    const double nn = static_cast<double>(replicas);
    t.add_row({fmt(tgrid[j]), fmt(pairwise_sum(z) / nn), fmt(pairwise_sum(zt) / nn),
               fmt(pairwise_sum(q) / nn), fmt(ztilde_bracket_bound(cfg, tgrid[j])),
               fmt(pairwise_sum(cr) / nn)});
  }
  emit(t, meta, c);
  return 0;
}

int run_report(double beta, double epsilon, const std::string& n_range,
               const CommonOpts& c, const ReportMeta& meta) {
  const std::vector<int> ns = parse_range(n_range);
  const std::vector<LowerBoundRow> rows = lower_bound_report(
      ns, epsilon, beta, 0, c.seed, BoxEstimator::recursive);
  Table t;
  t.columns = {"n", "epsilon", "log_prob", "ratio", "neg_kappa", "margin", "bound_ok"};
  bool ok = true;
  std::vector<double> x, lp;
  for (const auto& r : rows) {
    t.add_row({std::to_string(r.n), fmt(epsilon), fmt(r.log_prob), fmt(r.ratio),
               fmt(r.neg_kappa), fmt(r.margin), r.bound_ok ? "1" : "0"});
    ok = ok && r.bound_ok;
    x.push_back((1.0 - epsilon) * essential_infimum(r.n, beta).magnitude);
    lp.push_back(r.log_prob);
  }
  emit(t, meta, c);
  if (c.plot) {
    if (c.output.empty()) throw ConfigError("--plot requires --output");
    const GammaFit f = fit_gamma(x, lp);
    write_file(c.output + ".svg", render_loglog_svg(x, lp, f.gamma_hat, f.intercept));
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string("cascade-tails ") + ctails::kVersion +
               " - branching random walk tail studies"};
  app.require_subcommand(1);

  // Config echo for artifacts. --threads is scheduling-only (results are
  // replica-keyed), so it is omitted to keep output bytes thread-independent.
  std::string full_cmd;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--threads") {
      ++i;
      continue;
    }
    if (arg.rfind("--threads=", 0) == 0) continue;
    if (!full_cmd.empty()) full_cmd += ' ';
    full_cmd += arg;
  }

  CommonOpts common;

  // simulate
  double beta = 0.5;
  std::string n_range = "6";
  std::size_t replicas = 10000;
  auto* sim = app.add_subcommand("simulate", "sample martingale pairs (W_n, Z_n)");
  sim->add_option("--beta", beta, "inverse temperature")->capture_default_str();
  sim->add_option("--n", n_range, "generation or range A..B")->capture_default_str();
  sim->add_option("--replicas", replicas, "independent trees")->capture_default_str();
  add_common(sim, common);

  // tail
  std::string method = "naive";
  double epsilon = 0.5;
  std::string x_grid = "0.25,0.5,0.75,1.0";
  auto* tail = app.add_subcommand("tail", "left-tail estimates of Z_n");
  tail->add_option("--method", method, "estimator")
      ->check(CLI::IsMember({"naive", "box"}))
      ->capture_default_str();
  tail->add_option("--beta", beta, "inverse temperature")->capture_default_str();
  tail->add_option("--n", n_range, "generation or range A..B")->capture_default_str();
  tail->add_option("--replicas", replicas, "samples per point")->capture_default_str();
  tail->add_option("--epsilon", epsilon, "box depth parameter")->capture_default_str();
  tail->add_option("--x-grid", x_grid, "comma-separated tail abscissas (naive)")
      ->capture_default_str();
  add_common(tail, common);

  // fit-gamma
  std::string fit_range = "4..9";
  auto* fit = app.add_subcommand("fit-gamma", "tail-exponent regression from box points");
  fit->add_option("--beta", beta, "inverse temperature")->capture_default_str();
  fit->add_option("--n", fit_range, "generation range A..B")->capture_default_str();
  fit->add_option("--epsilon", epsilon, "box depth parameter")->capture_default_str();
  add_common(fit, common);

  // verify
  std::string suite = "all";
  auto* ver = app.add_subcommand("verify", "run property suites");
  ver->add_option("--suite", suite,
                  "all|covariance|brw|tilt|laplace|box|continuous|stats")
      ->capture_default_str();
  add_common(ver, common);

  // covariance
  int cov_n = 6;
  auto* cov = app.add_subcommand("covariance", "closed forms vs dense references");
  cov->add_option("--n", cov_n, "generation for the requested-n checks")
      ->capture_default_str();
  add_common(cov, common);

  // continuous
  double eta = 0.3, A = 2.0, dt = 0.01, horizon = 3.0;
  std::size_t creplicas = 200;
  auto* cont = app.add_subcommand("continuous", "branching Wiener summaries");
  cont->add_option("--beta", beta, "inverse temperature")->capture_default_str();
  cont->add_option("--eta", eta, "extra slope of the upper line")->capture_default_str();
  cont->add_option("--A", A, "upper-line intercept")->capture_default_str();
  cont->add_option("--dt", dt, "time step (1/dt must be integer)")->capture_default_str();
  cont->add_option("--horizon", horizon, "time horizon (<= 14)")->capture_default_str();
  cont->add_option("--replicas", creplicas, "independent paths")->capture_default_str();
  add_common(cont, common);

  // report
  std::string rep_range = "4..8";
  auto* rep = app.add_subcommand("report", "lower-bound table across n");
  rep->add_option("--beta", beta, "inverse temperature")->capture_default_str();
  rep->add_option("--epsilon", epsilon, "box depth parameter")->capture_default_str();
  rep->add_option("--n", rep_range, "generation range A..B")->capture_default_str();
  add_common(rep, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const auto start = std::chrono::steady_clock::now();
  int code = 0;
  try {
    ctails::ReportMeta meta;
    meta.command = full_cmd;
    meta.seed = common.seed;
    if (sim->parsed())
      code = run_simulate(beta, n_range, replicas, common, meta);
    else if (tail->parsed())
      code = run_tail(method, beta, n_range, replicas, epsilon, x_grid, common, meta);
    else if (fit->parsed())
      code = run_fit_gamma(beta, fit_range, epsilon, common, meta);
    else if (ver->parsed())
      code = run_verify(suite, common, meta);
    else if (cov->parsed())
      code = run_covariance(cov_n, common, meta);
    else if (cont->parsed())
      code = run_continuous(beta, eta, A, dt, horizon, creplicas, common, meta);
    else if (rep->parsed())
      code = run_report(beta, epsilon, rep_range, common, meta);
  } catch (const ctails::ResourceGuardError& e) {
    std::cerr << "resource guard [" << e.guard() << "]: " << e.what() << "\n";
    return 3;
  } catch (const ctails::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  const auto elapsed = std::chrono::duration<double>(
      std::chrono::steady_clock::now() - start);
  // Wall-clock goes to stderr, never into artifacts: output bytes must depend
  // only on (config, seed).
  std::cerr << "wall-clock: " << elapsed.count() << " s\n";
  return code;
}
