#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "ctails/brw.hpp"
#include "ctails/errors.hpp"
#include "ctails/numeric.hpp"
#include "ctails/rng.hpp"

namespace ctails {

inline constexpr int kMaxContinuousLevels = 14;  // 2^14 particles, cost guard
inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Upper line t -> (beta+eta) t + A and return line t -> beta t. The three
// validity flags mark the parameter regime in which the excursion bounds are
// meaningful; simulation itself only needs positive A, eta, dt.
struct LineCrossConfig {
  double A = 2.0;
  double eta = 0.3;
  double beta = 0.5;

  double upper(double t) const { return (beta + eta) * t + A; }
  double lower(double t) const { return beta * t; }

  bool slope_ok() const { return 2.0 * eta > beta; }
  bool bracket_ok() const { return beta * beta + 2.0 * beta * eta < std::log(2.0); }
  bool intercept_ok() const { return A > 1.0 / (beta + eta); }
  bool valid() const { return A > 0.0 && eta > 0.0 && slope_ok() && bracket_ok() && intercept_ok(); }
};

// --- Branching Wiener path ----------------------------------------------------
//
// One particle diffuses from 0 and splits in two at every integer time; level
// l covers (l-1, l]. Each node stores its Brownian increments on the dt grid
// plus one uniform per step for bridge-crossing imputation. Node noise comes
// from a node-keyed substream, so values do not depend on traversal order.

class BranchingWienerPath {
 public:
  static BranchingWienerPath sample(double horizon, double dt, RngStream& rng) {
    BranchingWienerPath p;
    p.init_grid(horizon, dt);
    const std::uint64_t base = rng.raw();
    const double sd = std::sqrt(p.dt_);
    for (int l = 1; l <= p.levels_; ++l) {
      const std::size_t nodes = std::size_t{1} << l;
      const std::size_t steps = p.steps_at_level(l);
      auto& inc = p.incr_[l - 1];
      auto& uni = p.unif_[l - 1];
      inc.resize(nodes * steps);
      uni.resize(nodes * steps);
      for (std::size_t i = 0; i < nodes; ++i) {
        RngStream node_rng(base, RngStream::derive(l, i));
        for (std::size_t k = 0; k < steps; ++k) {
          inc[i * steps + k] = sd * node_rng.normal();
          uni[i * steps + k] = node_rng.uniform();
        }
      }
      auto& end = p.ends_[l - 1];
      end.resize(nodes);
      for (std::size_t i = 0; i < nodes; ++i) {
        double x = l == 1 ? 0.0 : p.ends_[l - 2][i / 2];
        for (std::size_t k = 0; k < steps; ++k) x += inc[i * steps + k];
        end[i] = x;
      }
    }
    return p;
  }

  double horizon() const { return horizon_; }
  double dt() const { return dt_; }
  int levels() const { return levels_; }
  std::size_t steps_at_level(int l) const {
    return l < levels_ ? steps_full_ : steps_last_;
  }
  double level_start_time(int l) const { return static_cast<double>(l - 1); }

  std::span<const double> node_increments(int l, std::size_t i) const {
    const std::size_t s = steps_at_level(l);
    return {incr_[l - 1].data() + i * s, s};
  }
  std::span<const double> node_uniforms(int l, std::size_t i) const {
    const std::size_t s = steps_at_level(l);
    return {unif_[l - 1].data() + i * s, s};
  }
  double node_start(int l, std::size_t i) const {
    return l == 1 ? 0.0 : ends_[l - 2][i / 2];
  }
  double node_end(int l, std::size_t i) const { return ends_[l - 1][i]; }

  // Positions of the 2^ceil(t) particles alive at grid time t.
  std::vector<double> positions_at(double t) const {
    if (t < 0.0 || t > horizon_ + 0.5 * dt_)
      throw ConfigError("positions_at: t outside [0, horizon]");
    if (t <= 0.0) return {0.0};
    const int l = static_cast<int>(std::ceil(t - 1e-9));
    const double local = t - level_start_time(l);
    const auto k = static_cast<std::size_t>(std::llround(local / dt_));
    if (std::abs(local - static_cast<double>(k) * dt_) > 1e-9)
      throw ConfigError("positions_at: t not on the dt grid");
    const std::size_t nodes = std::size_t{1} << l;
    std::vector<double> pos(nodes);
    for (std::size_t i = 0; i < nodes; ++i) {
      double x = node_start(l, i);
      const auto inc = node_increments(l, i);
      for (std::size_t s = 0; s < k; ++s) x += inc[s];
      pos[i] = x;
    }
    return pos;
  }

 private:
  void init_grid(double horizon, double dt) {
    if (horizon < 0.0 || dt <= 0.0)
      throw ConfigError("branching Wiener path: need horizon >= 0, dt > 0");
    steps_full_ = static_cast<std::size_t>(std::llround(1.0 / dt));
    if (steps_full_ < 1 || std::abs(1.0 / dt - static_cast<double>(steps_full_)) > 1e-9)
      throw ConfigError("branching Wiener path: 1/dt must be an integer step count");
    dt_ = 1.0 / static_cast<double>(steps_full_);
    levels_ = static_cast<int>(std::ceil(horizon - 1e-9));
    if (levels_ > kMaxContinuousLevels)
      throw ResourceGuardError("particle-count",
                               "branching Wiener horizon limited to 14 levels");
    if (levels_ == 0) {
      horizon_ = 0.0;
      steps_last_ = 0;
      return;
    }
    const double last = horizon - static_cast<double>(levels_ - 1);
    steps_last_ = static_cast<std::size_t>(std::llround(last / dt_));
    if (steps_last_ == 0) steps_last_ = 1;
    horizon_ = static_cast<double>(levels_ - 1) + static_cast<double>(steps_last_) * dt_;
    incr_.resize(levels_);
    unif_.resize(levels_);
    ends_.resize(levels_);
  }

  double horizon_ = 0.0;
  double dt_ = 1e-2;
  int levels_ = 0;
  std::size_t steps_full_ = 100;
  std::size_t steps_last_ = 0;
  std::vector<std::vector<double>> incr_;
  std::vector<std::vector<double>> unif_;
  std::vector<std::vector<double>> ends_;
};

inline double continuous_derivative_martingale(const BranchingWienerPath& path,
                                               double beta, double t) {
  const std::vector<double> pos = path.positions_at(t);
  return derivative_martingale(pos, beta, t);
}

// --- Crossing detection --------------------------------------------------------

struct CrossingRecord {
  std::vector<double> upper;   // T_1, T_2, ...
  std::vector<double> ret;     // R_1, R_2, ...
  bool alternating() const {
    if (ret.size() > upper.size()) return false;
    for (std::size_t k = 0; k < ret.size(); ++k) {
      if (ret[k] < upper[k]) return false;
      if (k + 1 < upper.size() && upper[k + 1] < ret[k]) return false;
    }
    return true;
  }
  double t1() const { return upper.empty() ? kInf : upper.front(); }
};

// Per-step state machine. Phase 0 hunts the upper line (the particle is in the
// allowed region), phase 1 hunts the return line. Grid crossings are placed by
// linear interpolation; sub-step excursions are imputed with the Brownian
// bridge probability e^{-2ab/dt} and placed at the step end.
class CrossingScanner {
 public:
  explicit CrossingScanner(const LineCrossConfig& cfg) : cfg_(cfg) {}

  struct Event {
    bool is_upper = true;
    double time = 0.0;
  };

  int phase() const { return phase_; }

  // u is the imputation uniform; pass 1.0 to disable imputation for this step.
  std::optional<Event> step(double t_a, double x_a, double x_b, double dt, double u) {
    const double t_b = t_a + dt;
    const bool up = phase_ == 0;
    const double g_a = up ? cfg_.upper(t_a) - x_a : x_a - cfg_.lower(t_a);
    const double g_b = up ? cfg_.upper(t_b) - x_b : x_b - cfg_.lower(t_b);
    double when = -1.0;
    if (g_a <= 0.0) {
      when = t_a;  // already at/past the line (start of hunt)
    } else if (g_b <= 0.0) {
      when = t_a + dt * g_a / (g_a - g_b);
    } else {
      const double expo = 2.0 * g_a * g_b / dt;
      if (expo < 45.0 && u < std::exp(-expo)) when = t_b;
    }
    if (when < 0.0) return std::nullopt;
    phase_ = 1 - phase_;
    return Event{up, when};
  }

 private:
  LineCrossConfig cfg_;
  int phase_ = 0;
};

// Crossing record of one discretized path given on the grid (positions at
// 0, dt, 2dt, ...). Empty `uniforms` disables bridge imputation.
inline CrossingRecord detect_crossings(std::span<const double> positions, double dt,
                                       const LineCrossConfig& cfg,
                                       std::span<const double> uniforms = {},
                                       double t0 = 0.0) {
  CrossingScanner scan(cfg);
  CrossingRecord rec;
  for (std::size_t k = 0; k + 1 < positions.size(); ++k) {
    const double u = k < uniforms.size() ? uniforms[k] : 1.0;
    if (auto ev = scan.step(t0 + dt * static_cast<double>(k), positions[k],
                            positions[k + 1], dt, u)) {
      (ev->is_upper ? rec.upper : rec.ret).push_back(ev->time);
    }
  }
  return rec;
}

// The value accrued by one upper-line crossing at time tk.
inline double q_summand(const LineCrossConfig& cfg, double tk) {
  return (cfg.A + cfg.eta * tk) *
         std::exp((0.5 * cfg.beta * cfg.beta + cfg.beta * cfg.eta) * tk +
                  cfg.beta * cfg.A);
}

// --- Full-tree scan ------------------------------------------------------------
//
// One depth-first pass computing, for a sampled tree, the boundary averages
//   Ztilde_t  (left-endpoint Ito discretization restricted to the allowed regions),
//   the discretized bracket of Ztilde,
//   Q truncated at t, and crossings per lineage.
// A node at level l carries boundary measure 2^{-l}.

struct ContinuousStats {
  double ztilde = 0.0;
  double bracket = 0.0;
  double q = 0.0;
  double crossings_per_lineage = 0.0;
};

namespace detail {
struct NodeState {
  double x = 0.0;
  CrossingScanner scan;
};

inline void tree_scan_node(const BranchingWienerPath& path, const LineCrossConfig& cfg,
                           double beta, double t, int l, std::size_t i, NodeState state,
                           ContinuousStats& out) {
  if (l > path.levels()) return;
  const double weight = std::pow(2.0, -l);
  const double dt = path.dt();
  const auto inc = path.node_increments(l, i);
  const auto uni = path.node_uniforms(l, i);
  const double t_level = path.level_start_time(l);
  for (std::size_t k = 0; k < inc.size(); ++k) {
    const double s = t_level + dt * static_cast<double>(k);
    if (s >= t - 1e-12) break;
    const bool allowed = state.scan.phase() == 0;  // left-endpoint indicator
    if (allowed) {
      const double f = (1.0 + beta * (state.x - beta * s)) *
                       std::exp(beta * state.x - 0.5 * beta * beta * s);
      out.ztilde += weight * f * inc[k];
      out.bracket += weight * weight * f * f * dt;
    }
    const double x_next = state.x + inc[k];
    if (auto ev = state.scan.step(s, state.x, x_next, dt, uni[k])) {
      if (ev->is_upper && ev->time <= t) {
        out.q += weight * q_summand(cfg, ev->time);
        out.crossings_per_lineage += weight;
      }
    }
    state.x = x_next;
  }
  tree_scan_node(path, cfg, beta, t, l + 1, 2 * i, state, out);
  tree_scan_node(path, cfg, beta, t, l + 1, 2 * i + 1, std::move(state), out);
}
}  // namespace detail

inline ContinuousStats tree_scan(const BranchingWienerPath& path,
                                 const LineCrossConfig& cfg, double beta, double t) {
  if (t < 0.0 || t > path.horizon() + 0.5 * path.dt())
    throw ConfigError("tree_scan: t outside [0, horizon]");
  ContinuousStats out;
  if (path.levels() == 0) return out;
  detail::NodeState root{0.0, CrossingScanner(cfg)};
  detail::tree_scan_node(path, cfg, beta, t, 1, 0, root, out);
  detail::tree_scan_node(path, cfg, beta, t, 1, 1, std::move(root), out);
  return out;
}

inline double truncated_martingale(const BranchingWienerPath& path,
                                   const LineCrossConfig& cfg, double beta, double t) {
  return tree_scan(path, cfg, beta, t).ztilde;
}

inline double compute_q(const BranchingWienerPath& path, const LineCrossConfig& cfg,
                        double t) {
  return tree_scan(path, cfg, cfg.beta, t).q;
}

// Per-leaf crossing records (the lineage view of the same records).
namespace detail {
inline void collect_records(const BranchingWienerPath& path, const LineCrossConfig& cfg,
                            int l, std::size_t i, NodeState state, CrossingRecord rec,
                            std::vector<CrossingRecord>& out) {
  if (l > path.levels()) {
    out.push_back(std::move(rec));
    return;
  }
  const double dt = path.dt();
  const auto inc = path.node_increments(l, i);
  const auto uni = path.node_uniforms(l, i);
  const double t_level = path.level_start_time(l);
  for (std::size_t k = 0; k < inc.size(); ++k) {
    const double s = t_level + dt * static_cast<double>(k);
    const double x_next = state.x + inc[k];
    if (auto ev = state.scan.step(s, state.x, x_next, dt, uni[k]))
      (ev->is_upper ? rec.upper : rec.ret).push_back(ev->time);
    state.x = x_next;
  }
  collect_records(path, cfg, l + 1, 2 * i, state, rec, out);
  collect_records(path, cfg, l + 1, 2 * i + 1, std::move(state), std::move(rec), out);
}
}  // namespace detail

inline std::vector<CrossingRecord> detect_crossings(const BranchingWienerPath& path,
                                                    const LineCrossConfig& cfg) {
  std::vector<CrossingRecord> out;
  if (path.levels() == 0) return out;
  detail::NodeState root{0.0, CrossingScanner(cfg)};
  detail::collect_records(path, cfg, 1, 0, root, {}, out);
  detail::collect_records(path, cfg, 1, 1, std::move(root), {}, out);
  return out;
}

// --- Single-lineage simulation --------------------------------------------------
//
// Under the uniform boundary measure one ray is a plain Brownian motion, so
// lineage-level laws (T_1, Q_u) are simulated without branching.

struct LineageOutcome {
  CrossingRecord record;
  double q = 0.0;
  double t1 = kInf;
};

// give_up_gap: once the particle hunts the upper line from this far below it,
// the remaining crossing probability is < e^{-2 gap (beta+eta)} and the path
// is abandoned (no further event of any kind is possible without T_k).
inline LineageOutcome simulate_lineage(const LineCrossConfig& cfg, double horizon,
                                       double dt, double start, RngStream& rng,
                                       double give_up_gap = 30.0) {
  if (horizon < 0.0 || dt <= 0.0)
    throw ConfigError("simulate_lineage: need horizon >= 0, dt > 0");
  LineageOutcome out;
  CrossingScanner scan(cfg);
  const double sd = std::sqrt(dt);
  double x = start;
  const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
  for (std::size_t k = 0; k < steps; ++k) {
    const double s = dt * static_cast<double>(k);
    const double x_next = x + sd * rng.normal();
    double u = 1.0;
    if (scan.phase() == 0) {
      const double g_a = cfg.upper(s) - x;
      const double g_b = cfg.upper(s + dt) - x_next;
      if (g_a > 0.0 && g_b > 0.0 && 2.0 * g_a * g_b / dt < 45.0) u = rng.uniform();
      if (g_a > give_up_gap && g_b > give_up_gap) break;
    } else {
      const double g_a = x - cfg.lower(s);
      const double g_b = x_next - cfg.lower(s + dt);
      if (g_a > 0.0 && g_b > 0.0 && 2.0 * g_a * g_b / dt < 45.0) u = rng.uniform();
    }
    if (auto ev = scan.step(s, x, x_next, dt, u)) {
      if (ev->is_upper) {
        out.record.upper.push_back(ev->time);
        out.q += q_summand(cfg, ev->time);
        if (out.record.upper.size() == 1) out.t1 = ev->time;
      } else {
        out.record.ret.push_back(ev->time);
      }
    }
    x = x_next;
  }
  return out;
}

// Coupled pair (start 0 vs start a <= 0) sharing the per-step noise and the
// imputation uniform, so the lower start crosses the upper line no earlier.
inline std::pair<LineageOutcome, LineageOutcome> simulate_coupled_lineages(
    const LineCrossConfig& cfg, double horizon, double dt, double a, RngStream& rng,
    double give_up_gap = 30.0) {
  if (a > 0.0) throw ConfigError("simulate_coupled_lineages: need a <= 0");
  LineageOutcome base, shifted;
  CrossingScanner scan_b(cfg), scan_s(cfg);
  const double sd = std::sqrt(dt);
  double xb = 0.0, xs = a;
  const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
  for (std::size_t k = 0; k < steps; ++k) {
    const double s = dt * static_cast<double>(k);
    const double dw = sd * rng.normal();
    const double u = rng.uniform();
    const double xb_next = xb + dw;
    const double xs_next = xs + dw;
    if (scan_b.phase() == 0 && scan_s.phase() == 0 &&
        cfg.upper(s) - xb > give_up_gap && cfg.upper(s + dt) - xb_next > give_up_gap)
      break;  // the shifted gap is even larger
    auto record = [&](CrossingScanner& scan, LineageOutcome& out, double x_a, double x_b) {
      if (auto ev = scan.step(s, x_a, x_b, dt, u)) {
        if (ev->is_upper) {
          out.record.upper.push_back(ev->time);
          out.q += q_summand(cfg, ev->time);
          if (out.record.upper.size() == 1) out.t1 = ev->time;
        } else {
          out.record.ret.push_back(ev->time);
        }
      }
    };
    record(scan_b, base, xb, xb_next);
    record(scan_s, shifted, xs, xs_next);
    xb = xb_next;
    xs = xs_next;
  }
  return {base, shifted};
}

// --- Stochastic dominance check ---------------------------------------------------

struct SurvivalPoint {
  double x = 0.0;
  double surv_base = 0.0;
  double surv_shifted = 0.0;
  double se = 0.0;   // combined binomial standard error
  bool ok = false;   // surv_shifted <= surv_base + 3 se
};

struct DominationReport {
  std::size_t replicas = 0;
  std::size_t t1_ordered = 0;  // paths with T_1^{[a]} >= T_1
  bool pathwise_ok = false;
  std::vector<SurvivalPoint> survival;
  bool survival_ok = false;
};

inline DominationReport check_domination(const LineCrossConfig& cfg, double a,
                                         std::size_t replicas, double horizon, double dt,
                                         std::uint64_t seed, std::size_t grid_points = 20) {
  if (a > 0.0) throw ConfigError("check_domination: need a <= 0");
  if (!cfg.intercept_ok())
    throw ConfigError("check_domination: config requires A > 1/(beta+eta)");
  DominationReport rep;
  rep.replicas = replicas;
  std::vector<double> q_base(replicas), q_shift(replicas);
  for (std::size_t i = 0; i < replicas; ++i) {
    RngStream rng(seed, i);
    const auto [b, s] = simulate_coupled_lineages(cfg, horizon, dt, a, rng);
    if (s.t1 >= b.t1) ++rep.t1_ordered;
    q_base[i] = b.q;
    q_shift[i] = s.q;
  }
  rep.pathwise_ok = rep.t1_ordered == replicas;

  // Survival-function comparison on quantiles of the pooled positive values.
  std::vector<double> pooled;
  for (double q : q_base)
    if (q > 0.0) pooled.push_back(q);
  for (double q : q_shift)
    if (q > 0.0) pooled.push_back(q);
  std::sort(pooled.begin(), pooled.end());
  rep.survival_ok = true;
  if (pooled.empty()) return rep;  // both Q identically zero: trivially ordered
  const double nn = static_cast<double>(replicas);
  for (std::size_t j = 1; j <= grid_points; ++j) {
    SurvivalPoint pt;
    const std::size_t idx = std::min(pooled.size() - 1,
                                     j * pooled.size() / (grid_points + 1));
    pt.x = pooled[idx];
    std::size_t hb = 0, hs = 0;
    for (double q : q_base) hb += q > pt.x;
    for (double q : q_shift) hs += q > pt.x;
    pt.surv_base = static_cast<double>(hb) / nn;
    pt.surv_shifted = static_cast<double>(hs) / nn;
    pt.se = std::sqrt(pt.surv_base * (1.0 - pt.surv_base) / nn +
                      pt.surv_shifted * (1.0 - pt.surv_shifted) / nn);
    pt.ok = pt.surv_shifted <= pt.surv_base + 3.0 * pt.se;
    rep.survival_ok = rep.survival_ok && pt.ok;
    rep.survival.push_back(pt);
  }
  return rep;
}

// --- First-passage density and bracket bounds -------------------------------------

// Finite part of the hitting-time law of a sloped line at initial distance
// alpha and relative drift -b; mass e^{-2 alpha b}, atom at infinity otherwise.
inline double hitting_time_density(double alpha, double b, double t) {
  if (alpha <= 0.0 || b <= 0.0 || t <= 0.0)
    throw ConfigError("hitting_time_density: parameters must be positive");
  return alpha / (std::sqrt(2.0 * M_PI) * std::pow(t, 1.5)) * std::exp(-alpha * b) *
         std::exp(-0.5 * b * b * t - 0.5 * alpha * alpha / t);
}

inline double hitting_atom_mass(double alpha, double b) {
  if (alpha <= 0.0 || b <= 0.0)
    throw ConfigError("hitting_atom_mass: parameters must be positive");
  return 1.0 - std::exp(-2.0 * alpha * b);
}

// Boundary overlap integral sum_{n>=0} e^{alpha n} / 2^{n+1} = 1/(2 - e^alpha).
struct BracketSeries {
  double value = 0.0;
  bool divergent = false;
};

inline BracketSeries bracket_series(double alpha_exp) {
  BracketSeries s;
  if (alpha_exp >= std::log(2.0)) {
    s.divergent = true;
    s.value = kInf;
    return s;
  }
  s.value = 1.0 / (2.0 - std::exp(alpha_exp));
  return s;
}

// Closed-form bound on the bracket of Ztilde at time t: on the allowed region
// X_s <= (beta+eta)s + A, so the integrand is at most
// (1 + beta(eta s + A))^2 e^{(beta^2+2 beta eta)s + 2 beta A}, and the overlap
// measure of rays alive together at s is 2^{-ceil(s)}.
inline double ztilde_bracket_bound(const LineCrossConfig& cfg, double t) {
  const double b = cfg.beta, e = cfg.eta, A = cfg.A;
  auto integrand = [&](double s) {
    const double lin = 1.0 + b * (e * s + A);
    return lin * lin * std::exp((b * b + 2.0 * b * e) * s + 2.0 * b * A);
  };
  double total = 0.0;
  double s0 = 0.0;
  int level = 1;
  while (s0 < t - 1e-12) {
    const double s1 = std::min(t, static_cast<double>(level));
    total += std::pow(2.0, -level) * integrate(integrand, s0, s1, 1e-12);
    s0 = s1;
    ++level;
  }
  return total;
}

}  // namespace ctails
