#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "wardrop_lab/beckmann.hpp"
#include "wardrop_lab/core.hpp"
#include "wardrop_lab/network.hpp"

namespace wlab {
namespace dyn {

/// Integer player counts per route; n is the global step clock and starts
/// at 1 (it also sets the imitation floor 1/n).
struct DynamicsState {
  std::vector<long long> counts;
  long long n = 1;
};

enum class ScheduleKind { Harmonic, Constant, SqrtHorizon };

/// Resampling rate gamma_n. Construction validates 0 < gamma_n <= 1 for
/// every n the schedule can produce.
struct GammaSchedule {
  ScheduleKind kind = ScheduleKind::Harmonic;
  double value = 1.0;      // gamma0, gamma, or alpha
  long long horizon = 0;   // N_total, SqrtHorizon only

  double at(long long n) const {
    switch (kind) {
      case ScheduleKind::Harmonic:
        return value / static_cast<double>(n);
      case ScheduleKind::Constant:
        return value;
      case ScheduleKind::SqrtHorizon:
        return value / std::sqrt(static_cast<double>(horizon));
    }
    fail(ErrorCode::BadArgument, "unknown schedule kind");
  }

  static GammaSchedule harmonic(double gamma0) {
    if (!(gamma0 > 0.0) || gamma0 > 1.0)
      fail(ErrorCode::DomainError, "harmonic schedule needs 0 < gamma0 <= 1");
    return {ScheduleKind::Harmonic, gamma0, 0};
  }
  static GammaSchedule constant(double gamma) {
    if (!(gamma > 0.0) || gamma > 1.0)
      fail(ErrorCode::DomainError, "constant schedule needs 0 < gamma <= 1");
    return {ScheduleKind::Constant, gamma, 0};
  }
  static GammaSchedule sqrt_horizon(double alpha, long long n_total) {
    if (n_total < 1)
      fail(ErrorCode::DomainError, "sqrt schedule needs a positive horizon");
    const double g = alpha / std::sqrt(static_cast<double>(n_total));
    if (!(g > 0.0) || g > 1.0)
      fail(ErrorCode::DomainError,
           "sqrt schedule: alpha/sqrt(N) outside (0, 1]");
    return {ScheduleKind::SqrtHorizon, alpha, n_total};
  }
};

struct DynamicsConfig {
  double T = 1.0;  // temperature: the risk appetite of the choice rule
  GammaSchedule schedule;
  std::uint64_t seed = 0;
  long long steps = 0;

  void validate() const {
    if (!(T > 0.0)) fail(ErrorCode::DomainError, "temperature must be > 0");
    if (steps < 0) fail(ErrorCode::DomainError, "steps must be >= 0");
  }
};

/// Demands usable as player counts. The dynamics moves individual players,
/// so fractional demand has no meaning here.
inline std::vector<long long> integer_demands(const net::Network& n) {
  std::vector<long long> d(n.od_pairs.size());
  for (std::size_t w = 0; w < d.size(); ++w) {
    const double v = n.od_pairs[w].demand;
    d[w] = std::llround(v);
    if (std::abs(v - static_cast<double>(d[w])) > 1e-9)
      fail(ErrorCode::DomainError,
           "dynamics needs integer demands, OD " + std::to_string(w) +
               " has " + std::to_string(v));
  }
  return d;
}

inline void require_valid(const net::Network& n, const net::RouteSet& rs,
                          const DynamicsState& s) {
  if (s.counts.size() != rs.size())
    fail(ErrorCode::DimensionMismatch, "counts do not match the route set");
  if (s.n < 1) fail(ErrorCode::BadArgument, "step index starts at 1");
  const std::vector<long long> d = integer_demands(n);
  for (std::size_t w = 0; w < n.od_pairs.size(); ++w) {
    long long sum = 0;
    for (std::size_t p : rs.by_od[w]) {
      if (s.counts[p] < 0)
        fail(ErrorCode::BadArgument, "negative player count");
      sum += s.counts[p];
    }
    if (sum != d[w])
      fail(ErrorCode::InfeasibleFlow,
           "OD " + std::to_string(w) + " has " + std::to_string(sum) +
               " players for demand " + std::to_string(d[w]));
  }
}

/// Default start: everyone piles onto their OD's cheapest free-flow route.
inline DynamicsState initial_state(const net::Network& n,
                                   const net::RouteSet& rs) {
  const std::vector<long long> d = integer_demands(n);
  DynamicsState s;
  s.counts.assign(rs.size(), 0);
  const std::vector<double> g =
      net::route_costs(n, rs, std::vector<double>(rs.size(), 0.0));
  for (std::size_t w = 0; w < n.od_pairs.size(); ++w) {
    if (rs.by_od[w].empty()) continue;
    std::size_t best = rs.by_od[w].front();
    for (std::size_t p : rs.by_od[w])
      if (g[p] < g[best]) best = p;
    s.counts[best] = d[w];
  }
  return s;
}

inline std::vector<double> counts_as_flow(const DynamicsState& s) {
  return std::vector<double>(s.counts.begin(), s.counts.end());
}

/// Resampling distribution per OD:
///   w_p  proportional to  max{x_p(n), 1/n} * exp(-G_p(x(n)) / T),
/// computed in log space so large costs cannot underflow to all-zero.
/// Costs come from the full current state, once, for every OD.
inline std::vector<std::vector<double>> choice_weights(
    const DynamicsState& s, const net::Network& n, const net::RouteSet& rs,
    double temperature) {
  const std::vector<double> g = net::route_costs(n, rs, counts_as_flow(s));
  std::vector<std::vector<double>> w(n.od_pairs.size());
  const double floor_log = -std::log(static_cast<double>(s.n));
  for (std::size_t od = 0; od < n.od_pairs.size(); ++od) {
    const auto& block = rs.by_od[od];
    std::vector<double> lw(block.size());
    for (std::size_t i = 0; i < block.size(); ++i) {
      const std::size_t p = block[i];
      const double lx =
          s.counts[p] > 0
              ? std::max(std::log(static_cast<double>(s.counts[p])), floor_log)
              : floor_log;
      lw[i] = lx - g[p] / temperature;
    }
    const double lz = block.empty() ? 0.0 : logsumexp(lw);
    w[od].resize(block.size());
    for (std::size_t i = 0; i < block.size(); ++i)
      w[od][i] = std::exp(lw[i] - lz);
  }
  return w;
}

inline std::vector<std::vector<double>> choice_weights(
    const DynamicsState& s, const net::Network& n, const net::RouteSet& rs,
    const DynamicsConfig& cfg) {
  return choice_weights(s, n, rs, cfg.T);
}

namespace detail {

/// Multinomial draw by chained conditional binomials: exact, and uses a
/// bounded number of rng draws.
inline std::vector<long long> multinomial(long long total,
                                          const std::vector<double>& prob,
                                          std::mt19937_64& rng) {
  std::vector<long long> out(prob.size(), 0);
  double mass_left = 1.0;
  for (std::size_t i = 0; i + 1 < prob.size() && total > 0; ++i) {
    const double q = std::clamp(prob[i] / mass_left, 0.0, 1.0);
    std::binomial_distribution<long long> bin(total, q);
    out[i] = bin(rng);
    total -= out[i];
    mass_left = std::max(mass_left - prob[i], 1e-300);
  }
  if (!prob.empty()) out.back() += total;
  return out;
}

}  // namespace detail

/// One synchronous update: every player keeps their route with probability
/// 1 - gamma, otherwise redraws from the choice weights. Removals are
/// binomial per route, reassignments one multinomial per OD, so the player
/// count of every OD is conserved exactly.
inline DynamicsState step_with_gamma(const DynamicsState& s,
                                     const net::Network& n,
                                     const net::RouteSet& rs,
                                     double temperature, double gamma,
                                     std::mt19937_64& rng) {
  if (!(gamma >= 0.0) || gamma > 1.0)
    fail(ErrorCode::DomainError, "gamma outside [0, 1]");
  const auto weights = choice_weights(s, n, rs, temperature);
  DynamicsState next;
  next.counts = s.counts;
  next.n = s.n + 1;
  if (gamma == 0.0) return next;
  for (std::size_t od = 0; od < n.od_pairs.size(); ++od) {
    const auto& block = rs.by_od[od];
    if (block.empty()) continue;
    long long movers = 0;
    for (std::size_t i = 0; i < block.size(); ++i) {
      const std::size_t p = block[i];
      if (s.counts[p] == 0) continue;
      std::binomial_distribution<long long> bin(s.counts[p], gamma);
      const long long leave = bin(rng);
      next.counts[p] -= leave;
      movers += leave;
    }
    if (movers == 0) continue;
    const std::vector<long long> arrive =
        detail::multinomial(movers, weights[od], rng);
    for (std::size_t i = 0; i < block.size(); ++i)
      next.counts[block[i]] += arrive[i];
  }
  return next;
}

inline DynamicsState step(const DynamicsState& s, const net::Network& n,
                          const net::RouteSet& rs, const DynamicsConfig& cfg,
                          std::mt19937_64& rng) {
  return step_with_gamma(s, n, rs, cfg.T, cfg.schedule.at(s.n), rng);
}

/// E[x(n+1) - x(n) | x(n)] = gamma_n (d_w w_p - x_p), exactly.
inline std::vector<double> expected_drift(const DynamicsState& s,
                                          const net::Network& n,
                                          const net::RouteSet& rs,
                                          const DynamicsConfig& cfg) {
  const auto weights = choice_weights(s, n, rs, cfg.T);
  const double gamma = cfg.schedule.at(s.n);
  std::vector<double> drift(rs.size(), 0.0);
  for (std::size_t od = 0; od < n.od_pairs.size(); ++od) {
    const double d = n.od_pairs[od].demand;
    const auto& block = rs.by_od[od];
    for (std::size_t i = 0; i < block.size(); ++i) {
      const std::size_t p = block[i];
      drift[p] =
          gamma * (d * weights[od][i] - static_cast<double>(s.counts[p]));
    }
  }
  return drift;
}

/// F0 and F1 of the weighted-mean inequality with f(w) = -T ln w:
///   F0 = sum a_i w_i f(w_i) / sum a_i w_i  <=  F1 = sum a_i f(w_i) / sum a_i,
/// with equality exactly when all w_i coincide.
inline std::pair<double, double> lemma1_check(const std::vector<double>& alpha,
                                              const std::vector<double>& w,
                                              double temperature) {
  if (alpha.size() != w.size() || alpha.empty())
    fail(ErrorCode::DimensionMismatch, "alpha and w must align and be nonempty");
  double num0 = 0.0, den0 = 0.0, num1 = 0.0, den1 = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!(alpha[i] > 0.0))
      fail(ErrorCode::DomainError, "weights alpha must be positive");
    if (!(w[i] > 0.0 && w[i] < 1.0))
      fail(ErrorCode::DomainError, "w components must lie in (0, 1)");
    const double f = -temperature * std::log(w[i]);
    num0 += alpha[i] * w[i] * f;
    den0 += alpha[i] * w[i];
    num1 += alpha[i] * f;
    den1 += alpha[i];
  }
  return {num0 / den0, num1 / den1};
}

struct TrajectoryPoint {
  long long n = 0;
  std::vector<long long> counts;
  double psi = 0.0;
  double gap = 0.0;
};

struct TrajectoryRecord {
  std::vector<TrajectoryPoint> points;
};

/// Runs the dynamics for cfg.steps steps, recording the initial state and
/// every record_stride-th step index (plus the final state). Deterministic
/// given the seed.
inline TrajectoryRecord run(const net::Network& n, const net::RouteSet& rs,
                            const DynamicsConfig& cfg,
                            long long record_stride,
                            std::vector<long long> initial = {}) {
  cfg.validate();
  if (record_stride < 1)
    fail(ErrorCode::DomainError, "record stride must be >= 1");
  DynamicsState s;
  if (initial.empty()) {
    s = initial_state(n, rs);
  } else {
    s.counts = std::move(initial);
    s.n = 1;
    require_valid(n, rs, s);
  }
  std::mt19937_64 rng(cfg.seed);

  TrajectoryRecord rec;
  auto record = [&](const DynamicsState& st) {
    const std::vector<double> x = counts_as_flow(st);
    rec.points.push_back(
        {st.n, st.counts, beck::potential(n, rs, x), beck::wardrop_gap(n, rs, x)});
  };
  record(s);
  for (long long t = 0; t < cfg.steps; ++t) {
    s = step(s, n, rs, cfg, rng);
    if (s.n % record_stride == 0 || t + 1 == cfg.steps) record(s);
  }
  return rec;
}

struct AveragingReport {
  double gamma = 0.0;      // the constant alpha / sqrt(N_total)
  double psi_min = 0.0;    // solver reference
  std::vector<double> deviations;  // per replica: Psi(x_bar) - psi_min
  std::vector<double> omegas;
  std::vector<double> tail_freq;   // P(deviation >= Omega / sqrt(N))
  double c_hat = 0.0;              // fitted exponential decay rate
  bool monotone = false;
  bool exponential_decay = false;
};

/// Tail table for the time-averaged trajectory: replicas run with the
/// constant schedule gamma = alpha/sqrt(N_total); for each Omega the table
/// reports how often Psi of the averaged flow exceeds psi_min by at least
/// Omega/sqrt(N_total). Replicas are independent and may run in parallel;
/// results do not depend on the execution order.
inline AveragingReport averaging_estimate(const net::Network& n,
                                          const net::RouteSet& rs,
                                          double temperature, double alpha,
                                          long long n_total, int replicas,
                                          std::vector<double> omega_grid,
                                          std::uint64_t seed) {
  if (n_total < 100)
    fail(ErrorCode::DomainError, "averaging needs N_total >= 100");
  if (replicas < 100)
    fail(ErrorCode::DomainError, "averaging needs >= 100 replicas");

  AveragingReport rep;
  const GammaSchedule sched = GammaSchedule::sqrt_horizon(alpha, n_total);
  rep.gamma = sched.at(1);
  rep.psi_min = beck::solve_equilibrium(n, rs, 1e-10).psi;

  const DynamicsState start = initial_state(n, rs);
  rep.deviations.assign(replicas, 0.0);
  parallel_for_index(static_cast<std::size_t>(replicas), [&](std::size_t r) {
    DynamicsConfig cfg;
    cfg.T = temperature;
    cfg.schedule = sched;
    cfg.seed = splitmix64(seed + r);
    std::mt19937_64 rng(cfg.seed);
    DynamicsState s = start;
    std::vector<double> sum(rs.size(), 0.0);
    for (long long t = 0; t < n_total; ++t) {
      for (std::size_t p = 0; p < rs.size(); ++p)
        sum[p] += static_cast<double>(s.counts[p]);
      s = step(s, n, rs, cfg, rng);
    }
    for (double& v : sum) v /= static_cast<double>(n_total);
    rep.deviations[r] = beck::potential(n, rs, sum) - rep.psi_min;
  });

  std::sort(omega_grid.begin(), omega_grid.end());
  rep.omegas = omega_grid;
  rep.tail_freq.resize(omega_grid.size());
  const double sqrt_n = std::sqrt(static_cast<double>(n_total));
  for (std::size_t g = 0; g < omega_grid.size(); ++g) {
    int hits = 0;
    for (double dev : rep.deviations)
      if (dev >= omega_grid[g] / sqrt_n) ++hits;
    rep.tail_freq[g] = static_cast<double>(hits) / replicas;
  }

  rep.monotone = true;
  for (std::size_t g = 1; g < rep.tail_freq.size(); ++g)
    if (rep.tail_freq[g] > rep.tail_freq[g - 1] + 1e-12) rep.monotone = false;

  // Fit ln freq = a - c * Omega over the positive entries beyond the first
  // grid point. Zero frequencies are stronger than any exponential bound,
  // so they are excluded from the fit rather than counted against it.
  std::vector<double> xs, ys;
  for (std::size_t g = 1; g < rep.tail_freq.size(); ++g)
    if (rep.tail_freq[g] > 0.0) {
      xs.push_back(rep.omegas[g]);
      ys.push_back(std::log(rep.tail_freq[g]));
    }
  if (xs.size() >= 2) {
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      mx += xs[i];
      my += ys[i];
    }
    mx /= xs.size();
    my /= ys.size();
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxx += (xs[i] - mx) * (xs[i] - mx);
      sxy += (xs[i] - mx) * (ys[i] - my);
    }
    rep.c_hat = sxx > 0.0 ? -sxy / sxx : 0.0;
    rep.exponential_decay = rep.c_hat > 0.0;
  } else {
    // nearly everything already at zero frequency: decay is immediate
    rep.c_hat = std::numeric_limits<double>::infinity();
    rep.exponential_decay = true;
  }
  return rep;
}

}  // namespace dyn
}  // namespace wlab
