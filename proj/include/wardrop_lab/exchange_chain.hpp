#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "wardrop_lab/core.hpp"

namespace wlab {
namespace chain {

/// Integer occupancy matrix: counts(i,j) residents living in zone i and
/// working in zone j. Row sums (L) and column sums (W) are conserved by
/// every exchange move.
struct ChainState {
  CountTable counts;
  long long time = 0;
};

struct ChainConfig {
  double base_rate = 1.0;  // p^L, only rescales time
  Matrix cost;             // c
  std::uint64_t seed = 0;
  long long steps = 0;
};

/// One apartment exchange: a resident of cell (k,m) and a resident of cell
/// (p,q) swap homes, moving the pair of cells to (p,m) and (k,q).
struct ExchangeMove {
  std::size_t k, m, p, q;
  double rate;  // counts(k,m) * counts(p,q) * p^L * exp(before - after)
};

inline void apply_move(CountTable& counts, const ExchangeMove& mv) {
  counts(mv.k, mv.m) -= 1;
  counts(mv.p, mv.q) -= 1;
  counts(mv.p, mv.m) += 1;
  counts(mv.k, mv.q) += 1;
}

/// All exchange moves with positive rate from `counts`. Pairs of cells are
/// enumerated unordered; same-row or same-column pairs leave the state
/// unchanged and are skipped (they contribute only self-loop mass).
inline std::vector<ExchangeMove> list_moves(const CountTable& counts,
                                            const Matrix& cost,
                                            double base_rate) {
  const std::size_t n = counts.rows();
  std::vector<ExchangeMove> moves;
  for (std::size_t a = 0; a < n * n; ++a) {
    const std::size_t k = a / n, m = a % n;
    if (counts(k, m) == 0) continue;
    for (std::size_t b = a + 1; b < n * n; ++b) {
      const std::size_t p = b / n, q = b % n;
      if (p == k || q == m) continue;
      if (counts(p, q) == 0) continue;
      const double before = cost(k, m) + cost(p, q);
      const double after = cost(p, m) + cost(k, q);
      const double mult =
          static_cast<double>(counts(k, m)) * static_cast<double>(counts(p, q));
      moves.push_back({k, m, p, q, mult * base_rate * std::exp(before - after)});
    }
  }
  return moves;
}

/// Uniformization constant R >= total exit rate of every state, so the
/// discrete chain with self-loops has the same stationary law as the
/// continuous-time process.
inline double uniformization_bound(long long population, const Matrix& cost,
                                   double base_rate) {
  double cmax = 0.0;
  for (double v : cost.data()) cmax = std::max(cmax, v);
  const double n = static_cast<double>(population);
  return base_rate * n * n * std::exp(4.0 * cmax);
}

#ifndef NDEBUG
namespace detail {
inline bool margins_hold(const CountTable& c, const std::vector<long long>& l,
                         const std::vector<long long>& w) {
  for (std::size_t i = 0; i < c.rows(); ++i) {
    long long s = 0;
    for (std::size_t j = 0; j < c.cols(); ++j) s += c(i, j);
    if (s != l[i]) return false;
  }
  for (std::size_t j = 0; j < c.cols(); ++j) {
    long long s = 0;
    for (std::size_t i = 0; i < c.rows(); ++i) s += c(i, j);
    if (s != w[j]) return false;
  }
  return true;
}
}  // namespace detail
#endif

/// One uniformized transition. Self-loops are normal; they carry the
/// probability mass the continuous-time chain spends waiting.
inline void step(ChainState& s, const ChainConfig& cfg, std::mt19937_64& rng) {
  long long pop = 0;
  for (long long v : s.counts.data()) pop += v;
  const double bound = uniformization_bound(pop, cfg.cost, cfg.base_rate);
  const auto moves = list_moves(s.counts, cfg.cost, cfg.base_rate);
  double total = 0.0;
  for (const auto& mv : moves) total += mv.rate;
  assert(total <= bound * (1.0 + 1e-9));

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = unif(rng) * bound;
  if (u < total) {
    double acc = 0.0;
    for (const auto& mv : moves) {
      acc += mv.rate;
      if (u < acc) {
        apply_move(s.counts, mv);
        break;
      }
    }
  }
  s.time += 1;
}

template <typename OnStep>
void run_chain(ChainState& s, const ChainConfig& cfg, OnStep&& on_step) {
  std::mt19937_64 rng(cfg.seed);
#ifndef NDEBUG
  std::vector<long long> l(s.counts.rows(), 0), w(s.counts.cols(), 0);
  for (std::size_t i = 0; i < s.counts.rows(); ++i)
    for (std::size_t j = 0; j < s.counts.cols(); ++j) {
      l[i] += s.counts(i, j);
      w[j] += s.counts(i, j);
    }
#endif
  for (long long t = 0; t < cfg.steps; ++t) {
    step(s, cfg, rng);
    assert(detail::margins_hold(s.counts, l, w));
    on_step(s);
  }
}

/// log of the unnormalized stationary mass: prod exp(-2 c x) / x!
inline double gibbs_log_mass(const CountTable& counts, const Matrix& cost) {
  double s = 0.0;
  for (std::size_t i = 0; i < counts.rows(); ++i)
    for (std::size_t j = 0; j < counts.cols(); ++j) {
      const double x = static_cast<double>(counts(i, j));
      s += -2.0 * cost(i, j) * x - std::lgamma(x + 1.0);
    }
  return s;
}

inline double gibbs_mass(const CountTable& counts, const Matrix& cost) {
  return std::exp(gibbs_log_mass(counts, cost));
}

/// Northwest-corner fill: a deterministic feasible start for any integer
/// marginals.
inline CountTable initial_state(const std::vector<long long>& residents,
                                const std::vector<long long>& workers) {
  const std::size_t n = residents.size();
  CountTable counts(n, workers.size(), 0);
  std::vector<long long> rowleft = residents, colleft = workers;
  std::size_t i = 0, j = 0;
  while (i < n && j < workers.size()) {
    const long long v = std::min(rowleft[i], colleft[j]);
    counts(i, j) = v;
    rowleft[i] -= v;
    colleft[j] -= v;
    if (rowleft[i] == 0) ++i;
    if (j < workers.size() && colleft[j] == 0) ++j;
  }
  return counts;
}

/// All lattice points of the transportation polytope, by recursive row
/// filling with column-remainder pruning. Throws StateSpaceTooLarge past
/// `cap` states.
inline std::vector<CountTable> enumerate_feasible(
    const std::vector<long long>& residents,
    const std::vector<long long>& workers, std::size_t cap = 100000) {
  const std::size_t n = residents.size(), w = workers.size();
  std::vector<CountTable> out;
  CountTable cur(n, w, 0);
  std::vector<long long> colleft = workers;

  // fills row i from column j with `left` still to place in this row
  auto rec = [&](auto&& self, std::size_t i, std::size_t j,
                 long long left) -> void {
    if (i == n) {
      out.push_back(cur);
      if (out.size() > cap)
        fail(ErrorCode::StateSpaceTooLarge,
             "transportation polytope exceeds " + std::to_string(cap) +
                 " lattice points");
      return;
    }
    if (j == w) {
      if (left == 0) self(self, i + 1, 0, i + 1 < n ? residents[i + 1] : 0);
      return;
    }
    if (j + 1 == w) {
      // last column is forced
      if (left <= colleft[j]) {
        cur(i, j) = left;
        colleft[j] -= left;
        self(self, i, j + 1, 0);
        colleft[j] += left;
        cur(i, j) = 0;
      }
      return;
    }
    const long long hi = std::min(left, colleft[j]);
    for (long long v = 0; v <= hi; ++v) {
      cur(i, j) = v;
      colleft[j] -= v;
      self(self, i, j + 1, left - v);
      colleft[j] += v;
      cur(i, j) = 0;
    }
  };
  rec(rec, 0, 0, n > 0 ? residents[0] : 0);
  return out;
}

struct StationaryTable {
  std::vector<CountTable> states;
  std::vector<double> probability;

  std::size_t index_of(const CountTable& counts) const {
    for (std::size_t i = 0; i < states.size(); ++i)
      if (states[i] == counts) return i;
    fail(ErrorCode::DomainError, "state not in enumerated polytope");
  }
};

/// Exact stationary distribution by brute-force normalization of the Gibbs
/// mass over the whole polytope. This is the oracle the simulated chain is
/// checked against.
inline StationaryTable enumerate_stationary(
    const std::vector<long long>& residents,
    const std::vector<long long>& workers, const Matrix& cost,
    std::size_t cap = 100000) {
  StationaryTable tab;
  tab.states = enumerate_feasible(residents, workers, cap);
  std::vector<double> logmass(tab.states.size());
  for (std::size_t i = 0; i < tab.states.size(); ++i)
    logmass[i] = gibbs_log_mass(tab.states[i], cost);
  const double lz = logsumexp(logmass);
  tab.probability.resize(tab.states.size());
  for (std::size_t i = 0; i < tab.states.size(); ++i)
    tab.probability[i] = std::exp(logmass[i] - lz);
  return tab;
}

/// Max over all feasible transitions of |pi(x) r(x->x') / (pi(x') r(x'->x)) - 1|.
/// Zero-rate transitions have zero flow both ways and are skipped.
inline double check_detailed_balance(const std::vector<long long>& residents,
                                     const std::vector<long long>& workers,
                                     const Matrix& cost, double base_rate = 1.0,
                                     std::size_t cap = 100000) {
  const auto states = enumerate_feasible(residents, workers, cap);
  double worst = 0.0;
  for (const auto& x : states) {
    const double log_px = gibbs_log_mass(x, cost);
    for (const auto& mv : list_moves(x, cost, base_rate)) {
      CountTable y = x;
      apply_move(y, mv);
      // reverse move swaps the same residents back: cells (p,m),(k,q)
      const double rev_mult = static_cast<double>(y(mv.p, mv.m)) *
                              static_cast<double>(y(mv.k, mv.q));
      const double rev_rate =
          rev_mult * base_rate *
          std::exp((cost(mv.p, mv.m) + cost(mv.k, mv.q)) -
                   (cost(mv.k, mv.m) + cost(mv.p, mv.q)));
      const double lhs = log_px + std::log(mv.rate);
      const double rhs = gibbs_log_mass(y, cost) + std::log(rev_rate);
      worst = std::max(worst, std::abs(std::expm1(lhs - rhs)));
    }
  }
  return worst;
}

/// Smooth (Stirling) log mass -sum x ln x - 2 sum c x. This is the object
/// whose second derivative -1/x drives the concentration bound; the
/// factorial mass differs from it by O(ln x) terms that the bound does not
/// absorb.
inline double smooth_log_mass(const Matrix& x, const Matrix& cost) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) {
      const double v = x(i, j);
      if (v > 0.0) s -= v * std::log(v);
      s -= 2.0 * cost(i, j) * v;
    }
  return s;
}

/// sum (x - x*)^2 / (2 max{x, x*}); the exponent in the concentration
/// inequality p(x) <= exp(-M) p(x*).
inline double concentration_functional(const Matrix& x, const Matrix& x_star) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) {
      const double d = x(i, j) - x_star(i, j);
      if (d != 0.0) s += d * d / (2.0 * std::max(x(i, j), x_star(i, j)));
    }
  return s;
}

struct ConcentrationReport {
  double zone_scale = 0.0;  // m, with L_i, W_j ~ m
  Matrix x_star;            // L_i W_j / N
  std::vector<double> lambdas;
  std::vector<double> coverage;      // empirical, per lambda
  double witness_lambda = 0.0;       // smallest grid lambda with coverage >= 0.999
  bool witness_found = false;
  bool deterministic_checked = false;
  std::size_t deterministic_states = 0;
  double deterministic_violation = 0.0;  // max of ln p(x) + M(x) - ln p(x*)
};

/// Long-run frequency of the event  max_ij |x_ij/x*_ij - 1| <= lambda/sqrt(m)
/// for each lambda in the grid, plus the exact inequality check over the
/// whole polytope when it is enumerable. Requires constant costs, the
/// regime of the concentration claim.
inline ConcentrationReport concentration_report(
    const ChainConfig& cfg, const std::vector<long long>& residents,
    const std::vector<long long>& workers, std::vector<double> lambda_grid,
    std::size_t enumeration_cap = 100000) {
  const std::size_t n = residents.size();
  double cmin = cfg.cost.data()[0], cmax = cmin;
  for (double v : cfg.cost.data()) {
    cmin = std::min(cmin, v);
    cmax = std::max(cmax, v);
  }
  if (cmax - cmin > 1e-12 * (1.0 + std::abs(cmax)))
    fail(ErrorCode::DomainError,
         "concentration_report requires a constant cost matrix");

  long long pop = 0;
  for (long long v : residents) pop += v;
  ConcentrationReport rep;
  rep.zone_scale = static_cast<double>(pop) / static_cast<double>(n);
  rep.x_star = Matrix(n, workers.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < workers.size(); ++j)
      rep.x_star(i, j) = static_cast<double>(residents[i]) *
                         static_cast<double>(workers[j]) /
                         static_cast<double>(pop);

  std::sort(lambda_grid.begin(), lambda_grid.end());
  rep.lambdas = lambda_grid;
  rep.coverage.assign(lambda_grid.size(), 0.0);

  ChainState s{initial_state(residents, workers), 0};
  const long long burn_in = cfg.steps / 2;
  const double sqrt_m = std::sqrt(rep.zone_scale);
  std::vector<long long> hits(lambda_grid.size(), 0);
  long long observed = 0;
  run_chain(s, cfg, [&](const ChainState& st) {
    if (st.time <= burn_in) return;
    ++observed;
    double dev = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < workers.size(); ++j)
        dev = std::max(dev, std::abs(static_cast<double>(st.counts(i, j)) /
                                         rep.x_star(i, j) -
                                     1.0));
    for (std::size_t g = 0; g < lambda_grid.size(); ++g)
      if (dev <= lambda_grid[g] / sqrt_m) ++hits[g];
  });
  for (std::size_t g = 0; g < lambda_grid.size(); ++g) {
    rep.coverage[g] =
        observed > 0 ? static_cast<double>(hits[g]) / observed : 0.0;
    if (!rep.witness_found && rep.coverage[g] >= 0.999) {
      rep.witness_found = true;
      rep.witness_lambda = lambda_grid[g];
    }
  }

  try {
    const auto states = enumerate_feasible(residents, workers, enumeration_cap);
    const double log_p_star = smooth_log_mass(rep.x_star, cfg.cost);
    Matrix xd(n, workers.size());
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& st : states) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < workers.size(); ++j)
          xd(i, j) = static_cast<double>(st(i, j));
      const double lhs = smooth_log_mass(xd, cfg.cost) +
                         concentration_functional(xd, rep.x_star);
      worst = std::max(worst, lhs - log_p_star);
    }
    rep.deterministic_checked = true;
    rep.deterministic_states = states.size();
    rep.deterministic_violation = worst;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::StateSpaceTooLarge) throw;
    rep.deterministic_checked = false;
  }
  return rep;
}

}  // namespace chain
}  // namespace wlab
