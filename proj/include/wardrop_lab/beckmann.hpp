#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "wardrop_lab/core.hpp"
#include "wardrop_lab/network.hpp"

namespace wlab {
namespace beck {

/// Psi(x) = sum_e integral_0^{y_e} tau_e, with y = Theta x. Convex because
/// every tau_e is nondecreasing; its minimizers over the feasible flows are
/// exactly the Wardrop equilibria.
inline double potential(const net::Network& n, const net::RouteSet& rs,
                        const std::vector<double>& x) {
  const std::vector<double> y = net::edge_flows(rs, x);
  double psi = 0.0;
  for (std::size_t e = 0; e < n.edges.size(); ++e)
    psi += n.edges[e].latency.integral(y[e]);
  return psi;
}

inline void require_feasible(const net::Network& n, const net::RouteSet& rs,
                             const std::vector<double>& x,
                             double rel_tol = 1e-9) {
  if (x.size() != rs.size())
    fail(ErrorCode::DimensionMismatch, "flow vector does not match route set");
  for (double v : x)
    if (!(v >= -rel_tol))
      fail(ErrorCode::InfeasibleFlow, "negative route flow");
  for (std::size_t w = 0; w < n.od_pairs.size(); ++w) {
    double s = 0.0;
    for (std::size_t p : rs.by_od[w]) s += x[p];
    const double d = n.od_pairs[w].demand;
    if (std::abs(s - d) > rel_tol * std::max(1.0, d))
      fail(ErrorCode::InfeasibleFlow,
           "OD " + std::to_string(w) + " carries " + std::to_string(s) +
               " instead of " + std::to_string(d));
  }
}

/// Flow-weighted excess cost sum_w sum_p x_p (G_p - min_q G_q). Zero exactly
/// at Wardrop equilibria of the enumerated route set: every used route is a
/// cheapest one. Equals the conditional-gradient duality gap <G, x - s>.
inline double wardrop_gap(const net::Network& n, const net::RouteSet& rs,
                          const std::vector<double>& x) {
  require_feasible(n, rs, x);
  const std::vector<double> g = net::route_costs(n, rs, x);
  double gap = 0.0;
  for (std::size_t w = 0; w < n.od_pairs.size(); ++w) {
    if (rs.by_od[w].empty()) continue;
    double mn = g[rs.by_od[w].front()];
    for (std::size_t p : rs.by_od[w]) mn = std::min(mn, g[p]);
    for (std::size_t p : rs.by_od[w]) gap += x[p] * (g[p] - mn);
  }
  return gap;
}

struct EquilibriumResult {
  std::vector<double> x;
  std::vector<double> y;
  double psi = 0.0;
  double gap = 0.0;
  int iterations = 0;
};

enum class StepRule { ExactLineSearch, Harmonic };

struct SolveOptions {
  double tol = 1e-8;
  int max_iter = 200000;
  StepRule step = StepRule::ExactLineSearch;
  std::vector<double> start;  // empty: all-or-nothing at free flow
};

namespace detail {

/// Cheapest route per OD gets the whole demand; ties go to the lowest
/// route id so the solver is deterministic.
inline std::vector<double> all_or_nothing(const net::Network& n,
                                          const net::RouteSet& rs,
                                          const std::vector<double>& g) {
  std::vector<double> s(rs.size(), 0.0);
  for (std::size_t w = 0; w < n.od_pairs.size(); ++w) {
    if (rs.by_od[w].empty()) continue;
    std::size_t best = rs.by_od[w].front();
    for (std::size_t p : rs.by_od[w])
      if (g[p] < g[best]) best = p;
    s[best] = n.od_pairs[w].demand;
  }
  return s;
}

/// Exact line search on the 1-D restriction of Psi: the derivative
/// phi'(g) = sum_e dy_e * tau_e(y_e + g dy_e) is nondecreasing, so bisect.
inline double line_search(const net::Network& n, const std::vector<double>& y,
                          const std::vector<double>& dy) {
  auto deriv = [&](double g) {
    double d = 0.0;
    for (std::size_t e = 0; e < dy.size(); ++e)
      if (dy[e] != 0.0) d += dy[e] * n.edges[e].latency(y[e] + g * dy[e]);
    return d;
  };
  if (deriv(1.0) <= 0.0) return 1.0;
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 100 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    (deriv(mid) <= 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Conditional-gradient (Frank-Wolfe) minimization of the potential over
/// the route-flow polytope. Deterministic; stops when the Wardrop gap,
/// which is also the duality gap of the iteration, falls to `tol`.
inline EquilibriumResult solve_equilibrium(const net::Network& n,
                                           const net::RouteSet& rs,
                                           const SolveOptions& opt) {
  if (!(opt.tol > 0.0)) fail(ErrorCode::DomainError, "tol must be positive");
  if (opt.max_iter < 1)
    fail(ErrorCode::DomainError, "max_iter must be >= 1");
  std::vector<double> x;
  if (opt.start.empty()) {
    std::vector<double> free_flow(rs.size(), 0.0);
    x = detail::all_or_nothing(n, rs, net::route_costs(n, rs, free_flow));
  } else {
    require_feasible(n, rs, opt.start);
    x = opt.start;
  }

  for (int iter = 0; iter <= opt.max_iter; ++iter) {
    const std::vector<double> y = net::edge_flows(rs, x);
    const std::vector<double> tau = net::edge_latencies(n, y);
    std::vector<double> g(rs.size(), 0.0);
    for (std::size_t p = 0; p < rs.size(); ++p)
      for (std::size_t e : rs.edge_idx[p]) g[p] += tau[e];

    const std::vector<double> s = detail::all_or_nothing(n, rs, g);
    double gap = 0.0;
    for (std::size_t p = 0; p < rs.size(); ++p) gap += g[p] * (x[p] - s[p]);
    gap = std::max(gap, 0.0);  // clip the -1e-17 noise at equilibrium

    if (gap <= opt.tol) {
      EquilibriumResult res;
      res.x = x;
      res.y = y;
      res.psi = potential(n, rs, x);
      res.gap = gap;
      res.iterations = iter;
      return res;
    }
    if (iter == opt.max_iter) break;

    std::vector<double> dy(y.size(), 0.0);
    for (std::size_t p = 0; p < rs.size(); ++p) {
      const double dx = s[p] - x[p];
      if (dx == 0.0) continue;
      for (std::size_t e : rs.edge_idx[p]) dy[e] += dx;
    }
    const double step = opt.step == StepRule::ExactLineSearch
                            ? detail::line_search(n, y, dy)
                            : 2.0 / (iter + 2.0);
    for (std::size_t p = 0; p < rs.size(); ++p)
      x[p] += step * (s[p] - x[p]);
  }
  fail(ErrorCode::NonConvergence,
       "equilibrium gap above " + std::to_string(opt.tol) + " after " +
           std::to_string(opt.max_iter) + " iterations");
}

inline EquilibriumResult solve_equilibrium(const net::Network& n,
                                           const net::RouteSet& rs,
                                           double tol = 1e-8,
                                           int max_iter = 200000) {
  SolveOptions opt;
  opt.tol = tol;
  opt.max_iter = max_iter;
  return solve_equilibrium(n, rs, opt);
}

/// min sum_w sum_{p in P_w} (x_p ln(x_p / |P_w|) - x_p)  over  x in X,
/// Theta x = y*. Strictly convex, so the solution is the canonical path
/// decomposition of an edge-flow vector. Solved by cyclic dual ascent
/// (iterative proportional fitting) in log space; the optimal form is
/// x_p = |P_w| mu_w prod_{e in p} nu_e.
inline std::vector<double> entropy_path_projection(
    const net::Network& n, const net::RouteSet& rs,
    const std::vector<double>& y_star, double tol = 1e-10,
    int max_sweeps = 50000) {
  if (y_star.size() != n.edges.size())
    fail(ErrorCode::DimensionMismatch, "y* does not match the edge list");
  for (double v : y_star)
    if (!(v >= 0.0))
      fail(ErrorCode::DomainError, "y* must be nonnegative");

  const double y_scale =
      y_star.empty() ? 0.0
                     : *std::max_element(y_star.begin(), y_star.end());
  const double zero_tol = 1e-12 * (1.0 + y_scale);

  // Routes through an unused edge carry no flow in any decomposition of y*.
  std::vector<bool> active(rs.size(), true);
  for (std::size_t p = 0; p < rs.size(); ++p)
    for (std::size_t e : rs.edge_idx[p])
      if (y_star[e] <= zero_tol) active[p] = false;

  // Feasibility: minimize ||Theta x - y*||^2 / 2 over X by conditional
  // gradient. Its duality gap gives a lower bound on the optimum, so
  // genuinely unattainable targets are certified, not guessed.
  {
    std::vector<double> x(rs.size(), 0.0);
    for (std::size_t w = 0; w < n.od_pairs.size(); ++w)
      for (std::size_t p : rs.by_od[w])
        x[p] = n.od_pairs[w].demand / static_cast<double>(rs.by_od[w].size());
    const double eps = 1e-7 * (1.0 + y_scale);
    bool attained = false;
    for (int iter = 0; iter < 20000; ++iter) {
      std::vector<double> r = net::edge_flows(rs, x);
      double rmax = 0.0;
      for (std::size_t e = 0; e < r.size(); ++e) {
        r[e] -= y_star[e];
        rmax = std::max(rmax, std::abs(r[e]));
      }
      if (rmax <= eps) {
        attained = true;
        break;
      }
      double f = 0.0;
      for (double v : r) f += 0.5 * v * v;
      std::vector<double> grad(rs.size(), 0.0);
      for (std::size_t p = 0; p < rs.size(); ++p)
        for (std::size_t e : rs.edge_idx[p]) grad[p] += r[e];
      const std::vector<double> s = detail::all_or_nothing(n, rs, grad);
      double fw_gap = 0.0;
      for (std::size_t p = 0; p < rs.size(); ++p)
        fw_gap += grad[p] * (x[p] - s[p]);
      if (f - fw_gap > 0.5 * eps * eps)
        fail(ErrorCode::Unattainable,
             "no feasible path decomposition reaches the target edge flows");
      // exact step for the quadratic restriction
      std::vector<double> dy(r.size(), 0.0);
      for (std::size_t p = 0; p < rs.size(); ++p) {
        const double dx = s[p] - x[p];
        if (dx == 0.0) continue;
        for (std::size_t e : rs.edge_idx[p]) dy[e] += dx;
      }
      double num = 0.0, den = 0.0;
      for (std::size_t e = 0; e < dy.size(); ++e) {
        num -= dy[e] * r[e];
        den += dy[e] * dy[e];
      }
      const double step = den > 0.0 ? std::clamp(num / den, 0.0, 1.0) : 0.0;
      for (std::size_t p = 0; p < rs.size(); ++p)
        x[p] += step * (s[p] - x[p]);
    }
    if (!attained)
      fail(ErrorCode::NonConvergence,
           "feasibility check for the projection target did not settle");
  }

  // log x_p = ln|P_w| + lmu_w + sum_{e in p} lnu_e, maintained incrementally
  std::vector<double> lnu(n.edges.size(), 0.0);
  std::vector<double> logx(rs.size());
  const double neg_inf = -std::numeric_limits<double>::infinity();
  for (std::size_t w = 0; w < n.od_pairs.size(); ++w) {
    const double logcnt = std::log(static_cast<double>(rs.by_od[w].size()));
    for (std::size_t p : rs.by_od[w]) logx[p] = active[p] ? logcnt : neg_inf;
  }

  std::vector<std::vector<std::size_t>> routes_by_edge(n.edges.size());
  for (std::size_t p = 0; p < rs.size(); ++p)
    if (active[p])
      for (std::size_t e : rs.edge_idx[p]) routes_by_edge[e].push_back(p);

  auto x_from_log = [&]() {
    std::vector<double> x(rs.size());
    for (std::size_t p = 0; p < rs.size(); ++p) x[p] = std::exp(logx[p]);
    return x;
  };

  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    // demand constraints: shift each OD's block to sum to d_w
    for (std::size_t w = 0; w < n.od_pairs.size(); ++w) {
      std::vector<double> terms;
      for (std::size_t p : rs.by_od[w])
        if (active[p]) terms.push_back(logx[p]);
      if (terms.empty()) continue;
      const double d = n.od_pairs[w].demand;
      const double shift =
          (d > 0.0 ? std::log(d) : neg_inf) - logsumexp(terms);
      for (std::size_t p : rs.by_od[w])
        if (active[p]) logx[p] += shift;
    }
    // edge constraints: rescale routes through e so y_e matches y*_e
    for (std::size_t e = 0; e < n.edges.size(); ++e) {
      if (routes_by_edge[e].empty() || y_star[e] <= zero_tol) continue;
      std::vector<double> terms;
      for (std::size_t p : routes_by_edge[e]) terms.push_back(logx[p]);
      const double shift = std::log(y_star[e]) - logsumexp(terms);
      lnu[e] += shift;
      for (std::size_t p : routes_by_edge[e]) logx[p] += shift;
    }

    // both constraint families, relative residual
    const std::vector<double> x = x_from_log();
    const std::vector<double> y = net::edge_flows(rs, x);
    double res = 0.0;
    for (std::size_t w = 0; w < n.od_pairs.size(); ++w) {
      double s = 0.0;
      for (std::size_t p : rs.by_od[w]) s += x[p];
      const double d = n.od_pairs[w].demand;
      res = std::max(res, std::abs(s - d) / std::max(1.0, d));
    }
    for (std::size_t e = 0; e < n.edges.size(); ++e)
      res = std::max(res,
                     std::abs(y[e] - y_star[e]) / std::max(1.0, y_star[e]));
    if (res <= tol) return x;
  }
  fail(ErrorCode::NonConvergence,
       "entropy projection did not reach tolerance");
}

/// Four nodes in series with parallel first and last legs and every
/// latency tau(y) = y. The equilibrium edge flows are unique, but they
/// decompose into a whole segment of route flows
///   x(s) = (s, 1/2 - s, 1/2 - s, s),  s in [0, 1/2],
/// all with identical potential and zero gap: the equilibrium itself is
/// nonunique in route space.
struct NonuniquenessInstance {
  net::Network network;
  net::RouteSet routes;
  double s_min = 0.0;
  double s_max = 0.5;

  std::vector<double> segment_point(double s) const {
    if (!(s >= s_min && s <= s_max))
      fail(ErrorCode::BadArgument, "segment parameter outside [0, 0.5]");
    return {s, 0.5 - s, 0.5 - s, s};
  }
};

inline NonuniquenessInstance build_nonuniqueness_instance() {
  NonuniquenessInstance inst;
  inst.network.nodes = {1, 2, 3, 4};
  const net::LatencyFn unit{0.0, 1.0, 1.0};
  inst.network.edges = {{1, 1, 2, unit},
                        {2, 1, 2, unit},
                        {3, 2, 3, unit},
                        {4, 3, 4, unit},
                        {5, 3, 4, unit}};
  inst.network.od_pairs = {{1, 4, 1.0}};
  inst.routes = net::enumerate_routes(inst.network);
  return inst;
}

}  // namespace beck
}  // namespace wlab
