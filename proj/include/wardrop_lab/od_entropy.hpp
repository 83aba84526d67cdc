#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "wardrop_lab/core.hpp"

namespace wlab {
namespace od {

/// Zone marginals and the inter-zone generalized distance matrix.
/// residents[i] = people living in zone i, workers[j] = people working in
/// zone j; both strictly positive, and the totals must agree.
struct ZoneData {
  std::vector<double> residents;  // L
  std::vector<double> workers;    // W
  Matrix cost;                    // c, nonnegative

  std::size_t size() const { return residents.size(); }

  double total() const {
    double n = 0.0;
    for (double v : residents) n += v;
    return n;
  }

  void validate() const {
    const std::size_t n = size();
    if (n == 0 || workers.size() != n || cost.rows() != n || cost.cols() != n)
      fail(ErrorCode::DimensionMismatch, "zone data dimensions disagree");
    double sl = 0.0, sw = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!(residents[i] > 0.0))
        fail(ErrorCode::DomainError, "residents must be positive in every zone");
      if (!(workers[i] > 0.0))
        fail(ErrorCode::DomainError, "workers must be positive in every zone");
      sl += residents[i];
      sw += workers[i];
    }
    for (double v : cost.data())
      if (!(v >= 0.0)) fail(ErrorCode::DomainError, "costs must be nonnegative");
    if (std::abs(sl - sw) > 1e-12 * std::max(sl, sw))
      fail(ErrorCode::InfeasibleMarginals,
           "total residents " + std::to_string(sl) + " != total workers " +
               std::to_string(sw));
  }
};

/// Balanced trip matrix with its dual variables. flows(i,j) =
/// exp(-1 - dual_row[i] - dual_col[j] - 2 cost(i,j)) at convergence.
struct BalanceResult {
  Matrix flows;                  // X
  std::vector<double> dual_row;  // lambda^L
  std::vector<double> dual_col;  // lambda^W
  double residual = 0.0;         // max relative marginal violation
  int iterations = 0;
};

// Entropy plus linear transport cost: sum x ln x + 2 sum c x, with
// 0 ln 0 := 0 so boundary points evaluate cleanly.
inline double entropy_objective(const Matrix& x, const Matrix& cost) {
  if (x.rows() != cost.rows() || x.cols() != cost.cols())
    fail(ErrorCode::DimensionMismatch, "entropy_objective: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) {
      double v = x(i, j);
      if (v > 0.0) s += v * std::log(v);
      s += 2.0 * cost(i, j) * v;
    }
  return s;
}

namespace detail {

inline Matrix flows_from_duals(const ZoneData& z, const std::vector<double>& lr,
                               const std::vector<double>& lc) {
  const std::size_t n = z.size();
  Matrix x(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      x(i, j) = std::exp(-1.0 - lr[i] - lc[j] - 2.0 * z.cost(i, j));
  return x;
}

inline double marginal_residual(const ZoneData& z, const Matrix& x) {
  const std::size_t n = z.size();
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += x(i, j);
    worst = std::max(worst, std::abs(row - z.residents[i]) / z.residents[i]);
  }
  for (std::size_t j = 0; j < n; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < n; ++i) col += x(i, j);
    worst = std::max(worst, std::abs(col - z.workers[j]) / z.workers[j]);
  }
  return worst;
}

}  // namespace detail

/// Alternating row/column scaling against the kernel exp(-1-2c), kept in
/// log domain: exp(-2c) underflows already for c around 350, the duals do
/// not. Stops when the max relative marginal violation drops to tol.
inline BalanceResult balance(const ZoneData& z, double tol, int max_iter) {
  z.validate();
  if (!(tol > 0.0)) fail(ErrorCode::DomainError, "balance: tol must be positive");
  if (max_iter < 1) fail(ErrorCode::DomainError, "balance: max_iter must be >= 1");
  const std::size_t n = z.size();

  std::vector<double> lr(n, 0.0), lc(n, 0.0), terms(n);
  BalanceResult r;
  for (int it = 1; it <= max_iter; ++it) {
    // rows: make sum_j x_ij == L_i exactly for current lc
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j)
        terms[j] = -1.0 - lc[j] - 2.0 * z.cost(i, j);
      lr[i] = logsumexp(terms) - std::log(z.residents[i]);
    }
    // columns: make sum_i x_ij == W_j exactly for current lr
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < n; ++i)
        terms[i] = -1.0 - lr[i] - 2.0 * z.cost(i, j);
      lc[j] = logsumexp(terms) - std::log(z.workers[j]);
    }
    Matrix x = detail::flows_from_duals(z, lr, lc);
    double res = detail::marginal_residual(z, x);
    if (res <= tol) {
      r.flows = std::move(x);
      r.dual_row = std::move(lr);
      r.dual_col = std::move(lc);
      r.residual = res;
      r.iterations = it;
      return r;
    }
    if (it == max_iter)
      fail(ErrorCode::NonConvergence,
           "balance: " + std::to_string(max_iter) +
               " sweeps exhausted, residual " + std::to_string(res));
  }
  fail(ErrorCode::NonConvergence, "balance: unreachable");
}

/// One proportional-fitting pass over an arbitrary nonnegative matrix:
/// rows scaled onto L, then columns onto W. Cheap way to push a perturbed
/// matrix back toward the transportation polytope.
inline Matrix one_balancing_sweep(const ZoneData& z, Matrix x) {
  const std::size_t n = z.size();
  if (x.rows() != n || x.cols() != n)
    fail(ErrorCode::DimensionMismatch, "one_balancing_sweep: shape mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += x(i, j);
    if (row > 0.0)
      for (std::size_t j = 0; j < n; ++j) x(i, j) *= z.residents[i] / row;
  }
  for (std::size_t j = 0; j < n; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < n; ++i) col += x(i, j);
    if (col > 0.0)
      for (std::size_t i = 0; i < n; ++i) x(i, j) *= z.workers[j] / col;
  }
  return x;
}

/// Consistency report for a balanced matrix: how far the flows are from
/// their dual closed form, and how far the marginals are from L and W.
struct PrimalDualReport {
  double max_dual_deviation = 0.0;      // relative, against the closed form
  double max_marginal_violation = 0.0;  // relative, against L and W
  std::size_t worst_row = 0, worst_col = 0;
  bool pass = false;
};

inline PrimalDualReport check_primal_dual(const BalanceResult& r,
                                          const ZoneData& z, double tol) {
  const std::size_t n = z.size();
  PrimalDualReport rep;
  Matrix ref = detail::flows_from_duals(z, r.dual_row, r.dual_col);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double dev = std::abs(r.flows(i, j) - ref(i, j)) /
                   std::max(ref(i, j), 1e-300);
      if (dev > rep.max_dual_deviation) {
        rep.max_dual_deviation = dev;
        rep.worst_row = i;
        rep.worst_col = j;
      }
    }
  rep.max_marginal_violation = detail::marginal_residual(z, r.flows);
  rep.pass = rep.max_dual_deviation <= tol && rep.max_marginal_violation <= tol;
  return rep;
}

}  // namespace od
}  // namespace wlab
