#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace wlab {

enum class ErrorCode {
  ParseError,
  InfeasibleMarginals,
  NonConvergence,
  StateSpaceTooLarge,
  NoRouteForOD,
  RouteExplosion,
  DimensionMismatch,
  InfeasibleFlow,
  Unattainable,
  DomainError,
  BadArgument,
};

/// Library-wide error: carries a code so callers (and the CLI) can map
/// failures to exit statuses without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

/// Dense row-major grid. Everything here is desk scale, so no sparse
/// machinery anywhere in the library.
template <typename T>
class Table {
 public:
  Table() : rows_(0), cols_(0) {}
  Table(std::size_t rows, std::size_t cols, T fill = T())
      : rows_(rows), cols_(cols), v_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return v_.size(); }

  T& operator()(std::size_t i, std::size_t j) { return v_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const {
    return v_[i * cols_ + j];
  }

  std::vector<T>& data() { return v_; }
  const std::vector<T>& data() const { return v_; }

  bool operator==(const Table& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && v_ == o.v_;
  }

 private:
  std::size_t rows_, cols_;
  std::vector<T> v_;
};

using Matrix = Table<double>;
using CountTable = Table<long long>;

inline double logsumexp(const std::vector<double>& xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;  // all -inf
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

/// SplitMix64; used to derive independent per-replica seeds from one
/// user-facing seed so replica results do not depend on scheduling.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Worker cap for replica-parallel sections: WARDROP_LAB_THREADS if set,
/// otherwise hardware concurrency.
inline unsigned max_workers() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("WARDROP_LAB_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) hw = static_cast<unsigned>(std::min<long>(v, 512));
  }
  return hw;
}

/// Runs fn(i) for i in [0, count); fn must write only into slot i of its
/// output. Results are identical for any worker count.
template <typename Fn>
void parallel_for_index(std::size_t count, Fn&& fn) {
  unsigned workers = std::min<std::size_t>(max_workers(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= count || failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!first_error) first_error = std::current_exception();
          failed.store(true);
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace wlab
