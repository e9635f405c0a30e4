#pragma once

// Shared primitives: error types, Gauss-Legendre rules, deterministic parallel loops.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace mtf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the admissible domain (parametric coordinate, parameter range).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Surface point where the tangent vectors are (numerically) linearly dependent.
class SingularGeometryError : public Error {
 public:
  using Error::Error;
};

/// Constitutive input that is not a valid state (non-SPD metric, non-positive stretch).
class InvalidStateError : public Error {
 public:
  using Error::Error;
};

/// Requested feature outside what the implementation supports.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Nonlinear or linear solve that failed to converge or factorize.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// Scenario configuration rejected by validation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Gauss-Legendre rule on [-1, 1].
struct QuadratureRule {
  std::vector<double> points;
  std::vector<double> weights;
};

/// Gauss-Legendre rule with @p n points, computed by Newton iteration on P_n.
inline QuadratureRule gauss_legendre(int n) {
  if (n < 1) throw DomainError("gauss_legendre: need at least one point");
  QuadratureRule rule;
  rule.points.assign(n, 0.0);
  rule.weights.assign(n, 2.0);
  if (n == 1) return rule;
  // P_n(x) and P_n'(x) by the three-term recurrence
  const auto legendre = [n](double x) {
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = pk;
    }
    return std::pair{p1, n * (x * p1 - p0) / (x * x - 1.0)};
  };
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      const auto [p, dp] = legendre(x);
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double dp = legendre(x).second;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.points[i] = -x;
    rule.points[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.points[n / 2] = 0.0;
  return rule;
}

/// Number of worker threads: MTF_THREADS if set, otherwise hardware concurrency (capped at 8).
inline int thread_count() {
  if (const char* env = std::getenv("MTF_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::clamp(hw == 0 ? 1u : hw, 1u, 8u));
}

/// Runs body(i) for i in [0, n). Work is split across threads; each index is
/// processed exactly once and results must be written to index-owned slots so
/// that reductions done afterwards in index order are thread-count independent.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, int threads = 0) {
  if (threads <= 0) threads = thread_count();
  if (threads == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  const auto workers = static_cast<std::size_t>(std::min<std::size_t>(threads, n));
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace mtf
