#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <vector>

namespace adjointlab {

/// Counter-based deterministic random source. Draws depend only on
/// (seed, counter), so streams are reproducible across platforms and safe to
/// evaluate in any order.
class CounterRng {
 public:
  explicit CounterRng(uint64_t seed) : seed_(seed) {}

  /// Uniform in (0, 1].
  double uniform(uint64_t counter) const;

  /// Standard normal via Box-Muller on counters (2c, 2c+1).
  double normal(uint64_t counter) const;

  Eigen::VectorXd normal_vector(uint64_t counter_base, Eigen::Index n) const;

 private:
  uint64_t seed_;
};

uint64_t splitmix64(uint64_t x);

/// Digamma function for positive arguments (recurrence + asymptotic series).
double digamma(double x);

/// Least-squares slope of log(y) against log(x). Points with y below
/// `floor` are discarded; returns NaN when fewer than two points remain.
double fit_loglog_slope(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double floor = 0.0);

/// Runs fn(0..n-1) on up to `threads` workers. Deterministic work
/// partitioning; with threads <= 1 the loop is serial.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

/// Thread-count resolution: explicit value > 0 wins, else the
/// ADJOINTLAB_THREADS environment variable, else hardware concurrency.
int resolve_threads(int requested);

}  // namespace adjointlab
