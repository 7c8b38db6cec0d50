#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace demandid {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Bad input: dimension mismatch, violated invariant, malformed config.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An iterative method stopped without meeting its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual, int iterations)
      : std::runtime_error(what + " (residual " + std::to_string(residual) +
                           " after " + std::to_string(iterations) +
                           " iterations)"),
        residual_(residual),
        iterations_(iterations) {}

  double residual() const noexcept { return residual_; }
  int iterations() const noexcept { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

/// Floating-point failure such as share underflow.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw InvalidArgument(msg);
}

inline bool all_finite(const Eigen::Ref<const Mat>& m) {
  return m.allFinite();
}

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double v) noexcept {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// SplitMix64 finalizer; used to derive independent per-unit seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t substream_seed(std::uint64_t seed,
                                       std::uint64_t unit) noexcept {
  return mix64(mix64(seed) ^ mix64(unit + 0x632be59bd9b4e019ULL));
}

// Worker count for block-parallel loops. 0 means hardware concurrency.
void set_thread_count(int n);
int thread_count();

/// Runs f(begin, end) over fixed-size blocks of [0, n). Block boundaries do
/// not depend on the worker count, so per-block results are reproducible.
template <class F>
void parallel_blocks(std::size_t n, std::size_t block, F&& f) {
  if (n == 0) return;
  block = std::max<std::size_t>(block, 1);
  const std::size_t n_blocks = (n + block - 1) / block;
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(thread_count()), n_blocks);
  if (workers <= 1) {
    for (std::size_t b = 0; b < n_blocks; ++b) {
      f(b * block, std::min(n, (b + 1) * block));
    }
    return;
  }
  std::mutex mu;
  std::exception_ptr first_error;
  auto run = [&](std::size_t w) {
    try {
      for (std::size_t b = w; b < n_blocks; b += workers) {
        f(b * block, std::min(n, (b + 1) * block));
      }
    } catch (...) {
      std::lock_guard lock(mu);
      if (!first_error) first_error = std::current_exception();
    }
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run, w);
    run(0);
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace demandid
