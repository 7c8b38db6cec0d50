#pragma once

#include "demandid/common.hpp"

#include <random>

namespace testing_support {

using demandid::Vec;

struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
  Vec vec(int n, double lo, double hi) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = uniform(lo, hi);
    return v;
  }
  // Interior share vector: J inside shares plus an outside share, all >= floor.
  Vec shares(int J, double floor = 0.01) {
    Vec w(J + 1);
    for (int i = 0; i <= J; ++i) w(i) = uniform(floor, 1.0);
    w /= w.sum();
    return w.head(J);
  }
};

}  // namespace testing_support
