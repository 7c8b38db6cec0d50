#pragma once

#include "demandid/common.hpp"

#include <span>
#include <string>
#include <vector>

// Cell-mean conditional expectations, recentered instruments and the
// conditional moment test E[h(S,P) (R(X,Z) - E[R(X,Z)|X])] = 0.
namespace demandid::moments {

struct CellStat {
  Vec mean;
  long count = 0;
};

/// Exact per-cell means; cell labels are 0..K-1.
struct ConditionalTable {
  std::vector<CellStat> cells;

  long total_count() const;
};

/// Per-cell arithmetic means of the rows of `values` (compensated sums).
/// With `required_cells` > 0, every label below it must occur.
ConditionalTable conditional_mean(const Mat& values, std::span<const int> cells,
                                  int required_cells = 0);

/// Each row's cell mean, expanded back to one row per observation.
Mat expand(const ConditionalTable& table, std::span<const int> cells);

/// R - E_n[R | X] columnwise, using in-sample X-cell means. Output columns
/// have zero mean within every cell up to rounding.
Mat recenter(const Mat& R, std::span<const int> x_cells);

struct Instruments {
  Mat values;  // n x K
  std::vector<std::string> names;
};

/// Raw battery: Z_k, Z_k^2, Z_k X_k for each product k, and Z_k Z_l for
/// k < l. Not recentered.
Instruments default_battery(const Mat& X, const Mat& Z);

/// Ê[h | X, Z] expanded per row, one instrument per coordinate of h.
Instruments self_instrument(const Mat& h, std::span<const int> xz_cells);

enum class Verdict { pass, reject };

struct InstrumentMoment {
  std::string name;
  Vec moment;  // length J: mean of h_j * R
  Vec se;
  Vec t;
  bool excluded = false;  // zero-variance instrument
};

struct MomentReport {
  std::vector<InstrumentMoment> instruments;
  std::vector<std::string> excluded;
  double threshold = 4.0;
  long n = 0;
  int n_tests = 0;  // number of t statistics compared with the threshold
  double max_abs_t = 0.0;
  Verdict verdict = Verdict::pass;
};

std::string_view to_string(Verdict v);

/// Moment = sample mean of h_j * R_k, SE = sample sd / sqrt(n). Rejects iff
/// some |t| > threshold. Instruments whose recentered values are all
/// numerically zero are reported as excluded.
MomentReport moment_test(const Mat& h, const Instruments& recentered,
                         double threshold = 4.0);

}  // namespace demandid::moments
