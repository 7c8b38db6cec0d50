#pragma once

#include "demandid/common.hpp"
#include "demandid/market.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

// A single-product design in which completeness holds but faithfulness
// fails. Given X = x > 0 and Z = z > 0:
//   d has density a(x) exp((x d)^2 / 2) on [1, 2],
//   P | d, Z, X ~ Normal(x d z, z^2).
// Then P(P > 0 | d, Z, X) = Phi(x d) does not involve z, so 1(P > 0) has a
// conditional mean flat in Z although it depends on P.
namespace demandid::counterexample {

struct CexConfig {
  std::vector<double> x_grid{0.5, 1.0};
  std::vector<double> z_grid{1.0, 2.0};
  long n_per_cell = 200000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct CexTable {
  Vec delta, P, X, Z;
  Eigen::Index rows() const { return delta.size(); }
};

/// a(x)^{-1} = int_1^2 exp((x d)^2 / 2) dd, composite Simpson on 2048 panels.
double inverse_normalizer(double x);

/// Tabulated CDF of d | X = x on 2,049 equally spaced points of [1, 2].
struct IndexCdf {
  explicit IndexCdf(double x);
  double cdf(double d) const;
  double quantile(double u) const;

 private:
  std::vector<double> grid_, cum_;
};

/// Samples every (x, z) cell with its own substream; deterministic in seed.
CexTable sample_cex(const CexConfig& cfg);

/// Single-product market dataset view: latent index and prices as drawn,
/// shares from a unit-price-coefficient logit, oracle columns present.
market::MarketDataset to_dataset(const CexTable& table);

struct CellMean {
  double x = 0, z = 0;
  double mean = 0, se = 0;
  long count = 0;
};

struct FlatnessByX {
  double x = 0;
  std::vector<CellMean> indicator;     // 1(P > 0) per z
  double indicator_max_z = 0;          // max |diff| / pooled SE across z pairs
  bool indicator_flat = false;         // every pair within 3 pooled SE
  double closed_form = 0;              // Ê[Phi(x d) | x]
  double closed_form_gap = 0;          // Ê[1(P>0) - Phi(x d) | x]
  double closed_form_se = 0;
  bool closed_form_agrees = false;     // within 3 SE
  std::vector<CellMean> price;         // H = p per z
  double price_min_z = 0;              // min |diff| / pooled SE across z pairs
  bool price_detected = false;         // every pair beyond 5 pooled SE
};

struct FlatnessReport {
  std::vector<FlatnessByX> by_x;
  bool faithfulness_fails = false;  // indicator flat and agreeing for all x
  bool price_moves = false;         // H = p non-flat for all x
};

FlatnessReport faithfulness_failure_test(const CexTable& table, const CexConfig& cfg);

/// Conditional means of a user-supplied H(d, p) per (x, z) cell.
std::vector<CellMean> cell_means(const CexTable& table,
                                 const std::function<double(double, double)>& H);

struct RankDiagnostic {
  int n_bins = 0;
  int rows = 0;     // (d, P) cells kept
  int columns = 0;  // distinct (x, z) cells
  Mat matrix;       // conditional probabilities, rows x columns
  Vec singular_values;
  int numerical_rank = 0;    // at 1e-10 relative
  double noise_floor = 0;    // Frobenius size of the sampling error
  int statistical_rank = 0;  // singular values above the noise floor
  bool full_rank = false;    // statistical_rank == min(rows, columns)
  std::vector<std::string> warnings;
  std::string note;
};

/// Bins d into n_bins equal-width bins on [1, 2] and P into n_bins pooled
/// quantile bins, then reports the spectrum of P((d, P) cell | x, z).
RankDiagnostic completeness_diagnostic(const CexTable& table, int n_bins);

}  // namespace demandid::counterexample
