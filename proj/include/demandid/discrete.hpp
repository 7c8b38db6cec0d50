#pragma once

#include "demandid/common.hpp"
#include "demandid/market.hpp"

#include <functional>
#include <string>
#include <vector>

// Finite-support faithfulness: with d and X on finite supports, completeness
// of d given X is a rank condition on Q(i, k) = P(d = d_i | X = x_k), and the
// function H0 with E[H0(d) | X] = k(X) solves Q' H0 = k.
namespace demandid::discrete {

struct TransitionMatrix {
  Mat Q;                      // rows: index support, cols: X support
  std::vector<Vec> delta_support;
  std::vector<Vec> x_support;

  void validate() const;  // entries in [0,1], columns sum to 1 within 1e-12
};

/// Empirical conditional frequencies from the latent index column.
TransitionMatrix estimate_Q(const market::MarketDataset& ds,
                            const std::vector<Vec>& delta_support,
                            const std::vector<Vec>& x_support);

struct RankReport {
  int rank = 0;
  double condition = 0.0;  // infinite when rank deficient
  Vec singular_values;
};

/// Numerical rank at 1e-10 times the largest singular value, and the
/// condition number of Q'.
RankReport completeness_rank(const Mat& Q);

class CompletenessFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct H0Solution {
  Vec H0;              // indexed by the index support
  double residual = 0.0;  // ||Q' H0 - k||_inf
  bool extended = false;  // rectangular Q solved by least squares
};

/// Solves Q' H0 = k. Square full-rank Q is the supported case; more X cells
/// than index values uses least squares and sets `extended`. Throws
/// CompletenessFailure when Q' lacks full column rank.
H0Solution solve_H0(const Mat& Q, const Vec& k);

using IndexPriceFunction = std::function<double(const Vec& delta, const Vec& p)>;

struct CellDiscrepancy {
  Vec x;
  Vec z;
  double difference = 0.0;  // Ê[H | X, Z] - Ê[H0(d) | X, Z]
  double se = 0.0;
  long count = 0;
};

struct Certificate {
  bool certified = false;
  bool rank_deficient = false;
  bool extended = false;  // rectangular Q: not covered by the square-case result
  RankReport rank;
  double noise_floor = 0.0;  // Frobenius size of the sampling error in Q
  int statistical_rank = 0;  // singular values above the noise floor
  TransitionMatrix q;
  Vec k_target;
  Vec H0;
  std::vector<CellDiscrepancy> cells;
  double max_cell_z = 0.0;  // max |difference| / se over cells
  double max_row_discrepancy = 0.0;  // max_i |H(d_i, P_i) - H0(d_i)|
  std::string message;
};

/// Samples the DGP (which must carry a discrete index law), estimates Q,
/// solves H0 for k = Ê[H | X] and checks Ê[H | X, Z] = Ê[H0(d) | X, Z] cell by
/// cell within 3 SE.
Certificate certify_discrete_faithfulness(const market::DgpConfig& dgp,
                                          const IndexPriceFunction& H);

/// Same, on an already sampled dataset with oracle columns.
Certificate certify_dataset(const market::MarketDataset& ds,
                            const std::vector<Vec>& delta_support,
                            const std::vector<Vec>& x_support,
                            const IndexPriceFunction& H);

}  // namespace demandid::discrete
