#pragma once

#include "demandid/common.hpp"
#include "demandid/demand.hpp"
#include "demandid/pricing.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

namespace demandid::market {

enum class IndexForm { linear, nonseparable };

std::string_view to_string(IndexForm f);
IndexForm index_form_from_string(std::string_view s);

/// Finite-support law for d given X: d takes values support[i] (length-J
/// vectors) with probability transition(i, k) when X = x_support[k].
struct DiscreteIndexLaw {
  std::vector<Vec> support;
  Mat transition;
};

struct DgpConfig {
  int n_markets = 1;
  demand::DemandSpec spec;
  pricing::PriceFamily family;
  std::vector<Vec> x_support;
  std::vector<Vec> z_support;
  double rho = 0.0;  // endogeneity of X through xi
  IndexForm index_form = IndexForm::linear;
  double tau = 0.0;  // interaction weight for the nonseparable index
  std::optional<DiscreteIndexLaw> discrete_index;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Markets stored columnwise: row m of each matrix is market m's J-vector.
struct MarketDataset {
  int J = 1;
  Mat S, P, X, Z;
  bool has_oracle = false;
  Mat delta, xi, omega;  // populated only when has_oracle

  Eigen::Index n_markets() const { return S.rows(); }
  void validate() const;
  /// Drops the latent columns.
  MarketDataset without_oracle() const;
};

bool operator==(const MarketDataset& a, const MarketDataset& b);

struct SampleStats {
  int bertrand_start_sensitive = 0;
  int bertrand_negative_price = 0;
};

/// Draws n_markets markets. Market m uses its own generator seeded from
/// (seed, m), so the output does not depend on the worker count. Latent
/// columns are always filled; strip them with without_oracle().
MarketDataset sample_markets(const DgpConfig& cfg, SampleStats* stats = nullptr);

/// Per-row cell labels 0..K-1 for identical rows of `keys`, in order of
/// first appearance.
std::vector<int> cell_labels(const Mat& keys);

/// Same, keyed on the concatenation of two matrices' rows.
std::vector<int> cell_labels(const Mat& a, const Mat& b);

/// Sample correlation of two equally sized matrices, pooled over entries.
double pooled_correlation(const Mat& a, const Mat& b);

// Delimited text: header `market,j,S,P,X,Z[,delta,xi,omega]`, one row per
// (market, product), 17 significant digits.
void write_dataset(const MarketDataset& ds, std::ostream& out);
void write_dataset(const MarketDataset& ds, const std::filesystem::path& path);
MarketDataset read_dataset(std::istream& in);
MarketDataset read_dataset(const std::filesystem::path& path);

/// Parse error carrying the 1-based line number.
class FormatError : public InvalidArgument {
 public:
  FormatError(const std::string& what, long line)
      : InvalidArgument("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  long line() const noexcept { return line_; }

 private:
  long line_;
};

}  // namespace demandid::market
