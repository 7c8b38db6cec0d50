#include "demandid/counterexample.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <limits>
#include <map>
#include <random>

namespace demandid::counterexample {

namespace {

constexpr int kPanels = 2048;

double density_kernel(double x, double d) {
  const double r = x * d;
  return std::exp(0.5 * r * r);
}

double normal_cdf(double v) { return 0.5 * std::erfc(-v / std::sqrt(2.0)); }

}  // namespace

void CexConfig::validate() const {
  require(!x_grid.empty() && !z_grid.empty(), "grids must be nonempty");
  for (double x : x_grid) require(std::isfinite(x) && x > 0.0, "x values must be positive");
  for (double z : z_grid) require(std::isfinite(z) && z > 0.0, "z values must be positive");
  require(n_per_cell >= 1, "n_per_cell must be at least 1");
}

double inverse_normalizer(double x) {
  const double h = 1.0 / kPanels;
  CompensatedSum sum;
  for (int i = 0; i <= kPanels; ++i) {
    const double w = (i == 0 || i == kPanels) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    sum.add(w * density_kernel(x, 1.0 + i * h));
  }
  return sum.value() * h / 3.0;
}

IndexCdf::IndexCdf(double x) : grid_(kPanels + 1), cum_(kPanels + 1) {
  const double h = 1.0 / kPanels;
  for (int i = 0; i <= kPanels; ++i) grid_[i] = 1.0 + i * h;
  // Cumulative Simpson-corrected trapezoid: each panel integrates exactly
  // for quadratics using the midpoint.
  cum_[0] = 0.0;
  CompensatedSum acc;
  for (int i = 0; i < kPanels; ++i) {
    const double a = grid_[i], b = grid_[i + 1];
    const double panel = (b - a) / 6.0 *
                         (density_kernel(x, a) + 4.0 * density_kernel(x, 0.5 * (a + b)) +
                          density_kernel(x, b));
    acc.add(panel);
    cum_[i + 1] = acc.value();
  }
  const double total = cum_.back();
  for (double& c : cum_) c /= total;
  cum_.back() = 1.0;
}

double IndexCdf::cdf(double d) const {
  if (d <= grid_.front()) return 0.0;
  if (d >= grid_.back()) return 1.0;
  const auto it = std::upper_bound(grid_.begin(), grid_.end(), d);
  const auto i = static_cast<std::size_t>(it - grid_.begin()) - 1;
  const double t = (d - grid_[i]) / (grid_[i + 1] - grid_[i]);
  return cum_[i] + t * (cum_[i + 1] - cum_[i]);
}

double IndexCdf::quantile(double u) const {
  if (u <= 0.0) return grid_.front();
  if (u >= 1.0) return grid_.back();
  const auto it = std::upper_bound(cum_.begin(), cum_.end(), u);
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(it - cum_.begin()) - 1,
                                       cum_.size() - 2);
  const double span = cum_[i + 1] - cum_[i];
  const double t = span > 0.0 ? (u - cum_[i]) / span : 0.0;
  return grid_[i] + t * (grid_[i + 1] - grid_[i]);
}

CexTable sample_cex(const CexConfig& cfg) {
  cfg.validate();
  const std::size_t n_cells = cfg.x_grid.size() * cfg.z_grid.size();
  const auto n = static_cast<Eigen::Index>(n_cells) * cfg.n_per_cell;
  CexTable t{Vec(n), Vec(n), Vec(n), Vec(n)};
  parallel_blocks(n_cells, 1, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t c = lo; c < hi; ++c) {
      const double x = cfg.x_grid[c / cfg.z_grid.size()];
      const double z = cfg.z_grid[c % cfg.z_grid.size()];
      const IndexCdf cdf(x);
      std::mt19937_64 rng(substream_seed(cfg.seed, c));
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      std::normal_distribution<double> normal(0.0, 1.0);
      const auto base = static_cast<Eigen::Index>(c) * cfg.n_per_cell;
      for (long r = 0; r < cfg.n_per_cell; ++r) {
        const double d = cdf.quantile(unif(rng));
        const double p = x * d * z + z * normal(rng);
        t.delta(base + r) = d;
        t.P(base + r) = p;
        t.X(base + r) = x;
        t.Z(base + r) = z;
      }
    }
  });
  return t;
}

market::MarketDataset to_dataset(const CexTable& table) {
  market::MarketDataset ds;
  ds.J = 1;
  ds.has_oracle = true;
  ds.S = ((table.delta - table.P).array().exp() / (1.0 + (table.delta - table.P).array().exp()))
             .matrix();
  ds.P = table.P;
  ds.X = table.X;
  ds.Z = table.Z;
  ds.delta = table.delta;
  ds.xi = Vec::Zero(table.rows());
  ds.omega = Vec::Zero(table.rows());
  return ds;
}

namespace {

struct Acc {
  CompensatedSum sum, sum_sq;
  long n = 0;
  void add(double v) {
    sum.add(v);
    sum_sq.add(v * v);
    ++n;
  }
  double mean() const { return sum.value() / static_cast<double>(n); }
  double se() const {
    if (n < 2) return 0.0;
    const double cn = static_cast<double>(n);
    const double m = mean();
    const double var = std::max(0.0, (sum_sq.value() - cn * m * m) / (cn - 1.0));
    return std::sqrt(var / cn);
  }
};

}  // namespace

std::vector<CellMean> cell_means(const CexTable& table,
                                 const std::function<double(double, double)>& H) {
  std::map<std::pair<double, double>, Acc> cells;
  for (Eigen::Index r = 0; r < table.rows(); ++r) {
    cells[{table.X(r), table.Z(r)}].add(H(table.delta(r), table.P(r)));
  }
  std::vector<CellMean> out;
  for (const auto& [key, acc] : cells) {
    out.push_back({key.first, key.second, acc.mean(), acc.se(), acc.n});
  }
  return out;
}

FlatnessReport faithfulness_failure_test(const CexTable& table, const CexConfig& cfg) {
  cfg.validate();
  const auto indicator = cell_means(table, [](double, double p) { return p > 0.0 ? 1.0 : 0.0; });
  const auto price = cell_means(table, [](double, double p) { return p; });

  FlatnessReport report;
  report.faithfulness_fails = true;
  report.price_moves = true;
  std::vector<double> xs = cfg.x_grid;
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  for (double x : xs) {
    FlatnessByX fx;
    fx.x = x;
    for (const auto& c : indicator) if (c.x == x) fx.indicator.push_back(c);
    for (const auto& c : price) if (c.x == x) fx.price.push_back(c);
    if (fx.indicator.size() < 2) {
      throw InvalidArgument("need at least two z cells for x = " + std::to_string(x));
    }
    fx.indicator_max_z = 0.0;
    fx.price_min_z = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < fx.indicator.size(); ++a) {
      for (std::size_t b = a + 1; b < fx.indicator.size(); ++b) {
        const auto& ia = fx.indicator[a];
        const auto& ib = fx.indicator[b];
        const double pooled = std::hypot(ia.se, ib.se);
        fx.indicator_max_z =
            std::max(fx.indicator_max_z, pooled > 0 ? std::abs(ia.mean - ib.mean) / pooled : 0.0);
        const auto& pa = fx.price[a];
        const auto& pb = fx.price[b];
        const double pooled_p = std::hypot(pa.se, pb.se);
        fx.price_min_z = std::min(fx.price_min_z, pooled_p > 0
                                                      ? std::abs(pa.mean - pb.mean) / pooled_p
                                                      : std::numeric_limits<double>::infinity());
      }
    }
    fx.indicator_flat = fx.indicator_max_z < 3.0;
    fx.price_detected = fx.price_min_z > 5.0;

    Acc phi, gap;
    for (Eigen::Index r = 0; r < table.rows(); ++r) {
      if (table.X(r) != x) continue;
      const double closed = normal_cdf(x * table.delta(r));
      phi.add(closed);
      gap.add((table.P(r) > 0.0 ? 1.0 : 0.0) - closed);
    }
    fx.closed_form = phi.mean();
    fx.closed_form_gap = gap.mean();
    fx.closed_form_se = gap.se();
    fx.closed_form_agrees = std::abs(fx.closed_form_gap) <= 3.0 * fx.closed_form_se;

    report.faithfulness_fails =
        report.faithfulness_fails && fx.indicator_flat && fx.closed_form_agrees;
    report.price_moves = report.price_moves && fx.price_detected;
    report.by_x.push_back(std::move(fx));
  }
  return report;
}

RankDiagnostic completeness_diagnostic(const CexTable& table, int n_bins) {
  require(table.rows() > 0, "table is empty");
  require(n_bins >= 1, "n_bins must be positive");
  RankDiagnostic out;
  out.n_bins = n_bins;
  out.note =
      "finite-dimensional diagnostic, not a proof: completeness of the exponential "
      "family is an analytic property that no finite rank computation certifies";

  // Pooled price quantile cut points.
  std::vector<double> prices(table.P.data(), table.P.data() + table.rows());
  std::sort(prices.begin(), prices.end());
  std::vector<double> cuts;
  for (int b = 1; b < n_bins; ++b) {
    cuts.push_back(prices[static_cast<std::size_t>(
        static_cast<double>(b) / n_bins * static_cast<double>(prices.size() - 1))]);
  }

  std::map<std::pair<double, double>, int> column_of;
  for (Eigen::Index r = 0; r < table.rows(); ++r) {
    column_of.try_emplace({table.X(r), table.Z(r)}, 0);
  }
  int col = 0;
  for (auto& [key, idx] : column_of) idx = col++;
  out.columns = col;

  const int n_cells = n_bins * n_bins;
  Mat counts = Mat::Zero(n_cells, col);
  Vec totals = Vec::Zero(col);
  for (Eigen::Index r = 0; r < table.rows(); ++r) {
    const int db = std::clamp(static_cast<int>((table.delta(r) - 1.0) * n_bins), 0, n_bins - 1);
    const int pb = static_cast<int>(std::upper_bound(cuts.begin(), cuts.end(), table.P(r)) -
                                    cuts.begin());
    const int c = column_of.at({table.X(r), table.Z(r)});
    counts(db * n_bins + pb, c) += 1.0;
    totals(c) += 1.0;
  }

  // Empty (d, P) cells carry no information; drop them.
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < n_cells; ++i) {
    if (counts.row(i).sum() > 0.0) {
      keep.push_back(i);
    } else {
      out.warnings.push_back("empty (delta, P) cell " + std::to_string(i) + " dropped");
    }
  }
  out.rows = static_cast<int>(keep.size());
  out.matrix.resize(out.rows, col);
  for (int i = 0; i < out.rows; ++i) {
    out.matrix.row(i) = counts.row(keep[i]).cwiseQuotient(totals.transpose());
  }

  Eigen::JacobiSVD<Mat> svd(out.matrix);
  out.singular_values = svd.singularValues();
  const double largest = out.singular_values.size() ? out.singular_values(0) : 0.0;
  CompensatedSum noise;
  for (int c = 0; c < col; ++c) {
    for (int i = 0; i < out.rows; ++i) {
      const double p = out.matrix(i, c);
      noise.add(p * (1.0 - p) / totals(c));
    }
  }
  out.noise_floor = std::sqrt(noise.value());
  for (Eigen::Index i = 0; i < out.singular_values.size(); ++i) {
    if (out.singular_values(i) > 1e-10 * largest) ++out.numerical_rank;
    if (out.singular_values(i) > std::max(out.noise_floor, 1e-10 * largest)) {
      ++out.statistical_rank;
    }
  }
  out.full_rank = out.statistical_rank == std::min(out.rows, out.columns);
  return out;
}

}  // namespace demandid::counterexample
