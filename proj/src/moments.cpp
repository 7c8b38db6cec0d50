#include "demandid/moments.hpp"

#include <limits>

namespace demandid::moments {

long ConditionalTable::total_count() const {
  long total = 0;
  for (const auto& c : cells) total += c.count;
  return total;
}

ConditionalTable conditional_mean(const Mat& values, std::span<const int> cells,
                                  int required_cells) {
  require(static_cast<std::size_t>(values.rows()) == cells.size(),
          "values and cell labels must have equal rows");
  int n_cells = required_cells;
  for (int c : cells) {
    require(c >= 0, "cell labels must be nonnegative");
    n_cells = std::max(n_cells, c + 1);
  }
  const auto width = values.cols();
  std::vector<std::vector<CompensatedSum>> sums(
      static_cast<std::size_t>(n_cells), std::vector<CompensatedSum>(width));
  std::vector<long> counts(static_cast<std::size_t>(n_cells), 0);
  for (std::size_t r = 0; r < cells.size(); ++r) {
    auto& acc = sums[cells[r]];
    for (Eigen::Index k = 0; k < width; ++k) {
      acc[k].add(values(static_cast<Eigen::Index>(r), k));
    }
    ++counts[cells[r]];
  }
  ConditionalTable table;
  table.cells.resize(static_cast<std::size_t>(n_cells));
  for (int c = 0; c < n_cells; ++c) {
    if (counts[c] == 0) {
      if (c < required_cells) {
        throw InvalidArgument("cell " + std::to_string(c) + " is empty");
      }
      table.cells[c] = {Vec::Constant(width, std::numeric_limits<double>::quiet_NaN()), 0};
      continue;
    }
    Vec mean(width);
    for (Eigen::Index k = 0; k < width; ++k) {
      mean(k) = sums[c][k].value() / static_cast<double>(counts[c]);
    }
    table.cells[c] = {std::move(mean), counts[c]};
  }
  return table;
}

Mat expand(const ConditionalTable& table, std::span<const int> cells) {
  const auto width = table.cells.empty() ? 0 : table.cells.front().mean.size();
  Mat out(static_cast<Eigen::Index>(cells.size()), width);
  for (std::size_t r = 0; r < cells.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = table.cells.at(cells[r]).mean.transpose();
  }
  return out;
}

Mat recenter(const Mat& R, std::span<const int> x_cells) {
  const auto table = conditional_mean(R, x_cells);
  Mat out = R - expand(table, x_cells);
  // Second pass removes the rounding left by the first subtraction.
  const auto residual_table = conditional_mean(out, x_cells);
  out -= expand(residual_table, x_cells);
  return out;
}

Instruments default_battery(const Mat& X, const Mat& Z) {
  require(X.rows() == Z.rows() && X.cols() == Z.cols(), "X and Z shapes differ");
  const auto J = Z.cols();
  Instruments out;
  std::vector<Vec> cols;
  for (Eigen::Index k = 0; k < J; ++k) {
    const auto tag = std::to_string(k);
    cols.push_back(Z.col(k));
    out.names.push_back("Z" + tag);
    cols.push_back(Z.col(k).cwiseProduct(Z.col(k)));
    out.names.push_back("Z" + tag + "^2");
    cols.push_back(Z.col(k).cwiseProduct(X.col(k)));
    out.names.push_back("Z" + tag + "*X" + tag);
  }
  for (Eigen::Index k = 0; k < J; ++k) {
    for (Eigen::Index l = k + 1; l < J; ++l) {
      cols.push_back(Z.col(k).cwiseProduct(Z.col(l)));
      out.names.push_back("Z" + std::to_string(k) + "*Z" + std::to_string(l));
    }
  }
  out.values.resize(Z.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    out.values.col(static_cast<Eigen::Index>(c)) = cols[c];
  }
  return out;
}

Instruments self_instrument(const Mat& h, std::span<const int> xz_cells) {
  Instruments out;
  out.values = expand(conditional_mean(h, xz_cells), xz_cells);
  for (Eigen::Index k = 0; k < h.cols(); ++k) {
    out.names.push_back("E[h" + std::to_string(k) + "|X,Z]");
  }
  return out;
}

std::string_view to_string(Verdict v) {
  return v == Verdict::pass ? "pass" : "reject";
}

MomentReport moment_test(const Mat& h, const Instruments& recentered,
                         double threshold) {
  const auto n = h.rows();
  require(recentered.values.rows() == n, "instrument rows must match residual rows");
  require(static_cast<std::size_t>(recentered.values.cols()) == recentered.names.size(),
          "one name per instrument");
  require(n >= 2, "need at least two observations");
  require(h.allFinite() && recentered.values.allFinite(), "non-finite moment inputs");
  require(threshold > 0.0, "threshold must be positive");

  MomentReport report;
  report.threshold = threshold;
  report.n = static_cast<long>(n);
  const auto J = h.cols();
  const double dn = static_cast<double>(n);
  for (Eigen::Index k = 0; k < recentered.values.cols(); ++k) {
    const auto col = recentered.values.col(k);
    InstrumentMoment im;
    im.name = recentered.names[static_cast<std::size_t>(k)];
    const double scale = std::max(1.0, col.cwiseAbs().maxCoeff());
    if (col.cwiseAbs().maxCoeff() <= 1e-12 * scale) {
      im.excluded = true;
      report.excluded.push_back(im.name);
      report.instruments.push_back(std::move(im));
      continue;
    }
    im.moment.resize(J);
    im.se.resize(J);
    im.t.resize(J);
    for (Eigen::Index j = 0; j < J; ++j) {
      CompensatedSum sum;
      for (Eigen::Index r = 0; r < n; ++r) sum.add(h(r, j) * col(r));
      const double mean = sum.value() / dn;
      CompensatedSum ss;
      for (Eigen::Index r = 0; r < n; ++r) {
        const double dev = h(r, j) * col(r) - mean;
        ss.add(dev * dev);
      }
      const double se = std::sqrt(ss.value() / (dn - 1.0)) / std::sqrt(dn);
      double t = 0.0;
      if (se > 0.0) {
        t = mean / se;
      } else if (mean != 0.0) {
        t = std::copysign(std::numeric_limits<double>::infinity(), mean);
      }
      im.moment(j) = mean;
      im.se(j) = se;
      im.t(j) = t;
      ++report.n_tests;
      report.max_abs_t = std::max(report.max_abs_t, std::abs(t));
    }
    report.instruments.push_back(std::move(im));
  }
  report.verdict = report.max_abs_t > threshold ? Verdict::reject : Verdict::pass;
  return report;
}

}  // namespace demandid::moments
