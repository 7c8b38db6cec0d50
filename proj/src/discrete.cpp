#include "demandid/discrete.hpp"

#include <Eigen/SVD>

#include <limits>
#include <map>

namespace demandid::discrete {

void TransitionMatrix::validate() const {
  require(Q.rows() == static_cast<Eigen::Index>(delta_support.size()) &&
              Q.cols() == static_cast<Eigen::Index>(x_support.size()),
          "Q shape must match the supports");
  require(Q.size() > 0 && Q.minCoeff() >= 0.0 && Q.maxCoeff() <= 1.0,
          "Q entries must lie in [0, 1]");
  for (Eigen::Index k = 0; k < Q.cols(); ++k) {
    require(std::abs(Q.col(k).sum() - 1.0) <= 1e-12, "Q columns must sum to 1");
  }
}

namespace {

Eigen::Index match_support(const Vec& v, const std::vector<Vec>& support) {
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (support[i].size() == v.size() &&
        (support[i] - v).cwiseAbs().maxCoeff() <=
            1e-9 * std::max(1.0, support[i].cwiseAbs().maxCoeff())) {
      return static_cast<Eigen::Index>(i);
    }
  }
  return -1;
}

}  // namespace

TransitionMatrix estimate_Q(const market::MarketDataset& ds,
                            const std::vector<Vec>& delta_support,
                            const std::vector<Vec>& x_support) {
  require(ds.has_oracle, "estimate_Q needs the latent index column");
  require(!delta_support.empty() && !x_support.empty(), "supports must be nonempty");
  const auto M = static_cast<Eigen::Index>(delta_support.size());
  const auto K = static_cast<Eigen::Index>(x_support.size());
  Mat counts = Mat::Zero(M, K);
  for (Eigen::Index m = 0; m < ds.n_markets(); ++m) {
    const auto i = match_support(ds.delta.row(m).transpose(), delta_support);
    if (i < 0) {
      throw InvalidArgument("market " + std::to_string(m) +
                            ": index value outside the declared support");
    }
    const auto k = match_support(ds.X.row(m).transpose(), x_support);
    if (k < 0) {
      throw InvalidArgument("market " + std::to_string(m) +
                            ": X value outside the declared support");
    }
    counts(i, k) += 1.0;
  }
  TransitionMatrix out{Mat(M, K), delta_support, x_support};
  for (Eigen::Index k = 0; k < K; ++k) {
    const double total = counts.col(k).sum();
    if (total == 0.0) throw InvalidArgument("X cell " + std::to_string(k) + " is empty");
    out.Q.col(k) = counts.col(k) / total;
  }
  return out;
}

RankReport completeness_rank(const Mat& Q) {
  require(Q.size() > 0 && Q.allFinite(), "Q must be a finite nonempty matrix");
  Eigen::JacobiSVD<Mat> svd(Q.transpose());
  RankReport out;
  out.singular_values = svd.singularValues();
  const double largest = out.singular_values.size() ? out.singular_values(0) : 0.0;
  const double tol = 1e-10 * largest;
  for (Eigen::Index i = 0; i < out.singular_values.size(); ++i) {
    if (out.singular_values(i) > tol) ++out.rank;
  }
  const auto full = std::min(Q.rows(), Q.cols());
  out.condition = out.rank == full && full > 0
                      ? largest / out.singular_values(full - 1)
                      : std::numeric_limits<double>::infinity();
  return out;
}

H0Solution solve_H0(const Mat& Q, const Vec& k) {
  require(k.size() == Q.cols(), "k must have one entry per X value");
  const auto rank = completeness_rank(Q);
  // Q' is |X| x |delta|; H0 is unique iff Q' has full column rank.
  if (rank.rank < Q.rows()) {
    throw CompletenessFailure("Q is rank deficient (rank " + std::to_string(rank.rank) +
                              " < " + std::to_string(Q.rows()) +
                              "): completeness fails, faithfulness cannot be certified");
  }
  H0Solution out;
  const Mat Qt = Q.transpose();
  if (Q.rows() == Q.cols()) {
    out.H0 = Qt.fullPivLu().solve(k);
  } else {
    out.H0 = Qt.colPivHouseholderQr().solve(k);
    out.extended = true;
  }
  out.residual = (Qt * out.H0 - k).cwiseAbs().maxCoeff();
  return out;
}

Certificate certify_dataset(const market::MarketDataset& ds,
                            const std::vector<Vec>& delta_support,
                            const std::vector<Vec>& x_support,
                            const IndexPriceFunction& H) {
  Certificate cert;
  cert.q = estimate_Q(ds, delta_support, x_support);
  cert.rank = completeness_rank(cert.q.Q);
  const auto n = ds.n_markets();
  const auto K = static_cast<Eigen::Index>(x_support.size());

  std::vector<Eigen::Index> x_index(static_cast<std::size_t>(n)), d_index(static_cast<std::size_t>(n));
  Vec h_values(n);
  for (Eigen::Index m = 0; m < n; ++m) {
    x_index[m] = match_support(ds.X.row(m).transpose(), x_support);
    d_index[m] = match_support(ds.delta.row(m).transpose(), delta_support);
    h_values(m) = H(ds.delta.row(m).transpose(), ds.P.row(m).transpose());
  }
  require(h_values.allFinite(), "H returned a non-finite value");

  std::vector<CompensatedSum> k_sum(static_cast<std::size_t>(K));
  std::vector<long> k_count(static_cast<std::size_t>(K), 0);
  for (Eigen::Index m = 0; m < n; ++m) {
    k_sum[x_index[m]].add(h_values(m));
    ++k_count[x_index[m]];
  }
  cert.k_target.resize(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    cert.k_target(k) = k_sum[k].value() / static_cast<double>(k_count[k]);
  }

  // Estimated Q is never exactly singular; singular values inside the
  // sampling noise count as missing rank.
  CompensatedSum noise;
  for (Eigen::Index k = 0; k < K; ++k) {
    for (Eigen::Index i = 0; i < cert.q.Q.rows(); ++i) {
      const double p = cert.q.Q(i, k);
      noise.add(p * (1.0 - p) / static_cast<double>(k_count[k]));
    }
  }
  cert.noise_floor = std::sqrt(noise.value());
  const double largest = cert.rank.singular_values.size() ? cert.rank.singular_values(0) : 0.0;
  for (Eigen::Index i = 0; i < cert.rank.singular_values.size(); ++i) {
    if (cert.rank.singular_values(i) > std::max(cert.noise_floor, 1e-10 * largest)) {
      ++cert.statistical_rank;
    }
  }
  if (cert.statistical_rank < cert.q.Q.rows()) {
    cert.rank_deficient = true;
    cert.message = "cannot certify: Q has " + std::to_string(cert.statistical_rank) +
                   " singular values above the sampling noise floor, fewer than " +
                   std::to_string(cert.q.Q.rows()) + " index values";
    return cert;
  }

  H0Solution sol;
  try {
    sol = solve_H0(cert.q.Q, cert.k_target);
  } catch (const CompletenessFailure& e) {
    cert.rank_deficient = true;
    cert.message = std::string("cannot certify: ") + e.what();
    return cert;
  }
  cert.H0 = sol.H0;
  cert.extended = sol.extended;

  // Ê[H - H0(d) | X, Z] per cell; H = H0(d) row-wise forces it to zero.
  struct Acc {
    CompensatedSum sum, sum_sq;
    long n = 0;
  };
  std::map<std::vector<double>, Acc> cells;
  std::map<std::vector<double>, std::pair<Vec, Vec>> labels;
  for (Eigen::Index m = 0; m < n; ++m) {
    const double gap = h_values(m) - sol.H0(d_index[m]);
    cert.max_row_discrepancy = std::max(cert.max_row_discrepancy, std::abs(gap));
    std::vector<double> key;
    for (int j = 0; j < ds.J; ++j) key.push_back(ds.X(m, j));
    for (int j = 0; j < ds.J; ++j) key.push_back(ds.Z(m, j));
    auto& acc = cells[key];
    acc.sum.add(gap);
    acc.sum_sq.add(gap * gap);
    ++acc.n;
    labels.try_emplace(key, ds.X.row(m).transpose(), ds.Z.row(m).transpose());
  }
  bool flat = true;
  for (const auto& [key, acc] : cells) {
    CellDiscrepancy cell;
    cell.x = labels[key].first;
    cell.z = labels[key].second;
    cell.count = acc.n;
    const double cn = static_cast<double>(acc.n);
    cell.difference = acc.sum.value() / cn;
    const double var =
        acc.n > 1
            ? std::max(0.0, (acc.sum_sq.value() - cn * cell.difference * cell.difference) /
                                (cn - 1.0))
            : 0.0;
    cell.se = std::sqrt(var / cn);
    const double scale = 1e-12 * std::max(1.0, h_values.cwiseAbs().maxCoeff());
    double z = 0.0;
    if (std::abs(cell.difference) <= scale) {
      z = 0.0;  // rounding-level agreement
    } else if (cell.se > 0.0) {
      z = std::abs(cell.difference) / cell.se;
    } else {
      z = std::numeric_limits<double>::infinity();
    }
    cert.max_cell_z = std::max(cert.max_cell_z, z);
    if (z > 3.0) flat = false;
    cert.cells.push_back(std::move(cell));
  }
  cert.certified = flat;
  if (flat) {
    cert.message = cert.extended
                       ? "certified (extended: rectangular Q solved by least squares, outside the square finite-support result)"
                       : "certified: E[H | X, Z] matches E[H0(delta) | X, Z] in every cell";
  } else {
    cert.message = "not certified: E[H | X, Z] differs from E[H0(delta) | X, Z] beyond 3 SE";
  }
  return cert;
}

Certificate certify_discrete_faithfulness(const market::DgpConfig& dgp,
                                          const IndexPriceFunction& H) {
  require(dgp.discrete_index.has_value(), "DGP must carry a discrete index law");
  const auto& law = *dgp.discrete_index;
  const auto population = completeness_rank(law.transition);
  if (population.rank < law.transition.rows()) {
    Certificate cert;
    cert.rank_deficient = true;
    cert.rank = population;
    cert.q = {law.transition, law.support, dgp.x_support};
    cert.message = "cannot certify: the configured transition matrix has rank " +
                   std::to_string(population.rank) + " < " +
                   std::to_string(law.transition.rows()) + ", so completeness fails";
    return cert;
  }
  const auto ds = market::sample_markets(dgp);
  return certify_dataset(ds, dgp.discrete_index->support, dgp.x_support, H);
}

}  // namespace demandid::discrete
