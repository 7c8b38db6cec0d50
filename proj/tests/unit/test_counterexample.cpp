#include "demandid/counterexample.hpp"

#include "doctest.h"
#include "support.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>

using namespace demandid;
using namespace demandid::counterexample;

namespace {

CexConfig small_config(long n, std::uint64_t seed) {
  CexConfig cfg;
  cfg.n_per_cell = n;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("normalizing constant matches adaptive quadrature") {
  for (double x : {0.5, 1.0, 1e-3, 1.7}) {
    const double oracle = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        [x](double d) { return std::exp(0.5 * x * x * d * d); }, 1.0, 2.0, 15, 1e-14);
    CHECK(std::abs(inverse_normalizer(x) / oracle - 1.0) < 1e-8);
  }
}

TEST_CASE("index CDF is a proper inverse pair") {
  const IndexCdf cdf(1.0);
  CHECK(cdf.cdf(1.0) == 0.0);
  CHECK(cdf.cdf(2.0) == doctest::Approx(1.0).epsilon(1e-15));
  testing_support::Gen gen(1);
  double last = 0.0;
  for (double d = 1.0; d <= 2.0; d += 0.01) {
    CHECK(cdf.cdf(d) >= last);
    last = cdf.cdf(d);
  }
  for (int k = 0; k < 500; ++k) {
    const double u = gen.uniform(0, 1);
    CHECK(cdf.cdf(cdf.quantile(u)) == doctest::Approx(u).epsilon(1e-9));
  }
  // Density rises with d, so the CDF sits below the uniform one.
  CHECK(cdf.cdf(1.5) < 0.5);
}

TEST_CASE("sampler support, determinism and KS distance") {
  const auto cfg = small_config(40000, 9);
  const auto a = sample_cex(cfg);
  const auto b = sample_cex(cfg);
  CHECK(a.delta == b.delta);
  CHECK(a.P == b.P);
  CHECK(a.rows() == 4 * 40000);
  CHECK(a.delta.minCoeff() >= 1.0);
  CHECK(a.delta.maxCoeff() <= 2.0);

  for (double x : cfg.x_grid) {
    const IndexCdf cdf(x);
    std::vector<double> draws;
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      if (a.X(r) == x) draws.push_back(a.delta(r));
    }
    std::sort(draws.begin(), draws.end());
    const double n = static_cast<double>(draws.size());
    double ks = 0.0;
    for (std::size_t i = 0; i < draws.size(); ++i) {
      const double F = cdf.cdf(draws[i]);
      ks = std::max({ks, std::abs(F - i / n), std::abs(F - (i + 1) / n)});
    }
    CHECK(ks < 1.63 / std::sqrt(n));
  }
}

TEST_CASE("near-zero x gives a uniform index") {
  CexConfig cfg = small_config(50000, 3);
  cfg.x_grid = {1e-6};
  cfg.z_grid = {1.0};
  const auto t = sample_cex(cfg);
  const double se = std::sqrt(1.0 / 12.0 / static_cast<double>(t.rows()));
  CHECK(std::abs(t.delta.mean() - 1.5) < 3 * se);
}

TEST_CASE("indicator is flat in z while price is not") {
  const auto cfg = small_config(50000, 4);
  const auto t = sample_cex(cfg);
  const auto report = faithfulness_failure_test(t, cfg);
  CHECK(report.faithfulness_fails);
  CHECK(report.price_moves);
  for (const auto& fx : report.by_x) {
    CHECK(fx.indicator_flat);
    CHECK(fx.closed_form_agrees);
    CHECK(fx.price_detected);
    // Mean price x E[d | x] z is linear in z.
    const double slope = (fx.price[1].mean - fx.price[0].mean) / (fx.price[1].z - fx.price[0].z);
    const double mean_d = fx.price[0].mean / (fx.x * fx.price[0].z);
    CHECK(slope == doctest::Approx(fx.x * mean_d).epsilon(0.05));
  }
  // The indicator really depends on price.
  auto H = [](double, double p) { return p > 0.0 ? 1.0 : 0.0; };
  CHECK(H(1.5, 1.0) - H(1.5, -1.0) == 1.0);
}

TEST_CASE("single z value per x is rejected") {
  CexConfig cfg = small_config(100, 1);
  cfg.z_grid = {1.0};
  CHECK_THROWS_AS(faithfulness_failure_test(sample_cex(cfg), cfg), InvalidArgument);
  cfg.x_grid = {-1.0};
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("rank diagnostic") {
  const auto t = sample_cex(small_config(50000, 5));
  const auto rank = completeness_diagnostic(t, 2);
  CHECK(rank.columns == 4);
  CHECK(rank.rows == 4);
  CHECK(rank.numerical_rank <= 4);
  CHECK(rank.full_rank);
  CHECK(rank.note.find("not a proof") != std::string::npos);
  for (int c = 0; c < rank.columns; ++c) {
    CHECK(rank.matrix.col(c).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }

  CexConfig dup = small_config(20000, 6);
  dup.x_grid = {1.0};
  dup.z_grid = {1.0, 1.0, 2.0};
  const auto degenerate = completeness_diagnostic(sample_cex(dup), 2);
  CHECK(degenerate.columns == 2);
  CHECK(degenerate.numerical_rank <= 2);
}

TEST_CASE("dataset view keeps the index and prices") {
  const auto t = sample_cex(small_config(100, 2));
  const auto ds = to_dataset(t);
  CHECK(ds.has_oracle);
  CHECK(ds.n_markets() == t.rows());
  CHECK(ds.delta.col(0) == t.delta);
  CHECK(ds.P.col(0) == t.P);
  ds.validate();
}
