#include "demandid/pricing.hpp"

#include "doctest.h"
#include "support.hpp"

#include <boost/math/tools/roots.hpp>

using namespace demandid;
using namespace demandid::pricing;

namespace {

// Scalar logit FOC for one product: p = c + 1 / (alpha (1 - s(p))).
double single_product_oracle(double d, double c, double alpha) {
  auto g = [&](double p) {
    const double s = std::exp(d - alpha * p) / (1.0 + std::exp(d - alpha * p));
    return p - c - 1.0 / (alpha * (1.0 - s));
  };
  boost::math::tools::eps_tolerance<double> tol(52);
  std::uintmax_t it = 200;
  auto [lo, hi] = boost::math::tools::bisect(g, c, c + 1.0 / alpha + 50.0, tol, it);
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("single-product benchmark price") {
  auto spec = demand::logit_spec(1, 1.0);
  const auto res = bertrand_solve(spec, Vec::Zero(1), Vec::Ones(1));
  CHECK(res.residual <= 1e-8);
  CHECK(res.prices(0) == doctest::Approx(2.1200).epsilon(1e-4));
  CHECK(std::abs(res.prices(0) - single_product_oracle(0.0, 1.0, 1.0)) < 1e-6);
  CHECK_FALSE(res.start_sensitive);
}

TEST_CASE("symmetric firms price symmetrically") {
  auto spec = demand::logit_spec(2, 1.0);
  Vec p = bertrand_prices(spec, Vec::Ones(2), Vec::Constant(2, 2.0));
  CHECK(std::abs(p(0) - p(1)) < 1e-10);
}

TEST_CASE("FOC residual and markup identity on random instances") {
  testing_support::Gen gen(55);
  for (int J : {1, 2, 5}) {
    for (int trial = 0; trial < 40; ++trial) {
      const double alpha = gen.uniform(0.5, 2.0);
      auto spec = demand::logit_spec(J, alpha);
      Vec d = gen.vec(J, -3, 3), c = gen.vec(J, 0, 4);
      const auto res = bertrand_solve(spec, d, c);
      CHECK(foc_residual(spec, d, c, res.prices).cwiseAbs().maxCoeff() <= 1e-8);
      Vec s = demand::share(spec, d, res.prices);
      for (int j = 0; j < J; ++j) {
        CHECK(std::abs(res.prices(j) - c(j) - 1.0 / (alpha * (1.0 - s(j)))) < 1e-6);
      }
      CHECK_FALSE(res.start_sensitive);
    }
  }
}

TEST_CASE("mixed logit equilibrium satisfies the FOC") {
  testing_support::Gen gen(8);
  auto spec = demand::mixed_logit_spec(3, 1.0, 0.5, 7);
  for (int trial = 0; trial < 20; ++trial) {
    Vec d = gen.vec(3, -2, 2), c = gen.vec(3, 0, 3);
    const auto res = bertrand_solve(spec, d, c);
    CHECK(foc_residual(spec, d, c, res.prices).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("high-cost markets converge in price units") {
  // Tiny shares make the FOC residual small long before prices settle.
  auto spec = demand::logit_spec(2, 1.0);
  Vec d(2), c(2);
  d << 0.0, 1.0;
  c << 12.0, 9.0;
  const auto res = bertrand_solve(spec, d, c);
  Vec s = demand::share(spec, d, res.prices);
  for (int j = 0; j < 2; ++j) {
    CHECK(std::abs(res.prices(j) - c(j) - 1.0 / (1.0 - s(j))) < 1e-9);
  }
}

TEST_CASE("price families") {
  PriceFamily exo;
  Vec z(2);
  z << 1.5, -0.3;
  CHECK(price_dgp(exo, Vec::Zero(2), z, Vec::Zero(2), Vec::Zero(2)) == z);

  PriceFamily lam{PriceKind::lambda_index};
  CHECK(price_dgp(lam, Vec::Ones(2), Vec::Constant(2, 2.0), Vec::Ones(2), Vec::Zero(2)) ==
        Vec::Constant(2, 2.0));

  PriceFamily sep{PriceKind::separable};
  sep.kappa = 1.0;
  Vec x1 = Vec::Ones(1), z1 = Vec::Constant(1, 0.5), w1 = Vec::Constant(1, 0.25);
  CHECK(price_dgp(sep, x1, z1, Vec::Zero(1), w1)(0) == doctest::Approx(1.75).epsilon(1e-15));

  PriceFamily bert{PriceKind::bertrand};
  bert.demand = demand::logit_spec(1, 1.0);
  // C = exp(z + omega) = 1 reproduces the benchmark.
  CHECK(price_dgp(bert, Vec::Zero(1), Vec::Zero(1), Vec::Zero(1), Vec::Zero(1))(0) ==
        doctest::Approx(single_product_oracle(0.0, 1.0, 1.0)).epsilon(1e-9));
}

TEST_CASE("lambda index: equal lambda gives equal prices") {
  testing_support::Gen gen(9);
  PriceFamily lam{PriceKind::lambda_index};
  lam.gamma_x = 0.7;
  lam.gamma_delta = -0.4;
  for (int trial = 0; trial < 100; ++trial) {
    Vec x = gen.vec(2, -2, 2), z = gen.vec(2, -2, 2), d = gen.vec(2, -2, 2), w = gen.vec(2, -1, 1);
    Vec x2 = gen.vec(2, -2, 2);
    Vec z2 = z + lam.gamma_x * (x - x2);  // same lambda = z + gamma_x x
    CHECK((price_dgp(lam, x, z, d, w) - price_dgp(lam, x2, z2, d, w)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("separable: price Jacobian in z does not depend on index or shock") {
  testing_support::Gen gen(10);
  PriceFamily sep{PriceKind::separable};
  sep.kappa = 0.8;
  sep.gamma0 = 0.3;
  Vec x = gen.vec(2, -1, 1), z = gen.vec(2, -1, 1);
  auto jac = [&](const Vec& d, const Vec& w) {
    Mat D(2, 2);
    for (int k = 0; k < 2; ++k) {
      Vec up = z, dn = z;
      up(k) += 1e-6;
      dn(k) -= 1e-6;
      D.col(k) = (price_dgp(sep, x, up, d, w) - price_dgp(sep, x, dn, d, w)) / 2e-6;
    }
    return D;
  };
  const Mat ref = jac(Vec::Zero(2), Vec::Zero(2));
  CHECK((ref - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-8);
  for (int trial = 0; trial < 20; ++trial) {
    CHECK((jac(gen.vec(2, -3, 3), gen.vec(2, -2, 2)) - ref).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("invalid pricing inputs") {
  PriceFamily bert{PriceKind::bertrand};
  CHECK_THROWS_AS(bert.validate(), InvalidArgument);
  CHECK_THROWS_AS(price_kind_from_string("cournot"), InvalidArgument);
  auto spec = demand::logit_spec(2, 1.0);
  CHECK_THROWS_AS(bertrand_prices(spec, Vec::Zero(1), Vec::Zero(2)), InvalidArgument);
}
