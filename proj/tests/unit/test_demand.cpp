#include "demandid/demand.hpp"

#include "doctest.h"
#include "support.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

using namespace demandid;
using namespace demandid::demand;

namespace {

// Logit shares written out directly from the closed form.
Vec logit_oracle(const Vec& d, const Vec& p, double alpha) {
  Vec e = (d - alpha * p).array().exp();
  return e / (1.0 + e.sum());
}

}  // namespace

TEST_CASE("logit share closed-form values") {
  auto one = logit_spec(1, 1.0);
  CHECK(share(one, Vec::Zero(1), Vec::Zero(1))(0) == doctest::Approx(0.5).epsilon(1e-15));

  auto two = logit_spec(2, 1.0);
  Vec s = share(two, Vec::Zero(2), Vec::Zero(2));
  CHECK(s(0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(s(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  auto half = logit_spec(2, 0.5);
  Vec d(2), p(2);
  d << 1.0, 0.0;
  p << 1.0, 2.0;
  Vec got = share(half, d, p);
  // e^0.5 / (1 + e^0.5 + e^-1) and e^-1 / (1 + e^0.5 + e^-1)
  CHECK(got(0) == doctest::Approx(0.54656).epsilon(1e-5));
  CHECK(got(1) == doctest::Approx(0.12196).epsilon(1e-4));
  CHECK((got - logit_oracle(d, p, 0.5)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("logit closed-form inversion") {
  auto spec = logit_spec(2, 1.0);
  Vec s(2), p(2);
  s << 0.5, 0.25;
  p << 1.0, 1.0;
  Vec d = invert_share(spec, s, p);
  CHECK(d(0) == doctest::Approx(std::log(2.0) + 1.0).epsilon(1e-14));
  CHECK(d(1) == doctest::Approx(1.0).epsilon(1e-14));

  Vec origin = invert_share(spec, share(spec, Vec::Zero(2), Vec::Zero(2)), Vec::Zero(2));
  CHECK(origin.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("mixed logit matches quadrature of the mixing integral") {
  // Mixed shares integrate logit shares over alpha * exp(sigma * t), t ~ N(0,1).
  const double alpha = 1.3, sigma = 0.4;
  auto spec = mixed_logit_spec(2, alpha, sigma, 24);
  Vec d(2), p(2);
  d << 0.7, -0.2;
  p << 1.1, 0.4;
  Vec got = share(spec, d, p);
  for (int j = 0; j < 2; ++j) {
    auto integrand = [&](double t) {
      const double a = alpha * std::exp(sigma * t);
      return logit_oracle(d, p, a)(j) * std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI);
    };
    const double oracle =
        boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, -12.0, 12.0, 10, 1e-14);
    CHECK(got(j) == doctest::Approx(oracle).epsilon(1e-10));
  }
}

TEST_CASE("gauss-hermite nodes integrate low moments exactly") {
  const auto nodes = gauss_hermite_nodes(0.5, 7);
  double w = 0, m1 = 0, m2 = 0, m4 = 0;
  for (const auto& n : nodes) {
    w += n.weight;
    m1 += n.weight * n.coefficient;
    m2 += n.weight * n.coefficient * n.coefficient;
    m4 += n.weight * std::pow(n.coefficient, 4);
  }
  CHECK(w == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(m1) < 1e-14);
  CHECK(m2 == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(m4 == doctest::Approx(3 * 0.0625).epsilon(1e-12));
}

TEST_CASE("round trip property, logit and mixed logit") {
  testing_support::Gen gen(101);
  for (int J : {1, 2, 5}) {
    const std::vector<DemandSpec> specs{logit_spec(J, 1.0), mixed_logit_spec(J, 0.8, 0.5, 7)};
    for (const auto& spec : specs) {
      for (int trial = 0; trial < 200; ++trial) {
        Vec d = gen.vec(J, -5, 5), p = gen.vec(J, -5, 5);
        Vec s = share(spec, d, p);
        Vec back = invert_share(spec, s, p);
        REQUIRE((back - d).cwiseAbs().maxCoeff() < 1e-8);
      }
    }
  }
}

TEST_CASE("inversion reproduces shares") {
  testing_support::Gen gen(7);
  auto spec = mixed_logit_spec(3, 1.0, 0.7, 9);
  for (int trial = 0; trial < 100; ++trial) {
    Vec s = gen.shares(3), p = gen.vec(3, -2, 3);
    auto res = invert_share_detailed(spec, s, p);
    CHECK((share(spec, res.d, p) - s).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("shares are interior and increasing in own index") {
  testing_support::Gen gen(3);
  auto spec = mixed_logit_spec(3, 1.2, 0.3, 5);
  for (int trial = 0; trial < 200; ++trial) {
    Vec d = gen.vec(3, -5, 5), p = gen.vec(3, -5, 5);
    Vec s = share(spec, d, p);
    CHECK(s.minCoeff() > 0.0);
    CHECK(s.sum() < 1.0);
    for (int j = 0; j < 3; ++j) {
      Vec up = d, dn = d;
      up(j) += 1e-5;
      dn(j) -= 1e-5;
      CHECK((share(spec, up, p)(j) - share(spec, dn, p)(j)) / 2e-5 > 0.0);
    }
  }
}

TEST_CASE("analytic derivatives agree with finite differences") {
  testing_support::Gen gen(17);
  auto spec = mixed_logit_spec(2, 0.9, 0.4, 7);
  Vec d = gen.vec(2, -1, 1), p = gen.vec(2, 0, 2);
  Mat jac = share_jacobian_index(spec, d, p);
  Vec own = own_price_derivative(spec, d, p);
  for (int k = 0; k < 2; ++k) {
    Vec up = d, dn = d;
    up(k) += 1e-6;
    dn(k) -= 1e-6;
    Vec col = (share(spec, up, p) - share(spec, dn, p)) / 2e-6;
    CHECK((jac.col(k) - col).cwiseAbs().maxCoeff() < 1e-8);
    Vec pu = p, pd = p;
    pu(k) += 1e-6;
    pd(k) -= 1e-6;
    CHECK(own(k) == doctest::Approx((share(spec, d, pu)(k) - share(spec, d, pd)(k)) / 2e-6).epsilon(1e-6));
  }
}

TEST_CASE("invalid inputs are rejected") {
  auto spec = logit_spec(2, 1.0);
  Vec bad(2);
  bad << 0.6, 0.5;
  CHECK_THROWS_AS(invert_share(spec, bad, Vec::Zero(2)), InvalidArgument);
  bad << 0.0, 0.5;
  CHECK_THROWS_AS(invert_share(spec, bad, Vec::Zero(2)), InvalidArgument);
  CHECK_THROWS_AS(share(spec, Vec::Zero(3), Vec::Zero(2)), InvalidArgument);
  Vec nan = Vec::Zero(2);
  nan(0) = std::nan("");
  CHECK_THROWS_AS(share(spec, nan, Vec::Zero(2)), InvalidArgument);
  CHECK_THROWS_AS(logit_spec(2, -1.0), InvalidArgument);
  CHECK_THROWS_AS(family_from_string("probit"), InvalidArgument);
}

TEST_CASE("non-convergent inversion reports residual and iterations") {
  auto spec = mixed_logit_spec(2, 1.0, 0.5, 5);
  InversionOptions opts;
  opts.max_iterations = 1;
  opts.contraction_iterations = 1;
  Vec s(2);
  s << 0.3, 0.2;
  try {
    invert_share_detailed(spec, s, Vec::Ones(2), opts);
    FAIL("expected a convergence error");
  } catch (const ConvergenceError& e) {
    CHECK(e.iterations() >= 1);
    CHECK(e.residual() > 0.0);
  }
}
