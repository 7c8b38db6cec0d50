#include "demandid/deconvolution.hpp"

#include "doctest.h"
#include "support.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>

#include <complex>
#include <numbers>
#include <sstream>

using namespace demandid;
using namespace demandid::deconvolution;

namespace {

const OperatorGrid& standard_grid() {
  static const OperatorGrid grid(40.0, 4096, 3.0);
  return grid;
}

Vec bump(const OperatorGrid& grid, double center = 0.0, double width = 1.0) {
  return (-((grid.nodes().array() - center) / width).square()).exp().matrix();
}

// K_1 from its integral representation int_0^inf exp(-x cosh t) cosh t dt.
double bessel_k1(double x) {
  boost::math::quadrature::exp_sinh<double> integrator;
  return integrator.integrate(
      [x](double t) {
        const double c = std::cosh(t);
        return x * c > 700.0 ? 0.0 : std::exp(-x * c) * c;
      },
      1e-14);
}

// Continuous transform h * sum u(x_i) exp(-i w x_i), evaluated term by term.
std::complex<double> direct_transform(const OperatorGrid& grid, const Vec& u, double w) {
  std::complex<double> acc = 0.0;
  for (int i = 0; i < grid.N(); ++i) acc += u(i) * std::polar(1.0, -w * grid.nodes()(i));
  return grid.spacing() * acc;
}

}  // namespace

TEST_CASE("kernel matches the Bessel closed form") {
  const auto& grid = standard_grid();
  CHECK(grid.q_hat()(0) == 1.0);
  CHECK(grid.q_hat_at(0.0) == 1.0);

  // Normalizing constant: q integrates to one, so theta = 1 / int |x| K1(|x|) dx.
  boost::math::quadrature::exp_sinh<double> outer;
  const double half_mass = outer.integrate([](double x) { return x * bessel_k1(x); }, 1e-12);
  const double theta = 1.0 / (2.0 * half_mass);
  CHECK(theta == doctest::Approx(1.0 / std::numbers::pi).epsilon(1e-9));
  for (double x : {0.5, 1.0, 2.0}) {
    CHECK(std::abs(grid.q_at(x) - theta * x * bessel_k1(x)) < 1e-4);
    CHECK(std::abs(grid.q_at(-x) - grid.q_at(x)) < 1e-12);
  }
}

TEST_CASE("kernel samples are symmetric, nonnegative and unit mass") {
  const auto& grid = standard_grid();
  const int N = grid.N();
  for (int i = 1; i < N; ++i) CHECK(std::abs(grid.q()(i) - grid.q()(N - i)) < 1e-12);
  CHECK(grid.q().minCoeff() >= -1e-9);
  CHECK(grid.q().sum() * grid.spacing() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("grid validation") {
  CHECK_THROWS_AS(make_grid(40.0, 1000, 3.0), InvalidArgument);
  CHECK_THROWS_AS(make_grid(40.0, 4096, 2.0), InvalidArgument);
  CHECK_THROWS_AS(make_grid(-1.0, 4096, 3.0), InvalidArgument);
  CHECK_THROWS_AS(make_grid(4.0, 4096, 3.0), InvalidArgument);
}

TEST_CASE("homoskedastic operator") {
  const auto& grid = standard_grid();
  const int N = grid.N();
  CHECK(apply_T0(grid, Vec::Zero(N)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(solve_T0(grid, Vec::Zero(N)).cwiseAbs().maxCoeff() == 0.0);

  const Vec qq = apply_T0(grid, grid.q());
  for (int k : {0, 1, 5, 40, 300, 2047, 2048, 3000}) {
    const double w = grid.frequencies()(k);
    CHECK(std::abs(direct_transform(grid, qq, w) - std::pow(grid.q_hat()(k), 2)) < 1e-12);
  }
  CHECK((solve_T0(grid, qq) - grid.q()).cwiseAbs().maxCoeff() < 1e-8);

  const Vec u = bump(grid);
  const auto applied = apply_T0_checked(grid, u);
  CHECK_FALSE(applied.boundary_warning);
  CHECK(applied.k.sum() * grid.spacing() == doctest::Approx(u.sum() * grid.spacing()).epsilon(1e-8));
  CHECK((solve_T0(grid, applied.k) - u).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(apply_T0_checked(grid, bump(grid, 35.0)).boundary_warning);

  testing_support::Gen gen(1);
  for (int trial = 0; trial < 5; ++trial) {
    Vec k = bump(grid, gen.uniform(-10, 10), gen.uniform(0.5, 3)) * gen.uniform(-2, 2);
    CHECK((apply_T0(grid, solve_T0(grid, k)) - k).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("scaled operator reductions") {
  const auto& grid = standard_grid();
  const int N = grid.N();
  const auto one = ScaleField::constant_one(grid);
  CHECK((apply_T(grid, one, bump(grid)) - apply_T0(grid, bump(grid))).cwiseAbs().maxCoeff() < 1e-8);
  const auto field = ScaleField::bump(grid, 0.3);
  CHECK(field.sup_dev == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(field.int_dev == doctest::Approx(0.3 * std::sqrt(std::numbers::pi)).epsilon(1e-9));
  CHECK(apply_T(grid, field, Vec::Zero(N)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((apply_T(grid, field, Vec::Ones(N)).array() - 1.0).abs().maxCoeff() < 1e-6);
}

TEST_CASE("scaled operator agrees with direct quadrature of the scaled kernel") {
  // Off-grid check of one output node by trapezoid over t with the closed-form kernel.
  const auto& grid = standard_grid();
  const auto field = ScaleField::bump(grid, 0.3);
  const Vec u = bump(grid, 0.5, 1.5);
  const Vec k = apply_T(grid, field, u);
  const int i = grid.N() / 2 + 10;
  const double sig = field.sigma(i), x = grid.nodes()(i);
  boost::math::quadrature::exp_sinh<double> integrator;
  const double theta = 1.0 / std::numbers::pi;
  auto kernel = [&](double z) {
    const double a = std::abs(z) / sig;
    return a == 0.0 ? theta / sig : theta * a * bessel_k1(a) / sig;
  };
  double acc = 0.0;
  const double step = 0.01;
  for (double t = -12.0; t <= 13.0 + 1e-12; t += step) {
    acc += kernel(x - t) * std::exp(-std::pow((t - 0.5) / 1.5, 2)) * step;
  }
  CHECK(k(i) == doctest::Approx(acc).epsilon(1e-4));
}

TEST_CASE("contraction diagnostic") {
  const auto& grid = standard_grid();
  CHECK(contraction_diagnostic(grid, ScaleField::constant_one(grid)) == 0.0);
  const double e1 = contraction_diagnostic(grid, ScaleField::bump(grid, 0.01));
  const double e2 = contraction_diagnostic(grid, ScaleField::bump(grid, 0.02));
  CHECK(e1 > 0.0);
  const double ratio = e1 / e2;  // near 1/2 for a first-order effect
  CHECK(ratio >= 0.4);
  CHECK(ratio <= 0.6);
  const auto profile = contraction_profile(grid, ScaleField::bump(grid, 0.01));
  CHECK(profile.profile.minCoeff() >= 0.0);
  CHECK(profile.value == profile.profile.maxCoeff());
}

TEST_CASE("diagnostic is monotone in the bump height and refusal flips once") {
  const auto& grid = standard_grid();
  const Vec k = apply_T0(grid, bump(grid));
  double last = 0.0;
  bool refused = false;
  for (double psi : {0.005, 0.01, 0.015, 0.02, 0.03, 0.04}) {
    const auto field = ScaleField::bump(grid, psi);
    const double est = contraction_diagnostic(grid, field);
    CHECK(est > last);
    last = est;
    bool now_refused = false;
    try {
      neumann_solve(grid, field, k);
    } catch (const ContractionRefusal& e) {
      now_refused = true;
      CHECK(e.value() == doctest::Approx(est).epsilon(1e-12));
    }
    CHECK(now_refused == (est >= 1.0));
    if (refused) CHECK(now_refused);
    refused = now_refused;
  }
  CHECK(refused);
}

TEST_CASE("Neumann series") {
  const auto& grid = standard_grid();
  const Vec u = bump(grid);

  const auto one = ScaleField::constant_one(grid);
  const auto plain = neumann_solve(grid, one, apply_T0(grid, u));
  CHECK(plain.diagnostics.terms == 1);
  CHECK(plain.diagnostics.contraction == 0.0);
  CHECK((plain.u - solve_T0(grid, apply_T0(grid, u))).cwiseAbs().maxCoeff() == 0.0);

  const auto field = ScaleField::bump(grid, 0.01);
  const auto sol = neumann_solve(grid, field, apply_T(grid, field, u));
  const auto& d = sol.diagnostics;
  CHECK(d.contraction < 0.5);
  CHECK((sol.u - u).cwiseAbs().maxCoeff() < 1e-5);
  CHECK(d.residual < 1e-6);
  REQUIRE(d.correction_norms.size() >= 3);
  for (std::size_t i = 1; i < d.correction_norms.size(); ++i) {
    CHECK(d.correction_norms[i] <= (d.contraction + 0.1) * d.correction_norms[i - 1]);
  }
}

TEST_CASE("manufactured solutions") {
  const auto& grid = standard_grid();
  const auto field = ScaleField::bump(grid, 0.01);
  testing_support::Gen gen(4);
  for (int trial = 0; trial < 3; ++trial) {
    const Vec u = bump(grid, gen.uniform(-5, 5), gen.uniform(0.7, 2.0)) -
                  0.5 * bump(grid, gen.uniform(-5, 5), gen.uniform(0.7, 2.0));
    const auto sol = neumann_solve(grid, field, apply_T(grid, field, u));
    CHECK((sol.u - u).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("operators are linear") {
  const auto& grid = standard_grid();
  const auto field = ScaleField::bump(grid, 0.01);
  testing_support::Gen gen(5);
  const Vec a = bump(grid, gen.uniform(-3, 3)), b = bump(grid, gen.uniform(-3, 3), 2.0);
  const double ca = gen.uniform(-2, 2), cb = gen.uniform(-2, 2);
  const Vec mix = ca * a + cb * b;
  auto check = [&](const char* what, auto op, double tol = 1e-10) {
    const Vec lhs = op(mix), rhs = ca * op(a) + cb * op(b);
    INFO(std::string(what), ": max |rhs| = ", rhs.cwiseAbs().maxCoeff());
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= tol * std::max(1.0, rhs.cwiseAbs().maxCoeff()));
  };
  check("apply_T0", [&](const Vec& v) { return apply_T0(grid, v); });
  check("solve_T0", [&](const Vec& v) { return solve_T0(grid, v); });
  check("apply_T", [&](const Vec& v) { return apply_T(grid, field, v); });
  check("apply_T - apply_T0", [&](const Vec& v) { return Vec(apply_T(grid, field, v) - apply_T0(grid, v)); });
  NeumannOptions tight;
  tight.tol = 1e-14;
  // Each term passes through solve_T0, whose symbol reaches ~4e6 at the top
  // frequency of this grid, so rounding compounds over the series.
  check("neumann_solve", [&](const Vec& v) { return neumann_solve(grid, field, v, tight).u; },
        1e-8);
}

TEST_CASE("grid function text round trip") {
  const auto& grid = standard_grid();
  testing_support::Gen gen(6);
  const Vec v = gen.vec(grid.N(), -1, 1);
  std::stringstream buf;
  write_grid_function(buf, grid, v);
  CHECK(read_grid_function(buf, grid) == v);
  std::stringstream bad("0,1\n");
  CHECK_THROWS_AS(read_grid_function(bad, grid), InvalidArgument);
}
