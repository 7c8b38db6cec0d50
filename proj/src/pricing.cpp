#include "demandid/pricing.hpp"

namespace demandid::pricing {

std::string_view to_string(PriceKind k) {
  switch (k) {
    case PriceKind::exogenous: return "exogenous";
    case PriceKind::lambda_index: return "lambda_index";
    case PriceKind::separable: return "separable";
    case PriceKind::bertrand: return "bertrand";
  }
  return "unknown";
}

PriceKind price_kind_from_string(std::string_view s) {
  if (s == "exogenous") return PriceKind::exogenous;
  if (s == "lambda_index") return PriceKind::lambda_index;
  if (s == "separable") return PriceKind::separable;
  if (s == "bertrand") return PriceKind::bertrand;
  throw InvalidArgument("unknown price family '" + std::string(s) + "'");
}

void PriceFamily::validate() const {
  require(std::isfinite(gamma_x) && std::isfinite(gamma_delta) &&
              std::isfinite(kappa) && std::isfinite(gamma0),
          "price family parameters must be finite");
  if (kind == PriceKind::bertrand) {
    require(demand.has_value(), "bertrand family requires a demand spec");
    demand->validate();
  }
}

Vec foc_residual(const demand::DemandSpec& spec, const Vec& d, const Vec& c,
                 const Vec& p) {
  const Vec s = demand::share(spec, d, p);
  const Vec ds = demand::own_price_derivative(spec, d, p);
  return s + (p - c).cwiseProduct(ds);
}

namespace {

// Markup map p -> c + s / (-ds/dp).
Vec markup_map(const demand::DemandSpec& spec, const Vec& d, const Vec& c,
               const Vec& p) {
  const Vec s = demand::share(spec, d, p);
  const Vec ds = demand::own_price_derivative(spec, d, p);
  return c + s.cwiseQuotient(-ds);
}

double max_abs(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0; }

// The FOC residual scales with the share, so tiny shares can satisfy it far
// from the solution. Also require the markup gap, which is in price units.
double convergence_gap(const demand::DemandSpec& spec, const Vec& d,
                       const Vec& c, const Vec& p) {
  return std::max(max_abs(foc_residual(spec, d, c, p)),
                  max_abs(markup_map(spec, d, c, p) - p));
}

// Root of g(p_j) = p_j - c_j - s_j / (-ds_j/dp_j) with the other prices held
// fixed. g is increasing for logit-type demand.
double best_response(const demand::DemandSpec& spec, const Vec& d,
                     const Vec& c, Vec p, int j) {
  auto g = [&](double pj) {
    p(j) = pj;
    const Vec s = demand::share(spec, d, p);
    const Vec ds = demand::own_price_derivative(spec, d, p);
    return pj - c(j) - s(j) / (-ds(j));
  };
  double min_alpha = spec.alpha;
  for (double a : spec.type_alphas()) min_alpha = std::min(min_alpha, a);
  double lo = c(j);
  double hi = c(j) + 1.0 / min_alpha + 1.0;
  double step = 1.0 / min_alpha;
  for (int k = 0; k < 200 && g(hi) < 0.0; ++k) {
    lo = hi;
    hi += step;
    step *= 2.0;
  }
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (g(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

BertrandResult solve_from(const demand::DemandSpec& spec, const Vec& d,
                          const Vec& c, Vec p, const BertrandOptions& opts) {
  double damping = opts.damping;
  double residual = convergence_gap(spec, d, c, p);
  double last_step = std::numeric_limits<double>::infinity();
  int it = 0;
  while (residual > opts.tol && it < opts.max_iterations) {
    ++it;
    const Vec target = markup_map(spec, d, c, p);
    const Vec step = damping * (target - p);
    const double step_norm = max_abs(step);
    if (step_norm > last_step && damping > 1e-3) damping *= 0.5;
    last_step = step_norm;
    p += step;
    if (!p.allFinite()) break;
    residual = convergence_gap(spec, d, c, p);
  }
  if (p.allFinite() && residual <= opts.tol) return {p, residual, it};

  // Fallback: bisection on each product's first-order condition, cycled
  // Gauss-Seidel style; a single pass is exact for J = 1.
  p = c.array() + 1.0 / spec.alpha;
  for (int sweep = 0; sweep < opts.max_iterations; ++sweep) {
    ++it;
    for (int j = 0; j < spec.J; ++j) p(j) = best_response(spec, d, c, p, j);
    residual = convergence_gap(spec, d, c, p);
    if (residual <= opts.tol || spec.J == 1) break;
  }
  return {p, residual, it};
}

}  // namespace

BertrandResult bertrand_solve(const demand::DemandSpec& spec, const Vec& d,
                              const Vec& c, const BertrandOptions& opts) {
  spec.validate();
  require(d.size() == spec.J && c.size() == spec.J,
          "index and cost vectors must have length J");
  require(d.allFinite() && c.allFinite(), "non-finite index or cost");

  const Vec start = c.array() + 1.0 / spec.alpha;
  BertrandResult result = solve_from(spec, d, c, start, opts);
  if (result.residual > 1e-8 || !result.prices.allFinite()) {
    throw ConvergenceError("Bertrand-Nash solver did not converge",
                           result.residual, result.iterations);
  }
  result.negative_price = result.prices.minCoeff() < 0.0;
  if (opts.check_uniqueness) {
    const Vec alt_start = c.array() + 5.0 / spec.alpha;
    const BertrandResult alt = solve_from(spec, d, c, alt_start, opts);
    result.start_sensitive =
        alt.residual <= 1e-8 &&
        (alt.prices - result.prices).cwiseAbs().maxCoeff() > 1e-6;
  }
  return result;
}

Vec bertrand_prices(const demand::DemandSpec& spec, const Vec& d,
                    const Vec& c) {
  return bertrand_solve(spec, d, c).prices;
}

Vec price_dgp(const PriceFamily& family, const Vec& x, const Vec& z,
              const Vec& d, const Vec& omega, BertrandResult* bertrand_info) {
  const auto J = z.size();
  require(x.size() == J && d.size() == J && omega.size() == J,
          "x, z, d, omega must share length J");
  switch (family.kind) {
    case PriceKind::exogenous:
      return z;
    case PriceKind::lambda_index: {
      const Vec lambda = z + family.gamma_x * x;
      return lambda + family.gamma_delta * d + omega;
    }
    case PriceKind::separable: {
      const Vec f1 = z + family.kappa * x.cwiseProduct(x);
      const Vec f2 = x.cwiseProduct(omega);
      return f1 + f2 + family.gamma0 * d;
    }
    case PriceKind::bertrand: {
      require(family.demand.has_value(), "bertrand family requires demand");
      require(family.demand->J == J, "demand spec J does not match");
      const Vec cost = (z + omega).array().exp().matrix();
      BertrandResult r = bertrand_solve(*family.demand, d, cost);
      if (bertrand_info) *bertrand_info = r;
      return r.prices;
    }
  }
  throw InvalidArgument("unknown price family");
}

}  // namespace demandid::pricing
