#pragma once

#include "demandid/common.hpp"
#include "demandid/demand.hpp"

#include <optional>
#include <string_view>

namespace demandid::pricing {

enum class PriceKind { exogenous, lambda_index, separable, bertrand };

std::string_view to_string(PriceKind k);
PriceKind price_kind_from_string(std::string_view s);

// Price-generating families. Each maps (x, z, d, omega), all length J, to a
// price vector:
//   exogenous     P = z
//   lambda_index  P = m(lambda, d) + omega,  lambda = z + gamma_x * x,
//                 m(lambda, d) = lambda + gamma_delta * d
//   separable     P = f1(x, z) + f2(x, d, omega) + gamma0 * d,
//                 f1 = z + kappa * x^2,  f2 = x .* omega
//   bertrand      Bertrand-Nash prices with marginal cost exp(z + omega)
struct PriceFamily {
  PriceKind kind = PriceKind::exogenous;
  double gamma_x = 0.0;
  double gamma_delta = 0.0;
  double kappa = 0.0;
  double gamma0 = 0.0;
  std::optional<demand::DemandSpec> demand;  // required for bertrand

  void validate() const;
};

struct BertrandOptions {
  double tol = 1e-12;  // FOC residual target for the iteration
  int max_iterations = 10000;
  double damping = 0.5;
  bool check_uniqueness = true;
};

struct BertrandResult {
  Vec prices;
  double residual = 0.0;  // max of the FOC residual and markup gap max-norms
  int iterations = 0;
  bool negative_price = false;
  // Two starting points led to prices differing by more than 1e-6.
  bool start_sensitive = false;
};

/// s_j + (p_j - c_j) * ds_j/dp_j for every product.
Vec foc_residual(const demand::DemandSpec& spec, const Vec& d, const Vec& c,
                 const Vec& p);

BertrandResult bertrand_solve(const demand::DemandSpec& spec, const Vec& d,
                              const Vec& c, const BertrandOptions& opts = {});

/// Single-product-firm Bertrand-Nash prices; FOC residual <= 1e-8.
Vec bertrand_prices(const demand::DemandSpec& spec, const Vec& d, const Vec& c);

/// Prices from a family. bertrand_info, when given, receives the solver
/// result for the bertrand family.
Vec price_dgp(const PriceFamily& family, const Vec& x, const Vec& z,
              const Vec& d, const Vec& omega,
              BertrandResult* bertrand_info = nullptr);

}  // namespace demandid::pricing
