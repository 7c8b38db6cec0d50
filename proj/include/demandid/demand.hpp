#pragma once

#include "demandid/common.hpp"

#include <string>
#include <string_view>
#include <vector>

// Demand maps sigma(d, p) with an outside good, and their inverses in d.
//
// Two families are supported. Under logit, product j has utility
// d_j - alpha * p_j against an outside good with utility 0. Mixed logit
// averages logit shares over a fixed set of consumer types r, each with
// price sensitivity alpha * exp(nu_r) and weight w_r, so sigma stays
// deterministic and exactly invertible.
namespace demandid::demand {

enum class Family { logit, mixed_logit };

std::string_view to_string(Family f);
Family family_from_string(std::string_view s);

struct MixingNode {
  double coefficient = 0.0;  // nu_r: log multiplier on alpha
  double weight = 0.0;
};

struct DemandSpec {
  Family family = Family::logit;
  double alpha = 1.0;
  int J = 1;
  std::vector<MixingNode> mixing_nodes;

  /// Throws InvalidArgument if alpha <= 0, J < 1, or mixing weights do not
  /// sum to one within 1e-12.
  void validate() const;

  // Price sensitivities and weights of the consumer types. Logit has a
  // single type with weight one.
  std::vector<double> type_alphas() const;
  std::vector<double> type_weights() const;
};

DemandSpec logit_spec(int J, double alpha);

/// Mixed logit whose log price-sensitivity multiplier is N(0, sigma^2),
/// discretized with an n-point Gauss-Hermite rule.
DemandSpec mixed_logit_spec(int J, double alpha, double sigma, int n_nodes);

/// Nodes and weights (summing to one) for E[f(nu)], nu ~ N(0, sigma^2).
std::vector<MixingNode> gauss_hermite_nodes(double sigma, int n);

/// Market shares of the J inside goods.
Vec share(const DemandSpec& spec, const Vec& d, const Vec& p);

/// Jacobian of shares with respect to d: entry (j, k) = ds_j / dd_k.
Mat share_jacobian_index(const DemandSpec& spec, const Vec& d, const Vec& p);

/// Own-price derivatives ds_j / dp_j.
Vec own_price_derivative(const DemandSpec& spec, const Vec& d, const Vec& p);

/// Throws InvalidArgument unless every s_j > 0 and sum(s) < 1.
void validate_shares(const Vec& s, int J);

struct InversionOptions {
  double tol = 1e-12;
  int max_iterations = 10000;
  // Berry iterations before switching to damped Newton steps.
  int contraction_iterations = 100;
};

struct InversionResult {
  Vec d;
  double residual = 0.0;  // max |ln s - ln sigma(d, p)|
  int iterations = 0;
};

InversionResult invert_share_detailed(const DemandSpec& spec, const Vec& s,
                                      const Vec& p,
                                      const InversionOptions& opts = {});

/// The index vector d with share(spec, d, p) == s.
Vec invert_share(const DemandSpec& spec, const Vec& s, const Vec& p);

}  // namespace demandid::demand
