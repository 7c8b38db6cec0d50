#pragma once

#include "demandid/common.hpp"
#include "demandid/demand.hpp"
#include "demandid/market.hpp"
#include "demandid/moments.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

// Candidate inverse demand functions h(s, p), their screening against
// recentered-instrument moments, and price counterfactuals
// C(s, p, p') = h^{-1}(h(s, p), p').
namespace demandid::screening {

/// Strictly increasing coordinatewise map with an evaluable inverse.
struct Transform {
  std::string name;
  std::function<double(double)> forward;
  std::function<double(double)> inverse;
  bool affine = false;
};

Transform affine_transform(double a, double b);
/// t -> t^3 + t, inverted by bisection to 1e-12.
Transform cubic_transform();
Transform make_transform(const std::string& name, std::function<double(double)> forward,
                         std::function<double(double)> inverse);

class CandidateInverse {
 public:
  enum class Kind { logit_inverse, demand_inverse, transformed, custom };
  using Eval = std::function<Vec(const Vec& s, const Vec& p)>;
  using InverseEval = std::function<Vec(const Vec& v, const Vec& p)>;

  /// ln s - ln s0 + alpha * p.
  static CandidateInverse logit_inverse(int J, double alpha);
  /// The exact inverse of a demand spec (logit or mixed logit).
  static CandidateInverse demand_inverse(const demand::DemandSpec& spec);
  /// T applied coordinatewise to base.
  static CandidateInverse transformed(const CandidateInverse& base, const Transform& T);
  static CandidateInverse custom(std::string id, int J, Eval h, InverseEval h_inverse);

  Vec evaluate(const Vec& s, const Vec& p) const { return h_(s, p); }
  Vec invert(const Vec& v, const Vec& p) const { return h_inverse_(v, p); }

  Kind kind() const noexcept { return kind_; }
  const std::string& id() const noexcept { return id_; }
  int J() const noexcept { return J_; }

 private:
  CandidateInverse(Kind kind, std::string id, int J, Eval h, InverseEval h_inverse);
  /// Checks h^{-1}(h(s, p), p) = s within 1e-8 at 100 random probes.
  void check_round_trip() const;

  Kind kind_;
  std::string id_;
  int J_;
  Eval h_;
  InverseEval h_inverse_;
};

/// Row-wise h(S_i, P_i); throws InvalidArgument naming the failing market.
Mat residuals(const market::MarketDataset& ds, const CandidateInverse& cand);

/// Default battery plus the self-instrument Ê[h | X, Z], all recentered on X
/// cells, tested with moment_test.
moments::MomentReport screen(const market::MarketDataset& ds, const CandidateInverse& cand,
                             double threshold = 4.0);

struct CounterfactualResult {
  Vec s_prime;
  std::string candidate;
  Vec p;
  Vec p_prime;
};

CounterfactualResult counterfactual(const CandidateInverse& cand, const Vec& s,
                                    const Vec& p, const Vec& p_prime);

/// Max over probes and transforms of ||C_T(s, p, p') - C(s, p, p')||_inf.
/// Probes draw (s, p) from a random dataset row and p' from another row.
double invariance_audit(const market::MarketDataset& ds, const CandidateInverse& cand,
                        const std::vector<Transform>& transforms, int n_probes = 1000,
                        std::uint64_t seed = 0);

/// Max ||C(S_i, P_i, p') - share(spec, delta_i, p')||_inf over probes, using
/// the latent delta column.
double oracle_counterfactual_error(const market::MarketDataset& ds,
                                   const CandidateInverse& cand,
                                   const demand::DemandSpec& spec, int n_probes = 1000,
                                   std::uint64_t seed = 0);

using IndexPriceFunction = std::function<Vec(const Vec& delta, const Vec& p)>;

struct FlatnessCell {
  Vec x;
  Vec difference;  // Ê[H | X, Z=z] - Ê[H | X, Z=z0]
  Vec se;
  long n_z = 0;
  long n_z0 = 0;
};

/// Per shared X cell, the difference of Ê[H(delta, P) | X] between a
/// dataset drawn at Z = z and one drawn at Z = z0. Requires oracle columns.
std::vector<FlatnessCell> flatness_probe(const market::MarketDataset& at_z,
                                         const market::MarketDataset& at_z0,
                                         const IndexPriceFunction& H);

}  // namespace demandid::screening
