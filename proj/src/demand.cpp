#include "demandid/demand.hpp"

#include <Eigen/Eigenvalues>

#include <numeric>

namespace demandid::demand {

std::string_view to_string(Family f) {
  return f == Family::logit ? "logit" : "mixed_logit";
}

Family family_from_string(std::string_view s) {
  if (s == "logit") return Family::logit;
  if (s == "mixed_logit") return Family::mixed_logit;
  throw InvalidArgument("unknown demand family '" + std::string(s) + "'");
}

void DemandSpec::validate() const {
  require(std::isfinite(alpha) && alpha > 0.0, "alpha must be positive");
  require(J >= 1, "J must be at least 1");
  if (family == Family::mixed_logit) {
    require(!mixing_nodes.empty(), "mixed_logit requires mixing nodes");
  }
  if (!mixing_nodes.empty()) {
    CompensatedSum total;
    for (const auto& node : mixing_nodes) {
      require(std::isfinite(node.coefficient) && std::isfinite(node.weight) &&
                  node.weight >= 0.0,
              "mixing nodes must be finite with nonnegative weight");
      total.add(node.weight);
    }
    require(std::abs(total.value() - 1.0) <= 1e-12,
            "mixing weights must sum to 1");
  }
}

std::vector<double> DemandSpec::type_alphas() const {
  if (family == Family::logit) return {alpha};
  std::vector<double> out;
  out.reserve(mixing_nodes.size());
  for (const auto& node : mixing_nodes) {
    out.push_back(alpha * std::exp(node.coefficient));
  }
  return out;
}

std::vector<double> DemandSpec::type_weights() const {
  if (family == Family::logit) return {1.0};
  std::vector<double> out;
  out.reserve(mixing_nodes.size());
  for (const auto& node : mixing_nodes) out.push_back(node.weight);
  return out;
}

DemandSpec logit_spec(int J, double alpha) {
  DemandSpec spec{Family::logit, alpha, J, {}};
  spec.validate();
  return spec;
}

DemandSpec mixed_logit_spec(int J, double alpha, double sigma, int n_nodes) {
  DemandSpec spec{Family::mixed_logit, alpha, J,
                  gauss_hermite_nodes(sigma, n_nodes)};
  spec.validate();
  return spec;
}

std::vector<MixingNode> gauss_hermite_nodes(double sigma, int n) {
  require(n >= 1, "need at least one quadrature node");
  require(std::isfinite(sigma) && sigma >= 0.0, "sigma must be nonnegative");
  // Golub-Welsch for the probabilists' Hermite weight exp(-t^2/2).
  Mat jacobi = Mat::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    jacobi(i, i - 1) = jacobi(i - 1, i) = std::sqrt(static_cast<double>(i));
  }
  Eigen::SelfAdjointEigenSolver<Mat> eig(jacobi);
  std::vector<MixingNode> nodes(n);
  CompensatedSum total;
  for (int i = 0; i < n; ++i) {
    const double v = eig.eigenvectors()(0, i);
    nodes[i] = {sigma * eig.eigenvalues()(i), v * v};
    total.add(v * v);
  }
  const double norm = total.value();
  for (auto& node : nodes) node.weight /= norm;
  // Renormalize once more so the compensated sum is exactly 1 to rounding.
  CompensatedSum check;
  for (const auto& node : nodes) check.add(node.weight);
  nodes.back().weight += 1.0 - check.value();
  return nodes;
}

namespace {

void check_inputs(const DemandSpec& spec, const Vec& d, const Vec& p) {
  require(d.size() == spec.J && p.size() == spec.J,
          "index and price vectors must have length J");
  require(d.allFinite() && p.allFinite(), "non-finite index or price");
}

// Logit shares for one consumer type; returns the inside shares and writes
// the outside share.
Vec type_shares(const Vec& d, const Vec& p, double alpha, double& outside) {
  const Vec u = d - alpha * p;
  const double m = std::max(0.0, u.maxCoeff());
  const Vec e = (u.array() - m).exp().matrix();
  const double e0 = std::exp(-m);
  const double denom = e0 + e.sum();
  outside = e0 / denom;
  return e / denom;
}

}  // namespace

Vec share(const DemandSpec& spec, const Vec& d, const Vec& p) {
  check_inputs(spec, d, p);
  const auto alphas = spec.type_alphas();
  const auto weights = spec.type_weights();
  Vec s = Vec::Zero(spec.J);
  double s0 = 0.0;
  for (std::size_t r = 0; r < alphas.size(); ++r) {
    double outside = 0.0;
    s += weights[r] * type_shares(d, p, alphas[r], outside);
    s0 += weights[r] * outside;
  }
  if (!(s.minCoeff() > 0.0) || !(s0 > 0.0)) {
    throw NumericalError("shares underflow at the simplex boundary");
  }
  return s;
}

Mat share_jacobian_index(const DemandSpec& spec, const Vec& d, const Vec& p) {
  check_inputs(spec, d, p);
  const auto alphas = spec.type_alphas();
  const auto weights = spec.type_weights();
  Mat jac = Mat::Zero(spec.J, spec.J);
  for (std::size_t r = 0; r < alphas.size(); ++r) {
    double outside = 0.0;
    const Vec sr = type_shares(d, p, alphas[r], outside);
    Mat block = -sr * sr.transpose();
    block.diagonal() += sr;
    jac += weights[r] * block;
  }
  return jac;
}

Vec own_price_derivative(const DemandSpec& spec, const Vec& d, const Vec& p) {
  check_inputs(spec, d, p);
  const auto alphas = spec.type_alphas();
  const auto weights = spec.type_weights();
  Vec out = Vec::Zero(spec.J);
  for (std::size_t r = 0; r < alphas.size(); ++r) {
    double outside = 0.0;
    const Vec sr = type_shares(d, p, alphas[r], outside);
    out.array() -= weights[r] * alphas[r] * sr.array() * (1.0 - sr.array());
  }
  return out;
}

void validate_shares(const Vec& s, int J) {
  require(s.size() == J, "share vector must have length J");
  require(s.allFinite(), "non-finite share");
  require(s.minCoeff() > 0.0, "shares must be strictly positive");
  require(s.sum() < 1.0, "inside shares must sum to less than 1");
}

InversionResult invert_share_detailed(const DemandSpec& spec, const Vec& s,
                                      const Vec& p,
                                      const InversionOptions& opts) {
  spec.validate();
  validate_shares(s, spec.J);
  require(p.size() == spec.J && p.allFinite(), "bad price vector");

  const double s0 = 1.0 - s.sum();
  const Vec log_s = s.array().log().matrix();
  const double log_s0 = std::log(s0);

  if (spec.family == Family::logit) {
    Vec d = (log_s.array() - log_s0).matrix() + spec.alpha * p;
    return {std::move(d), 0.0, 0};
  }

  // Start from the logit inverse at the mean price sensitivity.
  const auto alphas = spec.type_alphas();
  const auto weights = spec.type_weights();
  double mean_alpha = 0.0;
  for (std::size_t r = 0; r < alphas.size(); ++r) {
    mean_alpha += weights[r] * alphas[r];
  }
  Vec d = (log_s.array() - log_s0).matrix() + mean_alpha * p;

  auto gap = [&](const Vec& dd) -> Vec {
    return log_s - share(spec, dd, p).array().log().matrix();
  };

  Vec g = gap(d);
  double residual = g.cwiseAbs().maxCoeff();
  int it = 0;
  while (residual > opts.tol && it < opts.max_iterations) {
    ++it;
    if (it <= opts.contraction_iterations) {
      d += g;
    } else {
      // Damped Newton on ln sigma(d) = ln s, falling back to the contraction
      // step when no damping level reduces the residual.
      const Vec sig = share(spec, d, p);
      Mat jac = share_jacobian_index(spec, d, p);
      for (int j = 0; j < spec.J; ++j) jac.row(j) /= sig(j);
      const Vec step = jac.partialPivLu().solve(g);
      double lambda = 1.0;
      bool accepted = false;
      for (int k = 0; k < 30 && step.allFinite(); ++k, lambda *= 0.5) {
        const Vec trial = d + lambda * step;
        Vec trial_gap;
        try {
          trial_gap = gap(trial);
        } catch (const NumericalError&) {
          continue;
        }
        if (trial_gap.cwiseAbs().maxCoeff() < residual) {
          d = trial;
          accepted = true;
          break;
        }
      }
      if (!accepted) d += g;
    }
    g = gap(d);
    residual = g.cwiseAbs().maxCoeff();
  }
  if (residual > opts.tol) {
    throw ConvergenceError("share inversion did not converge", residual, it);
  }
  return {std::move(d), residual, it};
}

Vec invert_share(const DemandSpec& spec, const Vec& s, const Vec& p) {
  return invert_share_detailed(spec, s, p).d;
}

}  // namespace demandid::demand
