#pragma once

#include "demandid/common.hpp"

#include <filesystem>
#include <iosfwd>
#include <vector>

// Location-scale conditional expectation operators on a uniform periodic
// grid in one dimension.
//
// The error density q has characteristic function
//     q_hat(w) = (1 + w^2)^(-s/2),
// so T0 u = q * u is a Fourier multiplier and is inverted by division. The
// heteroskedastic operator
//     (T u)(x) = int Sigma(x)^{-1} q((x - t) / Sigma(x)) u(t) dt
// has symbol q_hat(Sigma(x) w). Writing E = T - T0, the equation T u = k is
// solved by the Neumann series
//     u = sum_l (-T0^{-1} E)^l T0^{-1} k,
// which converges when the weighted operator norm
//     sup_v (2 pi)^{-1} int |E_hat_w(w - v)| q_hat(w) / q_hat(v)^2 dw,
//     E_w(x) = q_hat(Sigma(x) w) - q_hat(w),
// is below one. contraction_diagnostic() evaluates that bound on the grid.
namespace demandid::deconvolution {

class OperatorGrid {
 public:
  /// Nodes x_i = -L + 2L i / N. Requires N a power of two, L > 0, s > 2.
  /// Throws InvalidArgument if the sampled kernel violates nonnegativity
  /// (1e-9), unit mass (1e-6) or decay at the boundary.
  OperatorGrid(double L, int N, double s);

  double L() const noexcept { return L_; }
  int N() const noexcept { return N_; }
  double s() const noexcept { return s_; }
  double spacing() const noexcept { return h_; }
  double dual_spacing() const noexcept { return dw_; }

  const Vec& nodes() const noexcept { return nodes_; }
  /// Dual frequencies in FFT order: 0, dw, ..., -dw.
  const Vec& frequencies() const noexcept { return freqs_; }
  const Vec& q_hat() const noexcept { return q_hat_; }
  const Vec& q() const noexcept { return q_; }

  double q_hat_at(double w) const;
  /// Trigonometric interpolant of q at an arbitrary point.
  double q_at(double x) const;

 private:
  double L_, s_, h_, dw_;
  int N_;
  Vec nodes_, freqs_, q_hat_, q_;
};

OperatorGrid make_grid(double L, int N, double s);

struct ScaleField {
  Vec sigma;            // on nodes, > 0
  double sup_dev = 0;   // sup |Sigma - 1|
  double int_dev = 0;   // int |Sigma - 1| (trapezoid)

  static ScaleField from_values(const OperatorGrid& grid, Vec sigma);
  static ScaleField constant_one(const OperatorGrid& grid);
  /// Sigma(x) = 1 + psi * exp(-x^2).
  static ScaleField bump(const OperatorGrid& grid, double psi);
};

struct Applied {
  Vec k;
  bool boundary_warning = false;  // input mass within L/4 of the boundary
};

/// True if |u| exceeds 1e-8 * max|u| anywhere with |x| > 3L/4.
bool boundary_mass(const OperatorGrid& grid, const Vec& u);

Vec apply_T0(const OperatorGrid& grid, const Vec& u);
Applied apply_T0_checked(const OperatorGrid& grid, const Vec& u);
Vec solve_T0(const OperatorGrid& grid, const Vec& k);
Vec apply_T(const OperatorGrid& grid, const ScaleField& scale, const Vec& u);

struct ContractionEstimate {
  double value = 0.0;
  double argmax_frequency = 0.0;
  Vec profile;  // per dual node, FFT order
};

ContractionEstimate contraction_profile(const OperatorGrid& grid, const ScaleField& scale);
double contraction_diagnostic(const OperatorGrid& grid, const ScaleField& scale);

struct NeumannDiagnostics {
  double contraction = 0.0;
  int terms = 0;
  double residual = 0.0;  // ||T u - k||_inf
  std::vector<double> correction_norms;  // L-inf norm of each series term
};

struct NeumannOptions {
  double tol = 1e-10;
  int max_terms = 200;
};

class ContractionRefusal : public std::runtime_error {
 public:
  explicit ContractionRefusal(double value);
  double value() const noexcept { return value_; }

 private:
  double value_;
};

class NeumannDivergence : public std::runtime_error {
 public:
  explicit NeumannDivergence(std::vector<double> history);
  const std::vector<double>& history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

struct NeumannSolution {
  Vec u;
  NeumannDiagnostics diagnostics;
};

NeumannSolution neumann_solve(const OperatorGrid& grid, const ScaleField& scale,
                              const Vec& k, const NeumannOptions& opts = {});

// Two-column (node, value) text.
void write_grid_function(std::ostream& out, const OperatorGrid& grid, const Vec& values);
void write_grid_function(const std::filesystem::path& path, const OperatorGrid& grid,
                         const Vec& values);
/// Reads values; node column must match the grid within 1e-9.
Vec read_grid_function(std::istream& in, const OperatorGrid& grid);
Vec read_grid_function(const std::filesystem::path& path, const OperatorGrid& grid);

}  // namespace demandid::deconvolution
