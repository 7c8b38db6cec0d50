#include "demandid/deconvolution.hpp"

#include <unsupported/Eigen/FFT>

#include <charconv>
#include <complex>
#include <fstream>
#include <numbers>
#include <sstream>

namespace demandid::deconvolution {

using Complex = std::complex<double>;
using ComplexVec = std::vector<Complex>;

namespace {

bool power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

ComplexVec forward(const Vec& u) {
  Eigen::FFT<double> fft;
  std::vector<double> in(u.data(), u.data() + u.size());
  ComplexVec out;
  fft.fwd(out, in);
  return out;
}

ComplexVec forward_complex(const ComplexVec& u) {
  Eigen::FFT<double> fft;
  ComplexVec out;
  fft.fwd(out, u);
  return out;
}

// Inverse of a Hermitian spectrum, scaled by 1/N.
Vec inverse_real(const ComplexVec& spectrum) {
  Eigen::FFT<double> fft;
  ComplexVec out;
  fft.inv(out, spectrum);
  Vec v(static_cast<Eigen::Index>(out.size()));
  for (std::size_t i = 0; i < out.size(); ++i) v(static_cast<Eigen::Index>(i)) = out[i].real();
  return v;
}

double sup_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Signed integer frequency index of FFT slot k.
int signed_index(int k, int N) { return k < N / 2 ? k : k - N; }

}  // namespace

OperatorGrid::OperatorGrid(double L, int N, double s) : L_(L), s_(s), N_(N) {
  require(std::isfinite(L) && L > 0.0, "grid half-width L must be positive");
  require(power_of_two(N) && N >= 8, "grid size N must be a power of two >= 8");
  require(std::isfinite(s) && s > 2.0, "smoothness s must exceed J + 1 = 2");
  h_ = 2.0 * L / N;
  dw_ = std::numbers::pi / L;
  nodes_.resize(N);
  freqs_.resize(N);
  q_hat_.resize(N);
  for (int i = 0; i < N; ++i) {
    nodes_(i) = -L + h_ * i;
    freqs_(i) = dw_ * signed_index(i, N);
    q_hat_(i) = q_hat_at(freqs_(i));
  }
  // q(x_i) = (1/2L) sum_k q_hat_k exp(i w_k x_i); exp(-i w_k L) = (-1)^k.
  ComplexVec spectrum(static_cast<std::size_t>(N));
  for (int k = 0; k < N; ++k) {
    spectrum[k] = Complex((k % 2 == 0 ? 1.0 : -1.0) * q_hat_(k), 0.0);
  }
  q_ = inverse_real(spectrum) / h_;

  if (q_.minCoeff() < -1e-9) {
    throw InvalidArgument("kernel has negative values beyond 1e-9: increase N");
  }
  CompensatedSum mass;
  for (int i = 0; i < N; ++i) mass.add(h_ * q_(i));
  if (std::abs(mass.value() - 1.0) > 1e-6) {
    throw InvalidArgument("kernel mass differs from 1 by more than 1e-6");
  }
  if (std::abs(q_(0)) > 1e-8 * q_(N / 2)) {
    throw InvalidArgument("kernel does not decay by the boundary: increase L");
  }
}

double OperatorGrid::q_hat_at(double w) const {
  return std::pow(1.0 + w * w, -0.5 * s_);
}

double OperatorGrid::q_at(double x) const {
  CompensatedSum sum;
  for (int k = 0; k < N_; ++k) sum.add(q_hat_(k) * std::cos(freqs_(k) * x));
  return sum.value() / (2.0 * L_);
}

OperatorGrid make_grid(double L, int N, double s) { return OperatorGrid(L, N, s); }

ScaleField ScaleField::from_values(const OperatorGrid& grid, Vec sigma) {
  require(sigma.size() == grid.N(), "scale field needs one value per node");
  require(sigma.allFinite() && sigma.minCoeff() > 0.0, "scale field must be positive");
  ScaleField out;
  const Vec dev = (sigma.array() - 1.0).abs().matrix();
  out.sup_dev = dev.maxCoeff();
  CompensatedSum integral;
  for (Eigen::Index i = 0; i < dev.size(); ++i) integral.add(grid.spacing() * dev(i));
  out.int_dev = integral.value();
  out.sigma = std::move(sigma);
  return out;
}

ScaleField ScaleField::constant_one(const OperatorGrid& grid) {
  return from_values(grid, Vec::Ones(grid.N()));
}

ScaleField ScaleField::bump(const OperatorGrid& grid, double psi) {
  require(std::isfinite(psi), "psi must be finite");
  const Vec& x = grid.nodes();
  return from_values(grid, (1.0 + psi * (-x.array().square()).exp()).matrix());
}

bool boundary_mass(const OperatorGrid& grid, const Vec& u) {
  const double peak = sup_norm(u);
  if (peak == 0.0) return false;
  const double edge = 0.75 * grid.L();
  for (int i = 0; i < grid.N(); ++i) {
    if (std::abs(grid.nodes()(i)) > edge && std::abs(u(i)) > 1e-8 * peak) return true;
  }
  return false;
}

Vec apply_T0(const OperatorGrid& grid, const Vec& u) {
  require(u.size() == grid.N() && u.allFinite(), "u must be finite with one value per node");
  ComplexVec spec = forward(u);
  for (int k = 0; k < grid.N(); ++k) spec[k] *= grid.q_hat()(k);
  return inverse_real(spec);
}

Applied apply_T0_checked(const OperatorGrid& grid, const Vec& u) {
  return {apply_T0(grid, u), boundary_mass(grid, u)};
}

Vec solve_T0(const OperatorGrid& grid, const Vec& k) {
  require(k.size() == grid.N() && k.allFinite(), "k must be finite with one value per node");
  ComplexVec spec = forward(k);
  for (int j = 0; j < grid.N(); ++j) spec[j] /= grid.q_hat()(j);
  return inverse_real(spec);
}

Vec apply_T(const OperatorGrid& grid, const ScaleField& scale, const Vec& u) {
  const int N = grid.N();
  require(scale.sigma.size() == N, "scale field does not match grid");
  require(u.size() == N && u.allFinite(), "u must be finite with one value per node");
  const ComplexVec spec = forward(u);
  // Nodes with Sigma == 1 reduce to the convolution; the rest evaluate the
  // scaled kernel's Fourier series at that node directly.
  ComplexVec conv = spec;
  for (int k = 0; k < N; ++k) conv[k] *= grid.q_hat()(k);
  Vec out = inverse_real(conv);

  std::vector<int> scaled;
  for (int i = 0; i < N; ++i) {
    if (scale.sigma(i) != 1.0) scaled.push_back(i);
  }
  if (scaled.empty()) return out;

  ComplexVec twiddle(static_cast<std::size_t>(N));
  for (int m = 0; m < N; ++m) {
    twiddle[m] = std::polar(1.0, 2.0 * std::numbers::pi * m / N);
  }
  parallel_blocks(scaled.size(), 64, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t idx = lo; idx < hi; ++idx) {
      const int i = scaled[idx];
      const double sig = scale.sigma(i);
      double acc = 0.0;
      for (int k = 0; k < N; ++k) {
        const double symbol = grid.q_hat_at(sig * grid.frequencies()(k));
        const auto phase = twiddle[static_cast<std::size_t>((static_cast<long>(k) * i) % N)];
        acc += symbol * (spec[k] * phase).real();
      }
      out(i) = acc / N;
    }
  });
  return out;
}

ContractionEstimate contraction_profile(const OperatorGrid& grid, const ScaleField& scale) {
  const int N = grid.N();
  require(scale.sigma.size() == N, "scale field does not match grid");
  const double h = grid.spacing();

  std::vector<int> active;
  for (int i = 0; i < N; ++i) {
    if (scale.sigma(i) != 1.0) active.push_back(i);
  }
  ContractionEstimate out;
  out.profile = Vec::Zero(N);
  if (active.empty()) return out;

  // acc[l] = sum_k |E_hat_{w_k}(w_k - v_l)| q_hat(w_k), reduced per fixed
  // block of k so the sum order is independent of the worker count.
  constexpr std::size_t kBlock = 128;
  const std::size_t n_blocks = (static_cast<std::size_t>(N) + kBlock - 1) / kBlock;
  std::vector<Vec> partial(n_blocks, Vec::Zero(N));
  parallel_blocks(static_cast<std::size_t>(N), kBlock, [&](std::size_t lo, std::size_t hi) {
    Vec& acc = partial[lo / kBlock];
    ComplexVec delta(static_cast<std::size_t>(N));
    for (std::size_t kk = lo; kk < hi; ++kk) {
      const int k = static_cast<int>(kk);
      const double w = grid.frequencies()(k);
      const double base = grid.q_hat()(k);
      std::fill(delta.begin(), delta.end(), Complex(0.0, 0.0));
      bool any = false;
      for (int i : active) {
        const double v = grid.q_hat_at(scale.sigma(i) * w) - base;
        delta[i] = Complex(v, 0.0);
        any = any || v != 0.0;
      }
      if (!any) continue;
      const ComplexVec dhat = forward_complex(delta);
      const int ks = signed_index(k, N);
      for (int l = 0; l < N; ++l) {
        const int m = ks - signed_index(l, N);  // index of w_k - v_l
        if (m < -N / 2 || m >= N / 2) continue;
        const int slot = m >= 0 ? m : m + N;
        acc(l) += h * std::abs(dhat[slot]) * base;
      }
    }
  });
  Vec total = Vec::Zero(N);
  for (const auto& p : partial) total += p;

  const double factor = grid.dual_spacing() / (2.0 * std::numbers::pi);
  for (int l = 0; l < N; ++l) {
    const double qh = grid.q_hat()(l);
    out.profile(l) = factor * total(l) / (qh * qh);
    if (out.profile(l) > out.value) {
      out.value = out.profile(l);
      out.argmax_frequency = grid.frequencies()(l);
    }
  }
  return out;
}

double contraction_diagnostic(const OperatorGrid& grid, const ScaleField& scale) {
  return contraction_profile(grid, scale).value;
}

ContractionRefusal::ContractionRefusal(double value)
    : std::runtime_error([value] {
        std::ostringstream msg;
        msg.precision(6);
        msg << "Neumann series refused: contraction diagnostic " << value << " >= 1";
        return msg.str();
      }()),
      value_(value) {}

NeumannDivergence::NeumannDivergence(std::vector<double> history)
    : std::runtime_error("Neumann series corrections are not decaying after " +
                         std::to_string(history.size()) + " terms"),
      history_(std::move(history)) {}

NeumannSolution neumann_solve(const OperatorGrid& grid, const ScaleField& scale,
                              const Vec& k, const NeumannOptions& opts) {
  require(k.size() == grid.N() && k.allFinite(), "k must be finite with one value per node");
  require(opts.tol > 0.0 && opts.max_terms >= 1, "bad Neumann options");
  NeumannSolution sol;
  auto& diag = sol.diagnostics;
  diag.contraction = contraction_diagnostic(grid, scale);
  if (!(diag.contraction < 1.0)) throw ContractionRefusal(diag.contraction);

  Vec term = solve_T0(grid, k);
  sol.u = term;
  diag.terms = 1;
  diag.correction_norms.push_back(sup_norm(term));
  double smallest = diag.correction_norms.back();
  int growth_streak = 0;
  while (diag.terms < opts.max_terms) {
    const Vec e_term = apply_T(grid, scale, term) - apply_T0(grid, term);
    term = -solve_T0(grid, e_term);
    const double norm = sup_norm(term);
    sol.u += term;
    if (norm < opts.tol) break;
    diag.correction_norms.push_back(norm);
    ++diag.terms;
    growth_streak = norm > diag.correction_norms[diag.correction_norms.size() - 2]
                        ? growth_streak + 1
                        : 0;
    if (growth_streak >= 5 || norm > 1e3 * std::max(smallest, opts.tol)) {
      throw NeumannDivergence(diag.correction_norms);
    }
    smallest = std::min(smallest, norm);
  }
  diag.residual = sup_norm(apply_T(grid, scale, sol.u) - k);
  return sol;
}

void write_grid_function(std::ostream& out, const OperatorGrid& grid, const Vec& values) {
  require(values.size() == grid.N(), "one value per node required");
  char buf[96];
  for (int i = 0; i < grid.N(); ++i) {
    const int len = std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", grid.nodes()(i), values(i));
    out.write(buf, len);
  }
}

void write_grid_function(const std::filesystem::path& path, const OperatorGrid& grid,
                         const Vec& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open '" + path.string() + "' for writing");
  write_grid_function(out, grid, values);
}

Vec read_grid_function(std::istream& in, const OperatorGrid& grid) {
  Vec values(grid.N());
  std::string line;
  int i = 0;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    double node = 0.0, value = 0.0;
    const char* end = line.data() + line.size();
    const auto r1 = std::from_chars(line.data(), line.data() + (comma == std::string::npos ? 0 : comma), node);
    const auto r2 = comma == std::string::npos
                        ? std::from_chars_result{nullptr, std::errc::invalid_argument}
                        : std::from_chars(line.data() + comma + 1, end, value);
    if (comma == std::string::npos || r1.ec != std::errc() || r2.ec != std::errc() ||
        r2.ptr != end) {
      throw InvalidArgument("line " + std::to_string(line_no) + ": expected 'node,value'");
    }
    if (i >= grid.N() || std::abs(node - grid.nodes()(i)) > 1e-9) {
      throw InvalidArgument("line " + std::to_string(line_no) + ": node does not match grid");
    }
    values(i++) = value;
  }
  if (i != grid.N()) throw InvalidArgument("grid function has too few rows");
  return values;
}

Vec read_grid_function(const std::filesystem::path& path, const OperatorGrid& grid) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open '" + path.string() + "'");
  return read_grid_function(in, grid);
}

}  // namespace demandid::deconvolution
