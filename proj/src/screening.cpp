#include "demandid/screening.hpp"

#include <map>
#include <random>
#include <sstream>

namespace demandid::screening {

Transform affine_transform(double a, double b) {
  require(std::isfinite(a) && std::isfinite(b) && a > 0.0,
          "affine transform needs a finite positive slope");
  std::ostringstream name;
  name.precision(17);
  name << "affine(" << a << "," << b << ")";
  return {name.str(), [a, b](double t) { return a * t + b; },
          [a, b](double v) { return (v - b) / a; }, true};
}

Transform cubic_transform() {
  auto forward = [](double t) { return t * t * t + t; };
  auto inverse = [forward](double v) {
    // |t| <= max(1, |v|) for t^3 + t = v.
    const double bound = std::max(1.0, std::abs(v));
    double lo = -bound, hi = bound;
    while (hi - lo > 1e-12) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      (forward(mid) < v ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };
  return {"cubic", forward, inverse, false};
}

Transform make_transform(const std::string& name, std::function<double(double)> forward,
                         std::function<double(double)> inverse) {
  return {name, std::move(forward), std::move(inverse), false};
}

CandidateInverse::CandidateInverse(Kind kind, std::string id, int J, Eval h,
                                   InverseEval h_inverse)
    : kind_(kind), id_(std::move(id)), J_(J), h_(std::move(h)),
      h_inverse_(std::move(h_inverse)) {
  require(J_ >= 1, "candidate needs J >= 1");
  check_round_trip();
}

void CandidateInverse::check_round_trip() const {
  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  const auto probe_spec = demand::logit_spec(J_, 1.0);
  for (int k = 0; k < 100; ++k) {
    Vec d(J_), p(J_);
    for (int j = 0; j < J_; ++j) {
      d(j) = unif(rng);
      p(j) = unif(rng);
    }
    const Vec s = demand::share(probe_spec, d, p);
    const Vec back = h_inverse_(h_(s, p), p);
    if (back.size() != J_ || !back.allFinite() ||
        (back - s).cwiseAbs().maxCoeff() > 1e-8) {
      throw InvalidArgument("candidate '" + id_ + "' fails the inverse-in-s round trip");
    }
  }
}

CandidateInverse CandidateInverse::logit_inverse(int J, double alpha) {
  require(std::isfinite(alpha) && alpha > 0.0, "logit candidate needs alpha > 0");
  const auto spec = demand::logit_spec(J, alpha);
  std::ostringstream id;
  id.precision(17);
  id << "logit_inverse(" << alpha << ")";
  return CandidateInverse(
      Kind::logit_inverse, id.str(), J,
      [spec](const Vec& s, const Vec& p) { return demand::invert_share(spec, s, p); },
      [spec](const Vec& v, const Vec& p) { return demand::share(spec, v, p); });
}

CandidateInverse CandidateInverse::demand_inverse(const demand::DemandSpec& spec) {
  spec.validate();
  std::ostringstream id;
  id.precision(17);
  id << "demand_inverse(" << demand::to_string(spec.family) << "," << spec.alpha << ")";
  return CandidateInverse(
      Kind::demand_inverse, id.str(), spec.J,
      [spec](const Vec& s, const Vec& p) { return demand::invert_share(spec, s, p); },
      [spec](const Vec& v, const Vec& p) { return demand::share(spec, v, p); });
}

CandidateInverse CandidateInverse::transformed(const CandidateInverse& base,
                                               const Transform& T) {
  auto h = [base, f = T.forward](const Vec& s, const Vec& p) -> Vec {
    return base.evaluate(s, p).unaryExpr(f);
  };
  auto h_inv = [base, g = T.inverse](const Vec& v, const Vec& p) -> Vec {
    return base.invert(v.unaryExpr(g), p);
  };
  return CandidateInverse(Kind::transformed, T.name + "o" + base.id(), base.J(),
                          std::move(h), std::move(h_inv));
}

CandidateInverse CandidateInverse::custom(std::string id, int J, Eval h,
                                          InverseEval h_inverse) {
  return CandidateInverse(Kind::custom, std::move(id), J, std::move(h),
                          std::move(h_inverse));
}

Mat residuals(const market::MarketDataset& ds, const CandidateInverse& cand) {
  require(ds.J == cand.J(), "candidate J does not match dataset");
  const auto n = ds.n_markets();
  Mat h(n, ds.J);
  parallel_blocks(static_cast<std::size_t>(n), 4096, [&](std::size_t lo, std::size_t hi) {
    for (auto m = static_cast<Eigen::Index>(lo); m < static_cast<Eigen::Index>(hi); ++m) {
      Vec v;
      try {
        v = cand.evaluate(ds.S.row(m).transpose(), ds.P.row(m).transpose());
      } catch (const std::exception& e) {
        throw InvalidArgument("candidate evaluation failed at market " +
                              std::to_string(m) + ": " + e.what());
      }
      if (!v.allFinite()) {
        throw InvalidArgument("candidate evaluation is non-finite at market " +
                              std::to_string(m));
      }
      h.row(m) = v.transpose();
    }
  });
  return h;
}

moments::MomentReport screen(const market::MarketDataset& ds, const CandidateInverse& cand,
                             double threshold) {
  require(ds.n_markets() > 0, "dataset is empty");
  const Mat h = residuals(ds, cand);
  const auto x_cells = market::cell_labels(ds.X);
  const auto xz_cells = market::cell_labels(ds.X, ds.Z);

  auto battery = moments::default_battery(ds.X, ds.Z);
  const auto self = moments::self_instrument(h, xz_cells);
  const auto base_cols = battery.values.cols();
  battery.values.conservativeResize(Eigen::NoChange, base_cols + self.values.cols());
  battery.values.rightCols(self.values.cols()) = self.values;
  battery.names.insert(battery.names.end(), self.names.begin(), self.names.end());

  battery.values = moments::recenter(battery.values, x_cells);
  return moments::moment_test(h, battery, threshold);
}

CounterfactualResult counterfactual(const CandidateInverse& cand, const Vec& s,
                                    const Vec& p, const Vec& p_prime) {
  demand::validate_shares(s, cand.J());
  require(p.size() == cand.J() && p_prime.size() == cand.J(), "price length must be J");
  require(p.allFinite() && p_prime.allFinite(), "non-finite price");
  Vec s_prime = cand.invert(cand.evaluate(s, p), p_prime);
  demand::validate_shares(s_prime, cand.J());
  return {std::move(s_prime), cand.id(), p, p_prime};
}

namespace {

struct Probe {
  Eigen::Index row;
  Eigen::Index price_row;
};

std::vector<Probe> draw_probes(Eigen::Index n, int n_probes, std::uint64_t seed) {
  require(n > 0, "dataset is empty");
  std::mt19937_64 rng(mix64(seed ^ 0xa0d17ULL));
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::vector<Probe> probes(static_cast<std::size_t>(std::max(n_probes, 0)));
  for (auto& pr : probes) pr = {pick(rng), pick(rng)};
  return probes;
}

}  // namespace

double invariance_audit(const market::MarketDataset& ds, const CandidateInverse& cand,
                        const std::vector<Transform>& transforms, int n_probes,
                        std::uint64_t seed) {
  if (transforms.empty()) return 0.0;
  const auto probes = draw_probes(ds.n_markets(), n_probes, seed);
  double worst = 0.0;
  for (const auto& T : transforms) {
    const auto other = CandidateInverse::transformed(cand, T);
    for (const auto& pr : probes) {
      const Vec s = ds.S.row(pr.row).transpose();
      const Vec p = ds.P.row(pr.row).transpose();
      const Vec pp = ds.P.row(pr.price_row).transpose();
      const Vec a = counterfactual(cand, s, p, pp).s_prime;
      const Vec b = counterfactual(other, s, p, pp).s_prime;
      worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

double oracle_counterfactual_error(const market::MarketDataset& ds,
                                   const CandidateInverse& cand,
                                   const demand::DemandSpec& spec, int n_probes,
                                   std::uint64_t seed) {
  require(ds.has_oracle, "oracle columns are required");
  const auto probes = draw_probes(ds.n_markets(), n_probes, seed);
  double worst = 0.0;
  for (const auto& pr : probes) {
    const Vec s = ds.S.row(pr.row).transpose();
    const Vec p = ds.P.row(pr.row).transpose();
    const Vec pp = ds.P.row(pr.price_row).transpose();
    const Vec truth = demand::share(spec, ds.delta.row(pr.row).transpose(), pp);
    worst = std::max(worst, (counterfactual(cand, s, p, pp).s_prime - truth)
                                .cwiseAbs()
                                .maxCoeff());
  }
  return worst;
}

std::vector<FlatnessCell> flatness_probe(const market::MarketDataset& at_z,
                                         const market::MarketDataset& at_z0,
                                         const IndexPriceFunction& H) {
  require(at_z.has_oracle && at_z0.has_oracle, "flatness probe needs oracle columns");
  require(at_z.J == at_z0.J, "datasets must share J");

  struct Acc {
    std::vector<CompensatedSum> sum, sum_sq;
    long n = 0;
  };
  using Key = std::vector<double>;
  auto accumulate = [&](const market::MarketDataset& ds) {
    std::map<Key, Acc> cells;
    for (Eigen::Index m = 0; m < ds.n_markets(); ++m) {
      const Vec x = ds.X.row(m).transpose();
      const Vec v = H(ds.delta.row(m).transpose(), ds.P.row(m).transpose());
      auto& acc = cells[Key(x.data(), x.data() + x.size())];
      if (acc.n == 0) {
        acc.sum.resize(static_cast<std::size_t>(v.size()));
        acc.sum_sq.resize(static_cast<std::size_t>(v.size()));
      }
      require(static_cast<std::size_t>(v.size()) == acc.sum.size(),
              "H must return a fixed-length vector");
      for (Eigen::Index k = 0; k < v.size(); ++k) {
        acc.sum[k].add(v(k));
        acc.sum_sq[k].add(v(k) * v(k));
      }
      ++acc.n;
    }
    return cells;
  };
  const auto a = accumulate(at_z);
  const auto b = accumulate(at_z0);

  auto moments_of = [](const Acc& acc, Vec& mean, Vec& var_of_mean) {
    const auto K = static_cast<Eigen::Index>(acc.sum.size());
    mean.resize(K);
    var_of_mean.resize(K);
    const double n = static_cast<double>(acc.n);
    for (Eigen::Index k = 0; k < K; ++k) {
      mean(k) = acc.sum[k].value() / n;
      const double var =
          acc.n > 1 ? std::max(0.0, (acc.sum_sq[k].value() - n * mean(k) * mean(k)) / (n - 1.0))
                    : 0.0;
      var_of_mean(k) = var / n;
    }
  };

  std::vector<FlatnessCell> out;
  for (const auto& [key, acc_a] : a) {
    const auto it = b.find(key);
    if (it == b.end()) continue;
    Vec ma, va, mb, vb;
    moments_of(acc_a, ma, va);
    moments_of(it->second, mb, vb);
    FlatnessCell cell;
    cell.x = Eigen::Map<const Vec>(key.data(), static_cast<Eigen::Index>(key.size()));
    cell.difference = ma - mb;
    cell.se = (va + vb).cwiseSqrt();
    cell.n_z = acc_a.n;
    cell.n_z0 = it->second.n;
    out.push_back(std::move(cell));
  }
  require(!out.empty(), "datasets share no X cell");
  return out;
}

}  // namespace demandid::screening
