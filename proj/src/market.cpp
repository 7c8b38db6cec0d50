#include "demandid/market.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace demandid::market {

std::string_view to_string(IndexForm f) {
  return f == IndexForm::linear ? "linear" : "nonseparable";
}

IndexForm index_form_from_string(std::string_view s) {
  if (s == "linear") return IndexForm::linear;
  if (s == "nonseparable") return IndexForm::nonseparable;
  throw InvalidArgument("unknown index form '" + std::string(s) + "'");
}

void DgpConfig::validate() const {
  spec.validate();
  family.validate();
  require(n_markets >= 1, "n_markets must be at least 1");
  require(!x_support.empty() && !z_support.empty(), "supports must be nonempty");
  for (const auto& x : x_support) {
    require(x.size() == spec.J && x.allFinite(), "x_support entries need length J");
  }
  for (const auto& z : z_support) {
    require(z.size() == spec.J && z.allFinite(), "z_support entries need length J");
  }
  require(std::abs(rho) <= 1.0, "rho must lie in [-1, 1]");
  require(std::isfinite(tau), "tau must be finite");
  if (family.kind == pricing::PriceKind::bertrand) {
    require(family.demand && family.demand->J == spec.J,
            "bertrand family must carry the DGP demand spec");
  }
  if (discrete_index) {
    const auto& law = *discrete_index;
    require(!law.support.empty(), "discrete index support is empty");
    for (const auto& v : law.support) {
      require(v.size() == spec.J && v.allFinite(), "index support entries need length J");
    }
    require(law.transition.rows() == static_cast<Eigen::Index>(law.support.size()) &&
                law.transition.cols() == static_cast<Eigen::Index>(x_support.size()),
            "transition matrix must be |index support| x |x_support|");
    require(law.transition.minCoeff() >= 0.0, "transition probabilities must be >= 0");
    for (Eigen::Index k = 0; k < law.transition.cols(); ++k) {
      require(std::abs(law.transition.col(k).sum() - 1.0) <= 1e-12,
              "transition columns must sum to 1");
    }
  }
}

void MarketDataset::validate() const {
  const auto n = S.rows();
  require(P.rows() == n && X.rows() == n && Z.rows() == n, "column length mismatch");
  require(S.cols() == J && P.cols() == J && X.cols() == J && Z.cols() == J,
          "column width must equal J");
  if (has_oracle) {
    require(delta.rows() == n && xi.rows() == n && omega.rows() == n,
            "oracle column length mismatch");
  }
  for (Eigen::Index m = 0; m < n; ++m) {
    demand::validate_shares(S.row(m).transpose(), J);
  }
}

MarketDataset MarketDataset::without_oracle() const {
  MarketDataset out{J, S, P, X, Z, false, {}, {}, {}};
  return out;
}

bool operator==(const MarketDataset& a, const MarketDataset& b) {
  if (a.J != b.J || a.has_oracle != b.has_oracle) return false;
  if (a.S != b.S || a.P != b.P || a.X != b.X || a.Z != b.Z) return false;
  if (!a.has_oracle) return true;
  return a.delta == b.delta && a.xi == b.xi && a.omega == b.omega;
}

MarketDataset sample_markets(const DgpConfig& cfg, SampleStats* stats) {
  cfg.validate();
  const int J = cfg.spec.J;
  const int n = cfg.n_markets;

  Vec x_mean = Vec::Zero(J);
  for (const auto& x : cfg.x_support) x_mean += x;
  x_mean /= static_cast<double>(cfg.x_support.size());
  const double noise_scale = std::sqrt(1.0 - cfg.rho * cfg.rho);

  MarketDataset ds;
  ds.J = J;
  ds.has_oracle = true;
  for (Mat* m : {&ds.S, &ds.P, &ds.X, &ds.Z, &ds.delta, &ds.xi, &ds.omega}) {
    m->resize(n, J);
  }

  std::vector<int> sensitive(n, 0), negative(n, 0);
  parallel_blocks(static_cast<std::size_t>(n), 4096, [&](std::size_t lo, std::size_t hi) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t m = lo; m < hi; ++m) {
      std::mt19937_64 rng(substream_seed(cfg.seed, m));
      const auto pick = [&](std::size_t size) {
        return std::min<std::size_t>(static_cast<std::size_t>(unif(rng) * size), size - 1);
      };
      const std::size_t xk = pick(cfg.x_support.size());
      const Vec& x = cfg.x_support[xk];
      Vec eta(J);
      for (int j = 0; j < J; ++j) eta(j) = normal(rng);
      const Vec& z = cfg.z_support[pick(cfg.z_support.size())];
      Vec omega(J);
      for (int j = 0; j < J; ++j) omega(j) = normal(rng);

      Vec xi, d;
      if (cfg.discrete_index) {
        const auto& law = *cfg.discrete_index;
        const double u = unif(rng);
        double cum = 0.0;
        std::size_t i = 0;
        for (; i + 1 < law.support.size(); ++i) {
          cum += law.transition(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(xk));
          if (u < cum) break;
        }
        d = law.support[i];
        xi = d - x;
      } else {
        xi = cfg.rho * (x - x_mean) + noise_scale * eta;
        d = x + xi;
        if (cfg.index_form == IndexForm::nonseparable) d += cfg.tau * x.cwiseProduct(xi);
      }

      pricing::BertrandResult info;
      const Vec p = pricing::price_dgp(cfg.family, x, z, d, omega, &info);
      const Vec s = demand::share(cfg.spec, d, p);
      sensitive[m] = info.start_sensitive ? 1 : 0;
      negative[m] = info.negative_price ? 1 : 0;

      const auto row = static_cast<Eigen::Index>(m);
      ds.S.row(row) = s.transpose();
      ds.P.row(row) = p.transpose();
      ds.X.row(row) = x.transpose();
      ds.Z.row(row) = z.transpose();
      ds.delta.row(row) = d.transpose();
      ds.xi.row(row) = xi.transpose();
      ds.omega.row(row) = omega.transpose();
    }
  });
  if (stats) {
    stats->bertrand_start_sensitive = 0;
    stats->bertrand_negative_price = 0;
    for (int m = 0; m < n; ++m) {
      stats->bertrand_start_sensitive += sensitive[m];
      stats->bertrand_negative_price += negative[m];
    }
  }
  return ds;
}

namespace {

struct RowKeyLess {
  bool operator()(const std::vector<double>& a, const std::vector<double>& b) const {
    return a < b;
  }
};

}  // namespace

std::vector<int> cell_labels(const Mat& keys) {
  return cell_labels(keys, Mat(keys.rows(), 0));
}

std::vector<int> cell_labels(const Mat& a, const Mat& b) {
  require(a.rows() == b.rows(), "key matrices must have equal rows");
  std::map<std::vector<double>, int, RowKeyLess> seen;
  std::vector<int> labels(static_cast<std::size_t>(a.rows()));
  std::vector<double> key(static_cast<std::size_t>(a.cols() + b.cols()));
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) key[c] = a(r, c);
    for (Eigen::Index c = 0; c < b.cols(); ++c) key[a.cols() + c] = b(r, c);
    auto [it, inserted] = seen.try_emplace(key, static_cast<int>(seen.size()));
    labels[r] = it->second;
  }
  return labels;
}

double pooled_correlation(const Mat& a, const Mat& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "shape mismatch");
  const auto n = static_cast<double>(a.size());
  require(n >= 2, "need at least two entries");
  const double ma = a.mean(), mb = b.mean();
  CompensatedSum sab, saa, sbb;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double da = a.data()[i] - ma, db = b.data()[i] - mb;
    sab.add(da * db);
    saa.add(da * da);
    sbb.add(db * db);
  }
  return sab.value() / std::sqrt(saa.value() * sbb.value());
}

namespace {

constexpr std::string_view kHeader = "market,j,S,P,X,Z";
constexpr std::string_view kOracleHeader = "market,j,S,P,X,Z,delta,xi,omega";

void append_double(std::string& out, double v) {
  char buf[40];
  const int len = std::snprintf(buf, sizeof buf, "%.17g", v);
  out.append(buf, static_cast<std::size_t>(len));
}

}  // namespace

void write_dataset(const MarketDataset& ds, std::ostream& out) {
  out << (ds.has_oracle ? kOracleHeader : kHeader) << '\n';
  std::string line;
  for (Eigen::Index m = 0; m < ds.n_markets(); ++m) {
    for (int j = 0; j < ds.J; ++j) {
      line.clear();
      line += std::to_string(m);
      line += ',';
      line += std::to_string(j);
      for (const Mat* col : {&ds.S, &ds.P, &ds.X, &ds.Z}) {
        line += ',';
        append_double(line, (*col)(m, j));
      }
      if (ds.has_oracle) {
        for (const Mat* col : {&ds.delta, &ds.xi, &ds.omega}) {
          line += ',';
          append_double(line, (*col)(m, j));
        }
      }
      line += '\n';
      out << line;
    }
  }
}

void write_dataset(const MarketDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open '" + path.string() + "' for writing");
  write_dataset(ds, out);
  if (!out) throw InvalidArgument("write to '" + path.string() + "' failed");
}

MarketDataset read_dataset(std::istream& in) {
  std::string line;
  long line_no = 1;
  if (!std::getline(in, line)) throw FormatError("missing header", line_no);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  bool oracle = false;
  if (line == kOracleHeader) {
    oracle = true;
  } else if (line != kHeader) {
    throw FormatError("unexpected header '" + line + "'", line_no);
  }
  const std::size_t n_fields = oracle ? 9 : 6;

  struct Row {
    long market;
    long j;
    double v[7];
    long line;
  };
  std::vector<Row> rows;
  std::vector<std::string_view> fields;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    fields.clear();
    std::string_view rest(line);
    while (true) {
      const auto pos = rest.find(',');
      fields.push_back(rest.substr(0, pos));
      if (pos == std::string_view::npos) break;
      rest.remove_prefix(pos + 1);
    }
    if (fields.size() != n_fields) {
      throw FormatError("expected " + std::to_string(n_fields) + " fields, got " +
                            std::to_string(fields.size()),
                        line_no);
    }
    Row row{};
    row.line = line_no;
    auto parse_int = [&](std::string_view f, long& out) {
      auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), out);
      if (ec != std::errc() || p != f.data() + f.size()) {
        throw FormatError("malformed integer '" + std::string(f) + "'", line_no);
      }
    };
    parse_int(fields[0], row.market);
    parse_int(fields[1], row.j);
    for (std::size_t k = 2; k < n_fields; ++k) {
      const auto f = fields[k];
      auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), row.v[k - 2]);
      if (ec != std::errc() || p != f.data() + f.size() || !std::isfinite(row.v[k - 2])) {
        throw FormatError("malformed number '" + std::string(f) + "'", line_no);
      }
    }
    rows.push_back(row);
  }

  MarketDataset ds;
  ds.has_oracle = oracle;
  long J = 0;
  while (J < static_cast<long>(rows.size()) && rows[J].market == 0) ++J;
  if (rows.empty()) {
    ds.J = 1;
  } else {
    if (J == 0) throw FormatError("first market must have id 0", rows[0].line);
    if (rows.size() % static_cast<std::size_t>(J) != 0) {
      throw FormatError("row count is not a multiple of J = " + std::to_string(J),
                        rows.back().line);
    }
    ds.J = static_cast<int>(J);
  }
  const auto n = static_cast<Eigen::Index>(J ? rows.size() / J : 0);
  for (Mat* m : {&ds.S, &ds.P, &ds.X, &ds.Z}) m->resize(n, ds.J);
  if (oracle) {
    for (Mat* m : {&ds.delta, &ds.xi, &ds.omega}) m->resize(n, ds.J);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const long m = static_cast<long>(i) / J, j = static_cast<long>(i) % J;
    if (r.market != m || r.j != j) {
      throw FormatError("expected market " + std::to_string(m) + " product " +
                            std::to_string(j),
                        r.line);
    }
    ds.S(m, j) = r.v[0];
    ds.P(m, j) = r.v[1];
    ds.X(m, j) = r.v[2];
    ds.Z(m, j) = r.v[3];
    if (oracle) {
      ds.delta(m, j) = r.v[4];
      ds.xi(m, j) = r.v[5];
      ds.omega(m, j) = r.v[6];
    }
  }
  for (Eigen::Index m = 0; m < n; ++m) {
    try {
      demand::validate_shares(ds.S.row(m).transpose(), ds.J);
    } catch (const InvalidArgument& e) {
      throw FormatError("market " + std::to_string(m) + " violates share invariants: " +
                            e.what(),
                        rows[static_cast<std::size_t>(m * J)].line);
    }
  }
  return ds;
}

MarketDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open '" + path.string() + "'");
  return read_dataset(in);
}

}  // namespace demandid::market
