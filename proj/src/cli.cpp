#include "demandid/cli.hpp"

#include "demandid/discrete.hpp"
#include "demandid/moments.hpp"
#include "demandid/pricing.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace demandid::cli {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;
using nlohmann::json;

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

const pt::ptree& section(const RunConfig& cfg, const std::string& name) {
  const auto child = cfg.tree.get_child_optional(name);
  if (!child) throw ConfigError("missing [" + name + "] section");
  return *child;
}

bool has_section(const RunConfig& cfg, const std::string& name) {
  return static_cast<bool>(cfg.tree.get_child_optional(name));
}

template <class T>
T get(const pt::ptree& sec, const std::string& name, const std::string& key) {
  const auto raw = sec.get_optional<std::string>(key);
  if (!raw) throw ConfigError("[" + name + "] missing key '" + key + "'");
  const auto v = sec.get_optional<T>(key);
  if (!v) throw ConfigError("[" + name + "] bad value for '" + key + "': '" + *raw + "'");
  return *v;
}

template <class T>
T get_or(const pt::ptree& sec, const std::string& name, const std::string& key, T fallback) {
  if (!sec.get_optional<std::string>(key)) return fallback;
  return get<T>(sec, name, key);
}

std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::string token;
  std::istringstream in(text);
  while (in >> token) {
    std::istringstream tok(token);
    std::string piece;
    while (std::getline(tok, piece, ',')) {
      if (piece.empty()) continue;
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(piece, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != piece.size() || !std::isfinite(v)) {
        throw ConfigError(what + ": malformed number '" + piece + "'");
      }
      out.push_back(v);
    }
  }
  return out;
}

// "a b; c d" -> {(a, b), (c, d)}
std::vector<Vec> parse_vector_list(const std::string& text, const std::string& what) {
  std::vector<Vec> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ';')) {
    const auto nums = parse_numbers(item, what);
    if (nums.empty()) continue;
    out.push_back(Eigen::Map<const Vec>(nums.data(), static_cast<Eigen::Index>(nums.size())));
  }
  if (out.empty()) throw ConfigError(what + " is empty");
  return out;
}

Vec parse_vector(const std::string& text, const std::string& what) {
  const auto nums = parse_numbers(text, what);
  if (nums.empty()) throw ConfigError(what + " is empty");
  return Eigen::Map<const Vec>(nums.data(), static_cast<Eigen::Index>(nums.size()));
}

json to_json(const Vec& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

json to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_json(Vec(m.row(r).transpose())));
  return rows;
}

json header(const RunConfig& cfg, const std::string& kind) {
  return json{{"kind", kind}, {"config_hash", cfg.hash}, {"seed", cfg.seed}};
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
}

fs::path prepare_out(const RunConfig& cfg) {
  fs::create_directories(cfg.out);
  return cfg.out;
}

fs::path resolve(const RunConfig& cfg, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : cfg.directory / path;
}

json moment_report_json(const moments::MomentReport& r) {
  json instruments = json::array();
  for (const auto& im : r.instruments) {
    json rec{{"name", im.name}, {"excluded", im.excluded}};
    if (!im.excluded) {
      rec["moment"] = to_json(im.moment);
      rec["se"] = to_json(im.se);
      rec["t"] = to_json(im.t);
    }
    instruments.push_back(std::move(rec));
  }
  std::ostringstream note;
  note << "threshold |t| > " << r.threshold << " applied to " << r.n_tests
       << " statistics; a Bonferroni bound at this threshold is "
       << r.n_tests * std::erfc(r.threshold / std::sqrt(2.0));
  return json{{"n", r.n},
              {"threshold", r.threshold},
              {"n_tests", r.n_tests},
              {"max_abs_t", r.max_abs_t},
              {"verdict", std::string(moments::to_string(r.verdict))},
              {"excluded", r.excluded},
              {"bonferroni_note", note.str()},
              {"instruments", instruments}};
}

market::MarketDataset screening_dataset(const RunConfig& cfg) {
  if (has_section(cfg, "screen")) {
    const auto& sec = section(cfg, "screen");
    if (const auto path = sec.get_optional<std::string>("dataset")) {
      return market::read_dataset(resolve(cfg, *path));
    }
  }
  return market::sample_markets(parse_dgp(cfg));
}

}  // namespace

RunConfig load_config(const Options& opts) {
  if (opts.threads > 0) set_thread_count(opts.threads);
  std::ifstream in(opts.config, std::ios::binary);
  if (!in) throw ConfigError("cannot open config '" + opts.config.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  RunConfig cfg;
  std::istringstream parse_in(text);
  try {
    pt::ini_parser::read_ini(parse_in, cfg.tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  cfg.directory = opts.config.parent_path();
  cfg.hash = fnv1a_hex(text);

  const auto run = cfg.tree.get_child_optional("run");
  if (opts.seed) {
    cfg.seed = *opts.seed;
  } else {
    if (!run) throw ConfigError("missing [run] section (seed is mandatory)");
    cfg.seed = get<std::uint64_t>(*run, "run", "seed");
  }
  cfg.oracle = opts.oracle || (run && get_or<bool>(*run, "run", "oracle", false));
  cfg.out = opts.out;
  return cfg;
}

market::DgpConfig parse_dgp(const RunConfig& cfg) {
  const std::string name = "dgp";
  const auto& sec = section(cfg, name);
  market::DgpConfig dgp;
  dgp.seed = cfg.seed;
  dgp.n_markets = get<int>(sec, name, "n_markets");
  const int J = get<int>(sec, name, "J");
  const double alpha = get<double>(sec, name, "alpha");
  const auto family = get_or<std::string>(sec, name, "family", "logit");
  try {
    if (demand::family_from_string(family) == demand::Family::logit) {
      dgp.spec = demand::logit_spec(J, alpha);
    } else {
      dgp.spec = demand::mixed_logit_spec(J, alpha, get<double>(sec, name, "mixing_sigma"),
                                          get_or<int>(sec, name, "mixing_nodes", 5));
    }
    dgp.family.kind = pricing::price_kind_from_string(get<std::string>(sec, name, "price"));
    dgp.index_form =
        market::index_form_from_string(get_or<std::string>(sec, name, "index", "linear"));
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidArgument& e) {
    throw ConfigError("[dgp] " + std::string(e.what()));
  }
  dgp.family.gamma_x = get_or<double>(sec, name, "gamma_x", 0.0);
  dgp.family.gamma_delta = get_or<double>(sec, name, "gamma_delta", 0.0);
  dgp.family.kappa = get_or<double>(sec, name, "kappa", 0.0);
  dgp.family.gamma0 = get_or<double>(sec, name, "gamma0", 0.0);
  if (dgp.family.kind == pricing::PriceKind::bertrand) dgp.family.demand = dgp.spec;
  dgp.x_support = parse_vector_list(get<std::string>(sec, name, "x_support"), "[dgp] x_support");
  dgp.z_support = parse_vector_list(get<std::string>(sec, name, "z_support"), "[dgp] z_support");
  dgp.rho = get_or<double>(sec, name, "rho", 0.0);
  dgp.tau = get_or<double>(sec, name, "tau", 0.0);
  if (const auto support = sec.get_optional<std::string>("delta_support")) {
    market::DiscreteIndexLaw law;
    law.support = parse_vector_list(*support, "[dgp] delta_support");
    const auto rows = parse_vector_list(get<std::string>(sec, name, "delta_law"), "[dgp] delta_law");
    law.transition.resize(static_cast<Eigen::Index>(rows.size()), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != rows.front().size()) {
        throw ConfigError("[dgp] delta_law rows must have equal length");
      }
      law.transition.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
    }
    dgp.discrete_index = std::move(law);
  }
  try {
    dgp.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError("[dgp] " + std::string(e.what()));
  }
  return dgp;
}

namespace {

screening::Transform parse_transform(const std::string& text, const std::string& where) {
  std::istringstream in(text);
  std::string kind;
  in >> kind;
  if (kind == "affine") {
    std::string rest;
    std::getline(in, rest);
    const auto nums = parse_numbers(rest, where);
    if (nums.size() != 2) throw ConfigError(where + ": affine needs 'affine a b'");
    try {
      return screening::affine_transform(nums[0], nums[1]);
    } catch (const InvalidArgument& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  if (kind == "cubic") return screening::cubic_transform();
  throw ConfigError(where + ": unknown transform '" + kind + "'");
}

}  // namespace

screening::CandidateInverse parse_candidate(const RunConfig& cfg,
                                            const demand::DemandSpec& truth) {
  const std::string name = "candidate";
  const auto& sec = section(cfg, name);
  const auto kind = get<std::string>(sec, name, "kind");
  std::optional<screening::CandidateInverse> base;
  try {
    if (kind == "logit_inverse") {
      base = screening::CandidateInverse::logit_inverse(truth.J, get<double>(sec, name, "alpha"));
    } else if (kind == "truth") {
      base = screening::CandidateInverse::demand_inverse(truth);
    } else {
      throw ConfigError("[candidate] unknown kind '" + kind + "'");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidArgument& e) {
    throw ConfigError("[candidate] " + std::string(e.what()));
  }
  const auto transform = get_or<std::string>(sec, name, "transform", "none");
  if (transform == "none") return *base;
  return screening::CandidateInverse::transformed(*base,
                                                  parse_transform(transform, "[candidate] transform"));
}

counterexample::CexConfig parse_counterexample(const RunConfig& cfg) {
  const std::string name = "counterexample";
  const auto& sec = section(cfg, name);
  counterexample::CexConfig out;
  out.seed = cfg.seed;
  out.x_grid = parse_numbers(get_or<std::string>(sec, name, "x_grid", "0.5 1"), "[counterexample] x_grid");
  out.z_grid = parse_numbers(get_or<std::string>(sec, name, "z_grid", "1 2"), "[counterexample] z_grid");
  out.n_per_cell = get_or<long>(sec, name, "n_per_cell", 200000);
  try {
    out.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError("[counterexample] " + std::string(e.what()));
  }
  return out;
}

int cmd_simulate(const Options& opts) {
  const auto cfg = load_config(opts);
  const auto dgp = parse_dgp(cfg);
  market::SampleStats stats;
  const auto ds = market::sample_markets(dgp, &stats);
  const auto out = prepare_out(cfg);
  market::write_dataset(cfg.oracle ? ds : ds.without_oracle(), out / "dataset.csv");

  const auto x_cells = market::cell_labels(ds.X);
  const auto xz_cells = market::cell_labels(ds.X, ds.Z);
  const auto x_table = moments::conditional_mean(ds.X, x_cells);
  json cells = json::array();
  double worst_ratio = 0.0;
  for (std::size_t c = 0; c < x_table.cells.size(); ++c) {
    Mat zc, xic;
    std::vector<Eigen::Index> rows;
    for (std::size_t r = 0; r < x_cells.size(); ++r) {
      if (x_cells[r] == static_cast<int>(c)) rows.push_back(static_cast<Eigen::Index>(r));
    }
    zc.resize(static_cast<Eigen::Index>(rows.size()), ds.J);
    xic.resize(static_cast<Eigen::Index>(rows.size()), ds.J);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      zc.row(static_cast<Eigen::Index>(i)) = ds.Z.row(rows[i]);
      xic.row(static_cast<Eigen::Index>(i)) = ds.xi.row(rows[i]);
    }
    const double bound = 3.0 / std::sqrt(static_cast<double>(rows.size()));
    double corr = 0.0;
    if (rows.size() >= 2 && (zc.array() != zc(0, 0)).any()) {
      corr = market::pooled_correlation(zc, xic);
    }
    worst_ratio = std::max(worst_ratio, std::abs(corr) / bound);
    cells.push_back({{"x", to_json(x_table.cells[c].mean)},
                     {"count", x_table.cells[c].count},
                     {"corr_z_xi", corr},
                     {"bound", bound}});
  }
  json summary = header(cfg, "simulate");
  summary["n_markets"] = ds.n_markets();
  summary["J"] = ds.J;
  summary["rows"] = ds.n_markets() * ds.J;
  summary["x_cells"] = cells;
  summary["xz_cells"] = moments::conditional_mean(ds.X, xz_cells).cells.size();
  summary["corr_xi_x"] = ds.n_markets() >= 2 ? market::pooled_correlation(ds.xi, ds.X) : 0.0;
  summary["max_corr_z_xi_over_bound"] = worst_ratio;
  summary["bertrand_start_sensitive"] = stats.bertrand_start_sensitive;
  summary["bertrand_negative_price"] = stats.bertrand_negative_price;
  summary["oracle_columns"] = cfg.oracle;
  summary["status"] = "pass";
  write_json(out / "simulate_summary.json", summary);
  if (stats.bertrand_start_sensitive > 0) {
    std::cerr << "warning: " << stats.bertrand_start_sensitive
              << " markets had Bertrand prices sensitive to the starting point\n";
  }
  return kOk;
}

int cmd_screen(const Options& opts) {
  const auto cfg = load_config(opts);
  const auto ds = screening_dataset(cfg);
  demand::DemandSpec truth = demand::logit_spec(ds.J, 1.0);
  if (has_section(cfg, "dgp")) truth = parse_dgp(cfg).spec;
  const auto cand = parse_candidate(cfg, truth);
  const double threshold =
      has_section(cfg, "screen") ? get_or<double>(section(cfg, "screen"), "screen", "threshold", 4.0)
                                 : 4.0;
  const auto report = screening::screen(ds, cand, threshold);
  json j = header(cfg, "screen");
  j["candidate"] = cand.id();
  j["report"] = moment_report_json(report);
  j["status"] = report.verdict == moments::Verdict::pass ? "pass" : "reject";
  write_json(prepare_out(cfg) / "screen_report.json", j);
  return report.verdict == moments::Verdict::pass ? kOk : kRejected;
}

int cmd_counterfactual(const Options& opts) {
  const auto cfg = load_config(opts);
  const auto dgp = parse_dgp(cfg);
  const auto ds = market::sample_markets(dgp);
  const auto cand = parse_candidate(cfg, dgp.spec);
  const std::string name = "counterfactual";
  const pt::ptree empty;
  const auto& sec = has_section(cfg, name) ? section(cfg, name) : empty;
  const int n_probes = get_or<int>(sec, name, "n_probes", 1000);

  std::vector<screening::Transform> transforms;
  const auto spec_text = get_or<std::string>(sec, name, "transforms",
                                             "affine 0.5 -1; affine 0.5 1; affine 2 -1; affine 2 1; cubic");
  std::istringstream in(spec_text);
  std::string item;
  while (std::getline(in, item, ';')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    transforms.push_back(parse_transform(item, "[counterfactual] transforms"));
  }

  json audits = json::array();
  bool ok = true;
  for (const auto& T : transforms) {
    const double dev = screening::invariance_audit(ds, cand, {T}, n_probes, cfg.seed);
    const double bound = T.affine ? 1e-8 : 1e-6;
    ok = ok && dev <= bound;
    audits.push_back({{"transform", T.name}, {"max_deviation", dev}, {"bound", bound}});
  }
  json j = header(cfg, "counterfactual");
  j["candidate"] = cand.id();
  j["n_probes"] = n_probes;
  j["invariance"] = audits;
  if (cfg.oracle) {
    j["oracle_max_error"] =
        screening::oracle_counterfactual_error(ds, cand, dgp.spec, n_probes, cfg.seed);
  }
  if (const auto s_text = sec.get_optional<std::string>("s")) {
    const auto result = screening::counterfactual(
        cand, parse_vector(*s_text, "[counterfactual] s"),
        parse_vector(get<std::string>(sec, name, "p"), "[counterfactual] p"),
        parse_vector(get<std::string>(sec, name, "p_prime"), "[counterfactual] p_prime"));
    j["query"] = {{"s_prime", to_json(result.s_prime)},
                  {"p", to_json(result.p)},
                  {"p_prime", to_json(result.p_prime)}};
  }
  j["status"] = ok ? "pass" : "reject";
  write_json(prepare_out(cfg) / "counterfactual_report.json", j);
  return ok ? kOk : kRejected;
}

int cmd_certify_discrete(const Options& opts) {
  const auto cfg = load_config(opts);
  const auto dgp = parse_dgp(cfg);
  if (!dgp.discrete_index) throw ConfigError("[dgp] certify-discrete needs delta_support and delta_law");
  const std::string name = "certify";
  const pt::ptree empty;
  const auto& sec = has_section(cfg, name) ? section(cfg, name) : empty;
  const auto h_kind = get_or<std::string>(sec, name, "H", "delta_sq");
  const double weight = get_or<double>(sec, name, "price_weight", 0.1);
  discrete::IndexPriceFunction H;
  if (h_kind == "delta_sq") {
    H = [](const Vec& d, const Vec&) { return d.squaredNorm(); };
  } else if (h_kind == "delta_plus_price") {
    H = [weight](const Vec& d, const Vec& p) { return d.sum() + weight * p.sum(); };
  } else {
    throw ConfigError("[certify] unknown H '" + h_kind + "'");
  }
  const auto cert = discrete::certify_discrete_faithfulness(dgp, H);

  json cells = json::array();
  for (const auto& c : cert.cells) {
    cells.push_back({{"x", to_json(c.x)},
                     {"z", to_json(c.z)},
                     {"difference", c.difference},
                     {"se", c.se},
                     {"count", c.count}});
  }
  json j = header(cfg, "certify-discrete");
  j["H"] = h_kind;
  j["certified"] = cert.certified;
  j["rank_deficient"] = cert.rank_deficient;
  j["extended"] = cert.extended;
  j["message"] = cert.message;
  j["Q"] = to_json(cert.q.Q);
  j["rank"] = cert.rank.rank;
  j["condition"] = std::isfinite(cert.rank.condition) ? json(cert.rank.condition) : json("inf");
  j["singular_values"] = to_json(cert.rank.singular_values);
  j["noise_floor"] = cert.noise_floor;
  j["statistical_rank"] = cert.statistical_rank;
  j["k_target"] = to_json(cert.k_target);
  if (!cert.rank_deficient) {
    j["H0"] = to_json(cert.H0);
    j["cells"] = cells;
    j["max_cell_z"] = cert.max_cell_z;
    j["max_row_discrepancy"] = cert.max_row_discrepancy;
  }
  j["status"] = cert.certified ? "pass" : "reject";
  write_json(prepare_out(cfg) / "certificate.json", j);
  if (!cert.certified) std::cerr << cert.message << '\n';
  return cert.certified ? kOk : kRejected;
}

namespace {

struct DeconvSetup {
  deconvolution::OperatorGrid grid;
  deconvolution::ScaleField scale;
};

DeconvSetup deconv_setup(const RunConfig& cfg) {
  const auto& g = section(cfg, "grid");
  deconvolution::OperatorGrid grid(get_or<double>(g, "grid", "L", 40.0),
                                   get_or<int>(g, "grid", "N", 4096),
                                   get_or<double>(g, "grid", "s", 3.0));
  const pt::ptree empty;
  const auto& sc = has_section(cfg, "scale") ? section(cfg, "scale") : empty;
  const auto kind = get_or<std::string>(sc, "scale", "kind", "bump");
  if (kind == "constant") return {grid, deconvolution::ScaleField::constant_one(grid)};
  if (kind == "bump") {
    return {grid, deconvolution::ScaleField::bump(grid, get_or<double>(sc, "scale", "psi", 0.0))};
  }
  if (kind == "file") {
    return {grid, deconvolution::ScaleField::from_values(
                      grid, deconvolution::read_grid_function(
                                resolve(cfg, get<std::string>(sc, "scale", "path")), grid))};
  }
  throw ConfigError("[scale] unknown kind '" + kind + "'");
}

json neumann_json(const deconvolution::NeumannDiagnostics& d) {
  return json{{"contraction", d.contraction},
              {"terms", d.terms},
              {"residual", d.residual},
              {"correction_norms", d.correction_norms}};
}

}  // namespace

int cmd_deconv_solve(const Options& opts) {
  const auto cfg = load_config(opts);
  auto [grid, scale] = deconv_setup(cfg);
  const pt::ptree empty;
  const auto& sec = has_section(cfg, "deconv") ? section(cfg, "deconv") : empty;
  const auto rhs = get_or<std::string>(sec, "deconv", "rhs", "bump");
  Vec k;
  std::optional<Vec> truth;
  if (rhs == "bump") {
    truth = (-grid.nodes().array().square()).exp().matrix();
    k = deconvolution::apply_T(grid, scale, *truth);
  } else {
    k = deconvolution::read_grid_function(resolve(cfg, rhs), grid);
  }
  deconvolution::NeumannOptions nopts;
  nopts.tol = get_or<double>(sec, "deconv", "tol", 1e-10);
  nopts.max_terms = get_or<int>(sec, "deconv", "max_terms", 200);

  json j = header(cfg, "deconv-solve");
  j["grid"] = {{"L", grid.L()}, {"N", grid.N()}, {"s", grid.s()}};
  j["scale"] = {{"sup_dev", scale.sup_dev}, {"int_dev", scale.int_dev}};
  const auto out = prepare_out(cfg);
  try {
    const auto sol = deconvolution::neumann_solve(grid, scale, k, nopts);
    j["neumann"] = neumann_json(sol.diagnostics);
    if (truth) j["max_error_vs_bump"] = (sol.u - *truth).cwiseAbs().maxCoeff();
    j["status"] = "pass";
    deconvolution::write_grid_function(out / "deconv_solution.csv", grid, sol.u);
    write_json(out / "deconv_solve.json", j);
    return kOk;
  } catch (const deconvolution::ContractionRefusal& e) {
    j["refused"] = e.what();
    j["contraction"] = e.value();
    j["status"] = "reject";
    write_json(out / "deconv_solve.json", j);
    std::cerr << e.what() << '\n';
    return kRejected;
  }
}

int cmd_deconv_diagnose(const Options& opts) {
  const auto cfg = load_config(opts);
  const auto [grid, scale] = deconv_setup(cfg);
  const auto est = deconvolution::contraction_profile(grid, scale);
  json j = header(cfg, "deconv-diagnose");
  j["grid"] = {{"L", grid.L()}, {"N", grid.N()}, {"s", grid.s()}};
  j["scale"] = {{"sup_dev", scale.sup_dev}, {"int_dev", scale.int_dev}};
  j["contraction"] = est.value;
  j["argmax_frequency"] = est.argmax_frequency;
  j["status"] = est.value < 1.0 ? "pass" : "reject";
  const auto out = prepare_out(cfg);
  write_json(out / "deconv_diagnose.json", j);
  std::ofstream profile(out / "deconv_profile.csv", std::ios::binary);
  profile << "frequency,bound\n";
  char buf[96];
  for (int l = 0; l < grid.N(); ++l) {
    const int idx = (l + grid.N() / 2) % grid.N();  // ascending frequency
    const int len = std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", grid.frequencies()(idx),
                                  est.profile(idx));
    profile.write(buf, len);
  }
  return est.value < 1.0 ? kOk : kRejected;
}

int cmd_counterexample(const Options& opts) {
  const auto cfg = load_config(opts);
  const auto cex = parse_counterexample(cfg);
  const int n_bins = get_or<int>(section(cfg, "counterexample"), "counterexample", "n_bins", 2);
  const auto table = counterexample::sample_cex(cex);
  const auto flat = counterexample::faithfulness_failure_test(table, cex);
  const auto rank = counterexample::completeness_diagnostic(table, n_bins);

  auto cells_json = [](const std::vector<counterexample::CellMean>& cells) {
    json arr = json::array();
    for (const auto& c : cells) {
      arr.push_back({{"z", c.z}, {"mean", c.mean}, {"se", c.se}, {"count", c.count}});
    }
    return arr;
  };
  json by_x = json::array();
  for (const auto& fx : flat.by_x) {
    by_x.push_back({{"x", fx.x},
                    {"indicator", cells_json(fx.indicator)},
                    {"indicator_max_z", fx.indicator_max_z},
                    {"indicator_flat", fx.indicator_flat},
                    {"closed_form", fx.closed_form},
                    {"closed_form_gap", fx.closed_form_gap},
                    {"closed_form_se", fx.closed_form_se},
                    {"closed_form_agrees", fx.closed_form_agrees},
                    {"price", cells_json(fx.price)},
                    {"price_min_z", fx.price_min_z},
                    {"price_detected", fx.price_detected}});
  }
  json j = header(cfg, "counterexample");
  j["n_per_cell"] = cex.n_per_cell;
  j["flatness"] = {{"by_x", by_x},
                   {"faithfulness_fails", flat.faithfulness_fails},
                   {"price_moves", flat.price_moves}};
  j["rank"] = {{"n_bins", rank.n_bins},
               {"rows", rank.rows},
               {"columns", rank.columns},
               {"singular_values", to_json(rank.singular_values)},
               {"numerical_rank", rank.numerical_rank},
               {"noise_floor", rank.noise_floor},
               {"statistical_rank", rank.statistical_rank},
               {"full_rank", rank.full_rank},
               {"warnings", rank.warnings},
               {"note", rank.note}};
  const bool ok = flat.faithfulness_fails && flat.price_moves && rank.full_rank;
  j["status"] = ok ? "pass" : "reject";
  const auto out = prepare_out(cfg);
  write_json(out / "counterexample_report.json", j);
  if (cfg.oracle) market::write_dataset(counterexample::to_dataset(table), out / "counterexample.csv");
  return ok ? kOk : kRejected;
}

int cmd_report(const fs::path& report, std::ostream& out) {
  std::ifstream in(report, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open report '" + report.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidArgument("report '" + report.string() + "' is not valid JSON: " + e.what());
  }
  if (!j.contains("kind") || !j.contains("status")) {
    throw InvalidArgument("report '" + report.string() + "' lacks kind/status fields");
  }
  out << "kind        " << j["kind"].get<std::string>() << '\n'
      << "config_hash " << j.value("config_hash", std::string("?")) << '\n'
      << "seed        " << j.value("seed", std::uint64_t{0}) << '\n'
      << "status      " << j["status"].get<std::string>() << '\n';
  if (j.contains("report")) {
    const auto& r = j["report"];
    out << "n = " << r["n"] << ", threshold = " << r["threshold"]
        << ", max |t| = " << r["max_abs_t"] << '\n';
    out << "instrument\tmoment\tse\tt\n";
    for (const auto& im : r["instruments"]) {
      if (im["excluded"].get<bool>()) {
        out << im["name"].get<std::string>() << "\t(excluded: zero variance)\n";
        continue;
      }
      for (std::size_t c = 0; c < im["moment"].size(); ++c) {
        out << im["name"].get<std::string>() << '[' << c << "]\t" << im["moment"][c] << '\t'
            << im["se"][c] << '\t' << im["t"][c] << '\n';
      }
    }
  } else {
    for (const auto& [key, value] : j.items()) {
      if (key == "kind" || key == "config_hash" || key == "seed" || key == "status") continue;
      if (value.is_primitive()) out << key << " = " << value << '\n';
    }
  }
  return j["status"] == "pass" ? kOk : kRejected;
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const deconvolution::NeumannDivergence& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  } catch (const ConvergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const pt::ptree_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  }
}

}  // namespace demandid::cli
