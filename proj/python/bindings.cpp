#include "demandid/counterexample.hpp"
#include "demandid/deconvolution.hpp"
#include "demandid/demand.hpp"
#include "demandid/discrete.hpp"
#include "demandid/market.hpp"
#include "demandid/moments.hpp"
#include "demandid/pricing.hpp"
#include "demandid/screening.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace demandid;

namespace {

std::vector<Vec> to_support(const std::vector<std::vector<double>>& rows) {
  std::vector<Vec> out;
  for (const auto& r : rows) out.push_back(Eigen::Map<const Vec>(r.data(), static_cast<Eigen::Index>(r.size())));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Demand inversion, screening and identification diagnostics";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<discrete::CompletenessFailure>(m, "CompletenessFailure", PyExc_RuntimeError);
  py::register_exception<deconvolution::ContractionRefusal>(m, "ContractionRefusal", PyExc_RuntimeError);
  py::register_exception<deconvolution::NeumannDivergence>(m, "NeumannDivergence", PyExc_RuntimeError);

  // demand
  py::enum_<demand::Family>(m, "Family")
      .value("logit", demand::Family::logit)
      .value("mixed_logit", demand::Family::mixed_logit);
  py::class_<demand::DemandSpec>(m, "DemandSpec")
      .def_readonly("family", &demand::DemandSpec::family)
      .def_readonly("alpha", &demand::DemandSpec::alpha)
      .def_readonly("J", &demand::DemandSpec::J)
      .def("type_alphas", &demand::DemandSpec::type_alphas)
      .def("type_weights", &demand::DemandSpec::type_weights);
  m.def("logit_spec", &demand::logit_spec, py::arg("J"), py::arg("alpha"));
  m.def("mixed_logit_spec", &demand::mixed_logit_spec, py::arg("J"), py::arg("alpha"),
        py::arg("sigma"), py::arg("n_nodes"));
  m.def("share", &demand::share, py::arg("spec"), py::arg("delta"), py::arg("p"));
  m.def("invert_share", &demand::invert_share, py::arg("spec"), py::arg("s"), py::arg("p"));

  // pricing
  py::enum_<pricing::PriceKind>(m, "PriceKind")
      .value("exogenous", pricing::PriceKind::exogenous)
      .value("lambda_index", pricing::PriceKind::lambda_index)
      .value("separable", pricing::PriceKind::separable)
      .value("bertrand", pricing::PriceKind::bertrand);
  py::class_<pricing::PriceFamily>(m, "PriceFamily")
      .def(py::init<>())
      .def_readwrite("kind", &pricing::PriceFamily::kind)
      .def_readwrite("gamma_x", &pricing::PriceFamily::gamma_x)
      .def_readwrite("gamma_delta", &pricing::PriceFamily::gamma_delta)
      .def_readwrite("kappa", &pricing::PriceFamily::kappa)
      .def_readwrite("gamma0", &pricing::PriceFamily::gamma0)
      .def_readwrite("demand", &pricing::PriceFamily::demand);
  m.def("bertrand_prices", &pricing::bertrand_prices, py::arg("spec"), py::arg("delta"),
        py::arg("cost"));

  // markets
  py::enum_<market::IndexForm>(m, "IndexForm")
      .value("linear", market::IndexForm::linear)
      .value("nonseparable", market::IndexForm::nonseparable);
  py::class_<market::DgpConfig>(m, "DgpConfig")
      .def(py::init<>())
      .def_readwrite("n_markets", &market::DgpConfig::n_markets)
      .def_readwrite("spec", &market::DgpConfig::spec)
      .def_readwrite("family", &market::DgpConfig::family)
      .def_property(
          "x_support", [](const market::DgpConfig& c) { return c.x_support; },
          [](market::DgpConfig& c, const std::vector<std::vector<double>>& v) {
            c.x_support = to_support(v);
          })
      .def_property(
          "z_support", [](const market::DgpConfig& c) { return c.z_support; },
          [](market::DgpConfig& c, const std::vector<std::vector<double>>& v) {
            c.z_support = to_support(v);
          })
      .def_readwrite("rho", &market::DgpConfig::rho)
      .def_readwrite("index_form", &market::DgpConfig::index_form)
      .def_readwrite("tau", &market::DgpConfig::tau)
      .def_readwrite("seed", &market::DgpConfig::seed)
      .def("set_discrete_index",
           [](market::DgpConfig& c, const std::vector<std::vector<double>>& support,
              const Mat& transition) {
             c.discrete_index = market::DiscreteIndexLaw{to_support(support), transition};
           })
      .def("validate", &market::DgpConfig::validate);
  py::class_<market::MarketDataset>(m, "MarketDataset")
      .def_readonly("J", &market::MarketDataset::J)
      .def_readonly("S", &market::MarketDataset::S)
      .def_readonly("P", &market::MarketDataset::P)
      .def_readonly("X", &market::MarketDataset::X)
      .def_readonly("Z", &market::MarketDataset::Z)
      .def_readonly("has_oracle", &market::MarketDataset::has_oracle)
      .def_readonly("delta", &market::MarketDataset::delta)
      .def_readonly("xi", &market::MarketDataset::xi)
      .def_readonly("omega", &market::MarketDataset::omega)
      .def_property_readonly("n_markets", &market::MarketDataset::n_markets)
      .def("without_oracle", &market::MarketDataset::without_oracle);
  m.def("sample_markets", [](const market::DgpConfig& c) { return market::sample_markets(c); },
        py::arg("config"), py::call_guard<py::gil_scoped_release>());
  m.def("read_dataset", py::overload_cast<const std::filesystem::path&>(&market::read_dataset));
  m.def("write_dataset",
        py::overload_cast<const market::MarketDataset&, const std::filesystem::path&>(
            &market::write_dataset));

  // screening
  py::class_<moments::InstrumentMoment>(m, "InstrumentMoment")
      .def_readonly("name", &moments::InstrumentMoment::name)
      .def_readonly("moment", &moments::InstrumentMoment::moment)
      .def_readonly("se", &moments::InstrumentMoment::se)
      .def_readonly("t", &moments::InstrumentMoment::t)
      .def_readonly("excluded", &moments::InstrumentMoment::excluded);
  py::class_<moments::MomentReport>(m, "MomentReport")
      .def_readonly("instruments", &moments::MomentReport::instruments)
      .def_readonly("excluded", &moments::MomentReport::excluded)
      .def_readonly("threshold", &moments::MomentReport::threshold)
      .def_readonly("n", &moments::MomentReport::n)
      .def_readonly("n_tests", &moments::MomentReport::n_tests)
      .def_readonly("max_abs_t", &moments::MomentReport::max_abs_t)
      .def_property_readonly("verdict", [](const moments::MomentReport& r) {
        return std::string(moments::to_string(r.verdict));
      });
  py::class_<screening::Transform>(m, "Transform").def_readonly("name", &screening::Transform::name);
  m.def("affine_transform", &screening::affine_transform, py::arg("a"), py::arg("b"));
  m.def("cubic_transform", &screening::cubic_transform);
  py::class_<screening::CandidateInverse>(m, "CandidateInverse")
      .def_static("logit_inverse", &screening::CandidateInverse::logit_inverse, py::arg("J"),
                  py::arg("alpha"))
      .def_static("demand_inverse", &screening::CandidateInverse::demand_inverse)
      .def_static("transformed", &screening::CandidateInverse::transformed)
      .def_property_readonly("id", &screening::CandidateInverse::id)
      .def_property_readonly("J", &screening::CandidateInverse::J)
      .def("evaluate", &screening::CandidateInverse::evaluate, py::arg("s"), py::arg("p"))
      .def("invert", &screening::CandidateInverse::invert, py::arg("v"), py::arg("p"));
  m.def("screen", &screening::screen, py::arg("dataset"), py::arg("candidate"),
        py::arg("threshold") = 4.0, py::call_guard<py::gil_scoped_release>());
  m.def(
      "counterfactual",
      [](const screening::CandidateInverse& c, const Vec& s, const Vec& p, const Vec& pp) {
        return screening::counterfactual(c, s, p, pp).s_prime;
      },
      py::arg("candidate"), py::arg("s"), py::arg("p"), py::arg("p_prime"));

  // discrete faithfulness
  py::class_<discrete::RankReport>(m, "RankReport")
      .def_readonly("rank", &discrete::RankReport::rank)
      .def_readonly("condition", &discrete::RankReport::condition)
      .def_readonly("singular_values", &discrete::RankReport::singular_values);
  py::class_<discrete::H0Solution>(m, "H0Solution")
      .def_readonly("H0", &discrete::H0Solution::H0)
      .def_readonly("residual", &discrete::H0Solution::residual)
      .def_readonly("extended", &discrete::H0Solution::extended);
  m.def("completeness_rank", &discrete::completeness_rank, py::arg("Q"));
  m.def("solve_H0", &discrete::solve_H0, py::arg("Q"), py::arg("k"));

  // deconvolution
  py::class_<deconvolution::OperatorGrid>(m, "OperatorGrid")
      .def(py::init<double, int, double>(), py::arg("L"), py::arg("N"), py::arg("s"))
      .def_property_readonly("nodes", &deconvolution::OperatorGrid::nodes)
      .def_property_readonly("q", &deconvolution::OperatorGrid::q)
      .def_property_readonly("q_hat", &deconvolution::OperatorGrid::q_hat)
      .def("q_at", &deconvolution::OperatorGrid::q_at);
  py::class_<deconvolution::ScaleField>(m, "ScaleField")
      .def_static("bump", &deconvolution::ScaleField::bump, py::arg("grid"), py::arg("psi"))
      .def_static("constant_one", &deconvolution::ScaleField::constant_one)
      .def_static("from_values", &deconvolution::ScaleField::from_values)
      .def_readonly("sigma", &deconvolution::ScaleField::sigma);
  m.def("apply_T0", &deconvolution::apply_T0, py::arg("grid"), py::arg("u"));
  m.def("solve_T0", &deconvolution::solve_T0, py::arg("grid"), py::arg("k"));
  m.def("apply_T", &deconvolution::apply_T, py::arg("grid"), py::arg("scale"), py::arg("u"));
  m.def("contraction_diagnostic", &deconvolution::contraction_diagnostic, py::arg("grid"),
        py::arg("scale"));
  m.def(
      "neumann_solve",
      [](const deconvolution::OperatorGrid& g, const deconvolution::ScaleField& f, const Vec& k,
         double tol, int max_terms) {
        const auto sol = deconvolution::neumann_solve(g, f, k, {tol, max_terms});
        py::dict diag;
        diag["contraction"] = sol.diagnostics.contraction;
        diag["terms"] = sol.diagnostics.terms;
        diag["residual"] = sol.diagnostics.residual;
        diag["correction_norms"] = sol.diagnostics.correction_norms;
        return py::make_tuple(sol.u, diag);
      },
      py::arg("grid"), py::arg("scale"), py::arg("k"), py::arg("tol") = 1e-10,
      py::arg("max_terms") = 200);

  // completeness without faithfulness
  py::class_<counterexample::CexConfig>(m, "CexConfig")
      .def(py::init<>())
      .def_readwrite("x_grid", &counterexample::CexConfig::x_grid)
      .def_readwrite("z_grid", &counterexample::CexConfig::z_grid)
      .def_readwrite("n_per_cell", &counterexample::CexConfig::n_per_cell)
      .def_readwrite("seed", &counterexample::CexConfig::seed);
  py::class_<counterexample::CexTable>(m, "CexTable")
      .def_readonly("delta", &counterexample::CexTable::delta)
      .def_readonly("P", &counterexample::CexTable::P)
      .def_readonly("X", &counterexample::CexTable::X)
      .def_readonly("Z", &counterexample::CexTable::Z);
  m.def("sample_cex", &counterexample::sample_cex, py::call_guard<py::gil_scoped_release>());
  m.def("faithfulness_failure_test", [](const counterexample::CexTable& t,
                                        const counterexample::CexConfig& c) {
    const auto r = counterexample::faithfulness_failure_test(t, c);
    return py::make_tuple(r.faithfulness_fails, r.price_moves);
  });
  m.def(
      "completeness_diagnostic",
      [](const counterexample::CexTable& t, int n_bins) {
        const auto r = counterexample::completeness_diagnostic(t, n_bins);
        py::dict out;
        out["singular_values"] = r.singular_values;
        out["noise_floor"] = r.noise_floor;
        out["statistical_rank"] = r.statistical_rank;
        out["full_rank"] = r.full_rank;
        return out;
      },
      py::arg("table"), py::arg("n_bins") = 2);
}
