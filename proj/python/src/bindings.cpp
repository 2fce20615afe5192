#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tbudget/commands.hpp"
#include "tbudget/errors.hpp"
#include "tbudget/families.hpp"
#include "tbudget/planner.hpp"
#include "tbudget/simlab.hpp"
#include "tbudget/trainer.hpp"

namespace py = pybind11;
using namespace tbudget;

namespace {

py::dict plan_dict(const TransferPlan& plan) {
  py::dict d;
  d["s_star"] = plan.s_star;
  d["alpha_star"] = plan.alpha_star;
  d["n_star"] = plan.n_star;
  d["predicted_proxy"] = plan.predicted_proxy;
  d["continuous_alpha"] = plan.continuous_alpha;
  d["continuous_proxy"] = plan.continuous_proxy;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Transfer-quantity planning core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<Infeasible>(m, "Infeasible", PyExc_RuntimeError);

  py::class_<Family>(m, "Family")
      .def_static("gaussian", &Family::gaussian, py::arg("sigma") = 1.0, py::arg("dim") = 1)
      .def_static("bernoulli", &Family::bernoulli)
      .def_static("categorical", &Family::categorical, py::arg("classes"))
      .def_static(
          "softmax", [](int F, int C) { return Family::softmax(F, C); }, py::arg("feature_dim"), py::arg("classes"))
      .def_property_readonly("dim", &Family::dim)
      .def_property_readonly("has_analytic_fisher", &Family::has_analytic_fisher)
      .def("__repr__", &Family::name);

  py::enum_<Regime>(m, "Regime")
      .value("MonotoneDecreasing", Regime::MonotoneDecreasing)
      .value("InteriorMinimum", Regime::InteriorMinimum);

  py::enum_<TrainStrategy>(m, "TrainStrategy")
      .value("TargetOnly", TrainStrategy::TargetOnly)
      .value("AllSources", TrainStrategy::AllSources)
      .value("StaticUnder", TrainStrategy::StaticUnder)
      .value("StaticExact", TrainStrategy::StaticExact)
      .value("StaticOver", TrainStrategy::StaticOver)
      .value("Dynamic", TrainStrategy::Dynamic);

  m.def("fisher_analytic", &fisher_analytic, py::arg("family"), py::arg("theta"));
  m.def(
      "kl_divergence", [](const Family& f, const ParamVector& a, const ParamVector& b) {
        const KlValue v = kl_divergence(f, a, b);
        return py::make_tuple(v.value, v.std_err, v.approximate);
      },
      py::arg("family"), py::arg("theta_a"), py::arg("theta_b"), "Returns (value, std_err, approximate).");

  m.def("proxy_single", &proxy_single, py::arg("N0"), py::arg("n1"), py::arg("t"));
  m.def("proxy_single_high_dim", &proxy_single_high_dim, py::arg("N0"), py::arg("n1"), py::arg("t"), py::arg("d"));
  m.def(
      "optimal_single", [](long N0, long N1, double t) {
        const SingleOptimum o = optimal_single(N0, N1, t);
        return py::make_tuple(o.n1_star, o.regime, o.stationary_point);
      },
      py::arg("N0"), py::arg("N1"), py::arg("t"), "Returns (n1_star, regime, stationary_point).");

  m.def(
      "proxy_multi",
      [](long N0, int d, const std::vector<long>& caps, const Eigen::MatrixXd& M, long s, const Eigen::VectorXd& alpha) {
        TransferProblem p{N0, d, caps, M, 1000};
        return proxy_multi(p, s, alpha);
      },
      py::arg("N0"), py::arg("d"), py::arg("caps"), py::arg("M"), py::arg("s"), py::arg("alpha"));
  m.def(
      "solve_alpha_qp", [](const Eigen::MatrixXd& M, long s, const std::vector<long>& caps) {
        const QpResult r = solve_alpha_qp(M, s, caps);
        return py::make_tuple(r.alpha, r.objective);
      },
      py::arg("M"), py::arg("s"), py::arg("caps"), "Returns (alpha, objective).");
  m.def(
      "plan_multi",
      [](long N0, int d, const std::vector<long>& caps, const Eigen::MatrixXd& M, int stepnumber) {
        return plan_dict(plan_multi(TransferProblem{N0, d, caps, M, stepnumber}));
      },
      py::arg("N0"), py::arg("d"), py::arg("caps"), py::arg("M"), py::arg("stepnumber") = 1000);
  m.def(
      "regime_curve", [](long N0, long N1, double t, int grid_points) {
        const ProxyCurve c = regime_curve(N0, N1, t, grid_points);
        std::vector<long> n;
        std::vector<double> v;
        for (const auto& p : c.points) {
          n.push_back(p.quantity);
          v.push_back(p.proxy);
        }
        return py::make_tuple(n, v, c.regime);
      },
      py::arg("N0"), py::arg("N1"), py::arg("t"), py::arg("grid_points") = 101, "Returns (n1, proxy, regime).");

  m.def(
      "mc_expected_kl",
      [](const Family& f, const ParamVector& theta0, const std::vector<std::pair<ParamVector, long>>& sources, long N0,
         long trials, std::uint64_t seed, int workers) {
        std::vector<SourceSpec> src;
        for (const auto& [theta, n] : sources) src.push_back({theta, n});
        py::gil_scoped_release release;
        const TrialReport r = mc_expected_kl(f, theta0, src, N0, trials, seed, {.workers = workers, .mle = {}});
        return std::pair{r.mean_kl, r.std_err};
      },
      py::arg("family"), py::arg("theta0"), py::arg("sources"), py::arg("N0"), py::arg("trials"), py::arg("seed"),
      py::arg("workers") = 1, "Returns (mean_kl, std_err).");

  m.def(
      "compare_strategies",
      [](const std::vector<double>& deltas, const std::vector<long>& pool_sizes, int shots,
         const std::vector<TrainStrategy>& strategies, const std::vector<std::uint64_t>& seeds, int workers) {
        SuiteConfig suite;
        suite.deltas = deltas;
        suite.pool_sizes = pool_sizes;
        suite.shots = shots;
        Comparison cmp;
        {
          py::gil_scoped_release release;
          cmp = compare_strategies({suite}, strategies, seeds, TrainOptions{}, workers);
        }
        py::list rows;
        for (const auto& s : cmp.summary) {
          py::dict d;
          d["strategy"] = s.strategy;
          d["mean_test_acc"] = s.mean_test_acc;
          d["std_test_acc"] = s.std_test_acc;
          d["mean_samples"] = s.mean_samples;
          d["std_samples"] = s.std_samples;
          d["runs"] = s.runs;
          rows.append(d);
        }
        return rows;
      },
      py::arg("deltas"), py::arg("pool_sizes"), py::arg("shots"), py::arg("strategies"), py::arg("seeds"),
      py::arg("workers") = 1);

  m.def(
      "run_command",
      [](const std::string& name, const std::filesystem::path& config, const std::filesystem::path& out, int workers) {
        std::ostringstream log, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = run_command(name, config, out, workers, log, err);
        }
        return py::make_tuple(code, log.str(), err.str());
      },
      py::arg("command"), py::arg("config"), py::arg("out"), py::arg("workers") = 0,
      "Runs a CLI subcommand; returns (exit_code, stdout, stderr).");
}
