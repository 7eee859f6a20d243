#include "sdeadapt/brownian.hpp"
#include "sdeadapt/cli.hpp"
#include "sdeadapt/experiment.hpp"
#include "sdeadapt/problems.hpp"
#include "sdeadapt/schemes.hpp"
#include "sdeadapt/selftest.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>

namespace py = pybind11;
using namespace sdeadapt;

namespace {

SchemeSpec resolve_scheme(const ProblemCatalogEntry& e, const std::string& name,
                          std::optional<double> delta_max, std::optional<double> delta_min,
                          std::optional<double> step) {
  SchemeSpec s = scheme_from_name(name);
  s.adaptive.delta_min = delta_min.value_or(e.default_cfg.delta_min);
  s.adaptive.delta_max = delta_max.value_or(e.default_cfg.delta_max);
  s.step = step.value_or(s.adaptive.delta_max);
  return s;
}

ProblemCatalogEntry resolve_problem(const std::string& name, std::optional<double> x0) {
  if (name == "ginzburg-landau" && x0) return ginzburg_landau(*x0);
  ProblemCatalogEntry e = problem_by_name(name);
  if (x0) {
    e.system.initial_state = Vector::Constant(static_cast<Eigen::Index>(e.system.state_dim), *x0);
    e.system.exact_solution = nullptr;
  }
  return e;
}

py::dict row_to_dict(const RmseRow& r) {
  py::dict d;
  d["scheme"] = r.scheme;
  d["problem"] = r.problem;
  d["delta_max"] = r.delta_max;
  d["delta_min"] = r.delta_min;
  d["paths"] = r.paths;
  d["horizon"] = r.horizon;
  d["seed"] = r.seed;
  d["rmse"] = r.rmse;
  d["rmse_stderr"] = r.rmse_stderr;
  d["mean_step"] = r.mean_step;
  d["backstop_fraction"] = r.backstop_fraction;
  d["diverged_fraction"] = r.diverged_fraction;
  d["fixed_step"] = r.fixed_step;
  d["warnings"] = r.warnings;
  return d;
}

StudyConfig study_config(const ProblemCatalogEntry& e, std::size_t paths, std::optional<double> horizon,
                         std::uint64_t seed, std::optional<double> reference_delta_max,
                         double delta_min, unsigned threads) {
  StudyConfig s;
  s.paths = paths;
  s.horizon = horizon.value_or(e.default_horizon);
  s.seed = seed;
  s.threads = threads;
  if (reference_delta_max || !e.system.exact_solution) {
    s.reference = ReferenceSpec::as_bem(reference_delta_max.value_or(kDefaultReferenceDeltaMax), delta_min);
  }
  return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Adaptive time-stepping Monte Carlo for SDEs with superlinear coefficients";

  py::register_exception<ConfigurationError>(m, "ConfigurationError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::class_<BrownianPath>(m, "BrownianPath")
      .def(py::init<std::uint64_t, std::size_t>(), py::arg("seed"), py::arg("dimension") = 1)
      .def_property_readonly("dimension", &BrownianPath::dimension)
      .def_property_readonly("seed", &BrownianPath::seed)
      .def("value_at", py::overload_cast<double>(&BrownianPath::value_at), py::arg("t"))
      .def("increment", py::overload_cast<double, double>(&BrownianPath::increment), py::arg("s"),
           py::arg("t"));

  m.def("derive_seed", &derive_seed, py::arg("base"), py::arg("index"));
  m.def("problem_names", &problem_names);
  m.def("scheme_names", [] {
    return std::vector<std::string>{"ats-tem", "ats-tamed2", "ats-tamed1", "em",
                                    "fs-tem",  "fs-taem",    "fs-bem",     "as-bem"};
  });
  m.def("parse_ladder", &cli::parse_ladder, py::arg("text"));

  m.def(
      "adaptive_step",
      [](const std::string& problem, const Vector& x, std::optional<double> delta_max,
         std::optional<double> delta_min) {
        const ProblemCatalogEntry e = problem_by_name(problem);
        const AdaptiveConfig cfg{delta_min.value_or(e.default_cfg.delta_min),
                                 delta_max.value_or(e.default_cfg.delta_max), Backstop::TruncatedEM};
        return py::make_tuple(adaptive_step(e.default_env, cfg, x), is_backstop(e.default_env, cfg, x));
      },
      py::arg("problem"), py::arg("x"), py::arg("delta_max") = py::none(),
      py::arg("delta_min") = py::none(),
      "Step delta(x) and the backstop indicator under the problem's envelope.");

  m.def(
      "simulate",
      [](const std::string& problem, const std::string& scheme, std::optional<double> delta_max,
         std::optional<double> delta_min, std::optional<double> step, std::optional<double> horizon,
         std::uint64_t seed, std::optional<double> x0) {
        const ProblemCatalogEntry e = resolve_problem(problem, x0);
        const SchemeSpec s = resolve_scheme(e, scheme, delta_max, delta_min, step);
        BrownianPath path(derive_seed(seed, 0), e.system.noise_dim);
        const Trajectory t = simulate(s, e.system, e.default_env, path, horizon.value_or(e.default_horizon));
        Matrix states(static_cast<Eigen::Index>(t.states.size()),
                      static_cast<Eigen::Index>(e.system.state_dim));
        for (std::size_t i = 0; i < t.states.size(); ++i) {
          states.row(static_cast<Eigen::Index>(i)) = t.states[i].transpose();
        }
        py::dict d;
        d["times"] = t.times;
        d["states"] = states;
        d["steps"] = t.steps;
        d["backstop"] = std::vector<bool>(t.backstop_flags.begin(), t.backstop_flags.end());
        d["residuals"] = t.residuals;
        d["diverged"] = t.diverged;
        d["mean_step"] = t.step_count() ? mean_step(t) : 0.0;
        return d;
      },
      py::arg("problem"), py::arg("scheme") = "ats-tem", py::arg("delta_max") = py::none(),
      py::arg("delta_min") = py::none(), py::arg("step") = py::none(),
      py::arg("horizon") = py::none(), py::arg("seed") = 42, py::arg("x0") = py::none(),
      "One trajectory on path derive_seed(seed, 0).");

  m.def(
      "rmse",
      [](const std::string& problem, const std::string& scheme, std::optional<double> delta_max,
         std::optional<double> delta_min, std::size_t paths, std::optional<double> horizon,
         std::uint64_t seed, std::optional<double> reference_delta_max, unsigned threads) {
        const ProblemCatalogEntry e = problem_by_name(problem);
        const SchemeSpec s = resolve_scheme(e, scheme, delta_max, delta_min, std::nullopt);
        const StudyConfig study =
            study_config(e, paths, horizon, seed, reference_delta_max, s.adaptive.delta_min, threads);
        py::gil_scoped_release release;
        const RmseRow row = rmse_study(s, e.system, e.default_env, study, e.name);
        py::gil_scoped_acquire acquire;
        return row_to_dict(row);
      },
      py::arg("problem"), py::arg("scheme") = "ats-tem", py::arg("delta_max") = py::none(),
      py::arg("delta_min") = py::none(), py::arg("paths") = 1000, py::arg("horizon") = py::none(),
      py::arg("seed") = 42, py::arg("reference_delta_max") = py::none(), py::arg("threads") = 1);

  m.def(
      "convergence",
      [](const std::string& problem, const std::string& scheme, const std::vector<double>& ladder,
         std::optional<double> delta_min, std::size_t paths, std::optional<double> horizon,
         std::uint64_t seed, std::optional<double> reference_delta_max, unsigned threads) {
        const ProblemCatalogEntry e = problem_by_name(problem);
        if (ladder.empty()) throw std::invalid_argument("ladder must not be empty");
        const SchemeSpec s = resolve_scheme(e, scheme, ladder.front(), delta_min, ladder.front());
        const StudyConfig study =
            study_config(e, paths, horizon, seed, reference_delta_max, s.adaptive.delta_min, threads);
        ConvergenceReport rep;
        {
          py::gil_scoped_release release;
          rep = convergence_study(s, e.system, e.default_env, ladder, s.adaptive.delta_min, study, e.name);
        }
        py::list rows;
        for (const auto& r : rep.rows) rows.append(row_to_dict(r));
        py::dict d;
        d["rows"] = rows;
        d["fitted"] = rep.fit.fitted;
        d["slope"] = rep.fit.slope;
        d["intercept"] = rep.fit.intercept;
        d["r_squared"] = rep.fit.r_squared;
        d["warnings"] = rep.warnings;
        return d;
      },
      py::arg("problem"), py::arg("scheme") = "ats-tem", py::arg("ladder"),
      py::arg("delta_min") = py::none(), py::arg("paths") = 1000, py::arg("horizon") = py::none(),
      py::arg("seed") = 42, py::arg("reference_delta_max") = py::none(), py::arg("threads") = 1);

  m.def(
      "divergence_probe",
      [](double step, std::size_t paths, double horizon, std::uint64_t seed, double x0) {
        const ProblemCatalogEntry gl = ginzburg_landau(x0);
        return divergence_probe(gl.system, step, paths, horizon, seed);
      },
      py::arg("step") = 0.3704, py::arg("paths") = 500, py::arg("horizon") = 10.0,
      py::arg("seed") = 42, py::arg("x0") = 2.0,
      "Diverged fraction of classical Euler-Maruyama on Ginzburg-Landau.");

  m.def(
      "selftest",
      [](std::uint64_t seed) {
        py::list out;
        for (const auto& c : run_selftest(seed)) out.append(py::make_tuple(c.name, c.passed, c.detail));
        return out;
      },
      py::arg("seed") = 42);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> full{"sdeadapt"};
        full.insert(full.end(), args.begin(), args.end());
        std::vector<const char*> argv;
        for (const auto& a : full) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = cli::parse_and_dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool in process; returns (exit_code, stdout, stderr).");
}
