#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sgdlab/config.hpp"
#include "sgdlab/harness.hpp"

namespace py = pybind11;
using namespace sgdlab;

namespace {

ExperimentConfig config_from(const std::string& text,
                             const std::vector<std::string>& overrides) {
  ConfigDoc doc = parse_config_text(text);
  for (const std::string& o : overrides) apply_override(doc, o);
  return to_experiment_config(doc);
}

py::dict classify_dict(const PowerSchedule& s) {
  const ScheduleClass c = classify(s);
  py::dict d;
  d["diverges"] = c.diverges;
  d["square_summable"] = c.square_summable;
  d["thm22_condition"] = c.tail_product_vanishes;
  d["damping_admissible"] = c.damping_admissible;
  d["l_mu"] = c.l_mu;
  return d;
}

py::dict checkpoint_dict(const CheckpointEstimate& c) {
  py::dict d;
  d["k"] = c.k;
  d["alpha"] = c.alpha;
  d["mu"] = c.mu;
  d["mean_grad_sq"] = c.mean_grad_sq;
  d["se_grad_sq"] = c.se_grad_sq;
  d["mean_gap"] = c.mean_gap;
  d["se_gap"] = c.se_gap;
  if (c.mean_avg_gap) {
    d["mean_avg_gap"] = *c.mean_avg_gap;
    d["se_avg_gap"] = *c.se_avg_gap;
  }
  return d;
}

}  // namespace

PYBIND11_MODULE(_sgdlab, m) {
  m.doc() = "Stochastic optimization experiments";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ExperimentFailure>(m, "ExperimentFailure", PyExc_RuntimeError);

  py::class_<PowerSchedule>(m, "PowerSchedule")
      .def("alpha", &PowerSchedule::alpha, py::arg("k"))
      .def("mu", &PowerSchedule::mu, py::arg("k"))
      .def_readonly("c", &PowerSchedule::coeff_alpha)
      .def_readonly("a", &PowerSchedule::exp_alpha)
      .def_readonly("m", &PowerSchedule::coeff_mu)
      .def_readonly("b", &PowerSchedule::exp_mu)
      .def("__repr__", [](const PowerSchedule& s) {
        return "PowerSchedule(c=" + py::repr(py::float_(s.coeff_alpha)).cast<std::string>() +
               ", a=" + py::repr(py::float_(s.exp_alpha)).cast<std::string>() +
               ", m=" + py::repr(py::float_(s.coeff_mu)).cast<std::string>() +
               ", b=" + py::repr(py::float_(s.exp_mu)).cast<std::string>() + ")";
      });

  m.def("make_power_schedule", &make_power_schedule, py::arg("c"), py::arg("a"),
        py::arg("m") = 0.0, py::arg("b") = 0.0);
  m.def("classify", &classify_dict, py::arg("schedule"));
  m.def("select_zeta", &select_zeta, py::arg("l_smooth"), py::arg("mu_lo"), py::arg("mu_hi"));
  m.def("select_lambda", &select_lambda, py::arg("l_smooth"), py::arg("l_mu"));

  m.def("canonical_config",
        [](const std::string& text, const std::vector<std::string>& overrides) {
          return to_config_text(config_from(text, overrides));
        },
        py::arg("text"), py::arg("overrides") = std::vector<std::string>{});

  m.def("run_experiment",
        [](const std::string& text, const std::vector<std::string>& overrides) {
          const ExperimentConfig cfg = config_from(text, overrides);
          MonteCarloEstimate est;
          {
            py::gil_scoped_release release;
            est = run_experiment(cfg);
          }
          py::list rows;
          for (const CheckpointEstimate& c : est.checkpoints) rows.append(checkpoint_dict(c));
          py::dict out;
          out["checkpoints"] = rows;
          out["replicas_ok"] = est.replicas_ok;
          out["replicas_diverged"] = est.replicas_diverged;
          out["estimates_csv"] = estimates_csv(est);
          out["summary_json"] = summary_json(est);
          out["manifest_json"] = manifest_json(est.config);
          if (est.config.lyapunov) out["lyapunov_csv"] = lyapunov_csv(est);
          return out;
        },
        py::arg("text"), py::arg("overrides") = std::vector<std::string>{},
        "Runs the experiment described by config text and returns its estimates.");

  m.def("config_from_manifest",
        [](const std::string& json) { return to_config_text(config_from_manifest(json)); },
        py::arg("manifest_json"));

  m.def("check_gradient",
        [](const std::string& text, const std::vector<double>& x, double step) {
          const Problem p = make_problem(config_from(text, {}).problem);
          if (x.size() != p.dim()) throw py::value_error("x has the wrong dimension");
          return check_gradient(p, x, step);
        },
        py::arg("text"), py::arg("x"), py::arg("step"));
}
