// SPDX-License-Identifier: Apache-2.0
//
// Python bindings. Configs and reports cross the boundary as JSON text; the package
// __init__ turns them into dicts.
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "subsearch/cmaes.hpp"
#include "subsearch/config.hpp"
#include "subsearch/errors.hpp"
#include "subsearch/harness.hpp"
#include "subsearch/numerics.hpp"
#include "subsearch/subspace.hpp"

namespace py = pybind11;
using namespace subsearch;

namespace {

RunConfig config_from(const std::string& text) { return parse_config(text, "<python>").config; }

// Keeps the ask/tell generator and its RNG together.
class PyCmaEs {
 public:
  PyCmaEs(const Vector& mean, double sigma0, std::size_t popsize, std::uint64_t seed)
      : es_(default_params(static_cast<std::size_t>(mean.size()), popsize, sigma0), mean), rng_(seed, 0) {}

  Matrix ask() {
    last_ = es_.ask(rng_);
    Matrix out(static_cast<Eigen::Index>(last_.size()), es_.params().dim);
    for (std::size_t i = 0; i < last_.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = last_[i].transpose();
    return out;
  }

  void tell(const std::vector<double>& fitness) {
    if (last_.empty()) throw DomainError("tell() called before ask()");
    es_.tell(last_, fitness);
    last_.clear();
  }

  const CmaState& state() const { return es_.state(); }
  const CmaParams& params() const { return es_.params(); }

 private:
  CmaEs es_;
  RngStream rng_;
  std::vector<Vector> last_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Subspace CMA-ES search over embedding spaces";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  auto evaluation = py::register_exception<EvaluationError>(m, "EvaluationError", PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<StageError>(m, "StageError", PyExc_RuntimeError);
  (void)evaluation;

  m.def("_canonical_config", [](const std::string& text) { return to_json(config_from(text)).dump(); });
  m.def("_config_warnings", [](const std::string& text) { return parse_config(text, "<python>").warnings; });
  m.def("_config_hash", [](const std::string& text) { return config_hash(config_from(text)); });
  m.def("_run", [](const std::string& text) {
    const RunConfig c = config_from(text);
    py::gil_scoped_release release;
    return to_json(run_experiment(c)).dump();
  });
  m.def("_sweep", [](const std::string& text, const std::string& axis) {
    const RunConfig c = config_from(text);
    const SweepAxis a = parse_sweep_axis(axis);
    py::gil_scoped_release release;
    return to_json(run_sweep(c, a)).dump();
  });

  m.def("softmax", &softmax, py::arg("scores"), py::arg("temperature") = 1.0);
  m.def("cosine_similarity", &cosine_similarity);
  m.def("derive_seed", &derive_seed, py::arg("master"), py::arg("label"));
  m.def(
      "sigma_p",
      [](double lambda, double sigma_e, double sigma_q, std::size_t d) {
        return sigma_p(PriorNormSpec{lambda, sigma_e, sigma_q, d});
      },
      py::arg("lam"), py::arg("sigma_e"), py::arg("sigma_q"), py::arg("d"));
  m.def(
      "random_projection",
      [](std::size_t ambient, std::size_t d, const std::string& kind, std::uint64_t seed) {
        return build_random_projection(ambient, d, parse_projection_kind(kind), seed).weights;
      },
      py::arg("ambient_dim"), py::arg("d"), py::arg("kind") = "n01d", py::arg("seed") = 0);

  py::class_<PyCmaEs>(m, "CmaEs")
      .def(py::init<const Vector&, double, std::size_t, std::uint64_t>(), py::arg("mean"), py::arg("sigma0") = 0.5,
           py::arg("popsize") = 30, py::arg("seed") = 0)
      .def("ask", &PyCmaEs::ask, "Returns a popsize x dim array of candidates.")
      .def("tell", &PyCmaEs::tell, py::arg("fitness"))
      .def_property_readonly("mean", [](const PyCmaEs& es) { return es.state().mean; })
      .def_property_readonly("sigma", [](const PyCmaEs& es) { return es.state().sigma; })
      .def_property_readonly("cov", [](const PyCmaEs& es) { return es.state().cov; })
      .def_property_readonly("generation", [](const PyCmaEs& es) { return es.state().generation; })
      .def_property_readonly("evals", [](const PyCmaEs& es) { return es.state().evals; })
      .def_property_readonly("best_f", [](const PyCmaEs& es) { return es.state().best.f; })
      .def_property_readonly("best_x", [](const PyCmaEs& es) { return es.state().best.q; })
      .def_property_readonly("popsize", [](const PyCmaEs& es) { return es.params().popsize; });

  m.def(
      "minimize",
      [](std::function<double(const Vector&)> fn, const Vector& x0, double sigma0, std::uint64_t budget,
         std::size_t popsize, std::uint64_t seed) {
        const auto n = static_cast<std::size_t>(x0.size());
        const FunctionObjective objective(n, [&](const Vector& e, const NoiseKey&) { return fn(e); });
        OptimizeOptions opts;
        opts.budget = budget;
        RngStream sampling(derive_seed(seed, "sampling"), 0);
        RngStream noise(derive_seed(seed, "noise"), 0);
        const OptimizeResult r =
            optimize(objective, x0, identity_projection(n), default_params(n, popsize, sigma0), opts, sampling, noise);
        py::dict out;
        out["x"] = r.e_star;
        out["f"] = r.f_star;
        out["evals"] = r.evals;
        out["generations"] = r.trace.size();
        return out;
      },
      py::arg("fn"), py::arg("x0"), py::arg("sigma0") = 0.5, py::arg("budget") = 13000, py::arg("popsize") = 30,
      py::arg("seed") = 0);
}
