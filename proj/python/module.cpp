#include "svecchia/design.hpp"
#include "svecchia/evaluation.hpp"
#include "svecchia/io.hpp"
#include "svecchia/parallel.hpp"
#include "svecchia/prediction.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>

namespace py = pybind11;
using namespace svecchia;

namespace {

struct Model {
  SavedModel saved;

  Points unit(const Points& X) const { return saved.transform.apply(X); }
};

std::vector<std::string> default_names(Index d) {
  std::vector<std::string> v;
  for (Index l = 0; l < d; ++l) v.push_back("x" + std::to_string(l + 1));
  return v;
}

Model fit_model(const Points& X, const Vector& y, const std::string& method, Index m_est,
                Index n_est, bool estimate_nugget, double smoothness, const std::string& basis,
                bool vcf, Index m_pred, std::uint64_t seed) {
  if (X.rows() != y.size()) throw Error("X and y have different numbers of rows");
  Model m;
  m.saved.input_columns = default_names(X.cols());
  m.saved.response_column = "y";
  m.saved.transform = InputTransform::fit(X);
  Dataset data{m.saved.transform.apply(X), y};
  EstimationConfig est;
  est.method = parse_method(method);
  est.m_est = m_est;
  est.n_est = n_est;
  est.estimate_nugget = estimate_nugget;
  est.subsample_seed = seed;
  {
    py::gil_scoped_release release;
    m.saved.fit = fit(data, est, default_initial(data, estimate_nugget, smoothness),
                      parse_basis(basis));
    if (vcf) {
      m.saved.fit.variance_correction = variance_correction(m.saved.fit, 0.9, seed + 1, m_pred);
      m.saved.fit.variance_correction_seed = seed + 1;
    }
  }
  return m;
}

py::dict params(const Model& m) {
  const FitResult& f = m.saved.fit;
  py::dict d;
  d["variance"] = f.config.variance;
  d["ranges"] = f.config.ranges;
  d["nugget"] = f.config.nugget;
  d["smoothness"] = f.config.smoothness;
  d["beta"] = f.beta;
  d["loglik"] = f.loglik;
  d["iterations"] = f.iterations;
  d["converged"] = f.converged;
  d["eliminated"] = f.eliminated;
  d["variance_correction"] = f.correction();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, mod) {
  mod.doc() = "Scaled Vecchia Gaussian-process emulation";
  py::register_exception<Error>(mod, "SvecchiaError", PyExc_ValueError);
  mod.attr("__version__") = kVersion;

  mod.def("set_num_threads", &set_num_threads, py::arg("threads"));
  mod.def("num_threads", &num_threads);

  py::class_<Model>(mod, "Model")
      .def_property_readonly("params", &params)
      .def_property_readonly("n", [](const Model& m) { return m.saved.fit.training.size(); })
      .def_property_readonly("dim", [](const Model& m) { return m.saved.fit.training.dim(); })
      .def_property_readonly("trace",
                             [](const Model& m) {
                               py::list out;
                               for (const auto& r : m.saved.fit.trace) {
                                 py::dict d;
                                 d["iteration"] = r.iteration;
                                 d["objective"] = r.objective;
                                 d["loglik"] = r.loglik;
                                 d["step"] = to_string(r.step);
                                 d["reordered"] = r.reordered;
                                 out.append(d);
                               }
                               return out;
                             })
      .def(
          "predict",
          [](const Model& m, const Points& X, Index m_pred, double level) {
            const Points U = m.unit(X);
            PredictiveDistribution dist;
            {
              py::gil_scoped_release release;
              dist = predict(m.saved.fit, U, m_pred);
            }
            py::dict d;
            d["mean"] = dist.means();
            d["variance"] = dist.corrected_variances();
            if (level > 0) {
              const auto iv = prediction_intervals(dist, level);
              Vector lo(iv.size()), hi(iv.size());
              for (std::size_t i = 0; i < iv.size(); ++i) {
                lo[static_cast<Index>(i)] = iv[i].lo;
                hi[static_cast<Index>(i)] = iv[i].hi;
              }
              d["lo"] = lo;
              d["hi"] = hi;
            }
            return d;
          },
          py::arg("X"), py::arg("m_pred") = kDefaultMPred, py::arg("level") = 0.0)
      .def(
          "sample",
          [](const Model& m, const Points& X, Index n_samples, std::uint64_t seed, Index m_pred) {
            const Points U = m.unit(X);
            py::gil_scoped_release release;
            return sample_joint(predict(m.saved.fit, U, m_pred), n_samples, seed);
          },
          py::arg("X"), py::arg("n_samples"), py::arg("seed") = 0,
          py::arg("m_pred") = kDefaultMPred)
      .def("save", [](const Model& m, const std::string& path) { save_model(path, m.saved); })
      .def_static("load", [](const std::string& path) { return Model{load_model(path)}; });

  mod.def("fit", &fit_model, py::arg("X"), py::arg("y"), py::arg("method") = "svecchia",
          py::arg("m_est") = 30, py::arg("n_est") = 5000, py::arg("estimate_nugget") = false,
          py::arg("smoothness") = 3.5, py::arg("basis") = "constant", py::arg("vcf") = true,
          py::arg("m_pred") = kDefaultMPred, py::arg("seed") = 0);

  mod.def("lhs", &lhs, py::arg("n"), py::arg("d"), py::arg("seed") = 0);
  mod.def("uniform_design", &uniform_design, py::arg("n"), py::arg("d"), py::arg("seed") = 0);
  mod.def("test_function", [](const std::string& name, const Points& X) {
    return evaluate(test_function(name), X);
  });
  mod.def(
      "simulate_gp",
      [](const Points& X, double variance, const std::vector<double>& ranges, double smoothness,
         double nugget, std::uint64_t seed) {
        CovarianceConfig c;
        c.variance = variance;
        c.ranges = ranges;
        c.smoothness = smoothness;
        c.nugget = nugget;
        return simulate_gp(X, c, MeanModel{}, seed);
      },
      py::arg("X"), py::arg("variance"), py::arg("ranges"), py::arg("smoothness") = 3.5,
      py::arg("nugget") = 0.0, py::arg("seed") = 0);
  mod.def("crps_gaussian", &crps_gaussian, py::arg("mean"), py::arg("sd"), py::arg("y"));
  mod.def("log_score", &log_score, py::arg("mean"), py::arg("variance"), py::arg("y"));
  mod.def("interval_score", &interval_score, py::arg("lo"), py::arg("hi"), py::arg("y"),
          py::arg("alpha"));
}
