#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "windgen/cli.hpp"
#include "windgen/config.hpp"
#include "windgen/data.hpp"
#include "windgen/error.hpp"
#include "windgen/eval.hpp"
#include "windgen/gmm.hpp"
#include "windgen/model.hpp"
#include "windgen/stats.hpp"

namespace py = pybind11;
using namespace windgen;

namespace {

Eigen::MatrixXd component_matrix(const Dataset& d, bool take_u) {
  Eigen::MatrixXd m(d.size(), d.altitude_count());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& src = take_u ? d.profiles[i].u : d.profiles[i].v;
    for (std::size_t a = 0; a < src.size(); ++a) m(i, a) = src[a];
  }
  return m;
}

std::vector<std::string> label_list(const Dataset& d) {
  std::vector<std::string> out;
  out.reserve(d.size());
  for (const auto& p : d.profiles) out.push_back(format_label(p.condition));
  return out;
}

Dataset wrap(std::vector<WindProfile> profiles, const Generator& g) {
  Dataset d;
  d.profiles = std::move(profiles);
  d.altitudes = g.altitudes();
  d.speed_bins = g.speed_bins();
  return d;
}

nlohmann::json parse_json(const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError({std::string("invalid JSON: ") + e.what()});
  }
}

Dataset synth_from_json(const std::string& synth_json, std::uint64_t seed) {
  nlohmann::json j;
  j["seed"] = seed;
  j["data"]["synth"] = parse_json(synth_json);
  return synth_generate(*parse_run_config(j).data.synth);
}

std::shared_ptr<Generator> train_from_json(const Dataset& data, const std::string& model_json,
                                           std::uint64_t seed, std::size_t threads) {
  nlohmann::json j;
  j["model"] = parse_json(model_json);
  const ModelSpec spec = parse_run_config(j, false).model;
  py::gil_scoped_release release;
  std::shared_ptr<Generator> g = train_generator(data, spec, seed);
  g->set_threads(threads);
  return g;
}

py::dict em_to_dict(const EmResult& r) {
  py::dict d;
  d["weights"] = r.gmm.weights;
  d["means"] = r.gmm.means;
  d["covariances"] = r.gmm.covariances;
  d["log_likelihood_trace"] = r.log_likelihood_trace;
  d["iterations"] = r.iterations;
  d["converged"] = r.converged;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Conditional vertical wind profile generators";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  auto input = py::register_exception<InputError>(m, "InputError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", input.ptr());
  py::register_exception<SchemaError>(m, "SchemaError", base.ptr());
  py::register_exception<RowError>(m, "RowError", base.ptr());
  py::register_exception<EmptyFileError>(m, "EmptyFileError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<NoMassError>(m, "NoMassError", base.ptr());

  m.def("version", [] { return std::string(version()); });

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "windgen");
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command line tool in-process on `args` (without the program name);\n"
      "returns (exit code, stdout, stderr).");

  py::class_<Dataset>(m, "Dataset")
      .def("__len__", &Dataset::size)
      .def_property_readonly("altitudes", [](const Dataset& d) { return d.altitudes; })
      .def_property_readonly("u", [](const Dataset& d) { return component_matrix(d, true); })
      .def_property_readonly("v", [](const Dataset& d) { return component_matrix(d, false); })
      .def_property_readonly("labels", &label_list)
      .def_property_readonly("macro_speed",
                             [](const Dataset& d) {
                               std::vector<double> s;
                               for (const auto& p : d.profiles) s.push_back(p.macro_speed);
                               return s;
                             })
      .def_property_readonly("dropped_count", [](const Dataset& d) { return d.dropped_count; })
      .def("uv_matrix", [](const Dataset& d) { return to_matrix(d.profiles); },
           "Rows of u at every altitude followed by v at every altitude.")
      .def("__repr__", [](const Dataset& d) {
        return "<Dataset profiles=" + std::to_string(d.size()) +
               " altitudes=" + std::to_string(d.altitude_count()) + ">";
      });

  m.def("load_dataset", [](const std::filesystem::path& p) { return load_dataset(p); }, py::arg("path"));
  m.def("write_dataset", &write_dataset, py::arg("path"), py::arg("dataset"),
        py::arg("include_timestamp") = true);
  m.def("synth", &synth_from_json, py::arg("config_json"), py::arg("seed"),
        "Synthetic log-law profiles from the JSON text of a data.synth section.");

  py::class_<Generator, std::shared_ptr<Generator>>(m, "Generator")
      .def_property_readonly("kind", [](const Generator& g) { return std::string(model_kind_name(g.kind())); })
      .def_property_readonly("altitudes", &Generator::altitudes)
      .def("set_threads", &Generator::set_threads, py::arg("threads"))
      .def(
          "generate",
          [](const Generator& g, const std::string& label, std::size_t n, std::uint64_t seed) {
            const ConditionLabel c = parse_label(label);
            std::vector<WindProfile> out;
            {
              py::gil_scoped_release release;
              out = g.generate(c, n, seed);
            }
            return wrap(std::move(out), g);
          },
          py::arg("label"), py::arg("n"), py::arg("seed"))
      .def("save", [](const Generator& g, const std::filesystem::path& p) { save_generator(p, g); },
           py::arg("path"));

  m.def("train", &train_from_json, py::arg("dataset"), py::arg("model_json"), py::arg("seed"),
        py::arg("threads") = 1, "Trains a generator from the JSON text of a model section.");
  m.def(
      "load_generator",
      [](const std::filesystem::path& p) { return std::shared_ptr<Generator>(load_generator(p)); },
      py::arg("path"));

  m.def("kl_divergence", &kl_divergence_knn, py::arg("p"), py::arg("q"), py::arg("k") = 1);
  m.def("symmetrized_kl", &symmetrized_kl, py::arg("p"), py::arg("q"), py::arg("k") = 1);
  m.def(
      "kl_by_altitude",
      [](const Dataset& real, const Dataset& generated, int k) {
        return kl_by_altitude(real, generated.profiles, k);
      },
      py::arg("real"), py::arg("generated"), py::arg("k") = 1);

  m.def(
      "em_fit",
      [](const Eigen::MatrixXd& y, int k, std::uint64_t seed, int restarts) {
        EmOptions o;
        o.k = k;
        o.seed = seed;
        o.restarts = restarts;
        return em_to_dict(em_fit(y, o));
      },
      py::arg("y"), py::arg("k"), py::arg("seed") = 0, py::arg("restarts") = 3);
  m.def(
      "select_k",
      [](const Eigen::MatrixXd& y, const std::vector<int>& grid, std::uint64_t seed) {
        const auto s = select_k(y, grid, seed);
        return py::make_tuple(s.best_k, s.bic_curve);
      },
      py::arg("y"), py::arg("k_grid"), py::arg("seed") = 0, "Returns (best k, [(k, BIC)]).");
  m.def("gmm_parameter_count", &gmm_parameter_count, py::arg("k"), py::arg("dim"));
}
