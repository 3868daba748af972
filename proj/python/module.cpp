#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "beltforge/stages.hpp"

namespace py = pybind11;
using namespace beltforge;

namespace {

// JSON crosses the boundary as text; the Python side decodes it.
std::string text(const io::Json& j) { return io::dump(j); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "belt-forge core bindings";

  // exception instances carry the CLI exit code as `.code`
  static py::handle error_type = py::exception<Error>(m, "BeltForgeError").release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object err = py::reinterpret_borrow<py::object>(error_type)(e.what());
      err.attr("code") = static_cast<int>(e.code());
      PyErr_SetObject(error_type.ptr(), err.ptr());
    }
  });

  py::class_<BeltParams>(m, "BeltParams")
      .def(py::init<double, double, double, double>(), py::arg("k"), py::arg("beta"), py::arg("lam"),
           py::arg("rest_length"))
      .def_readonly("k", &BeltParams::k)
      .def_readonly("beta", &BeltParams::beta)
      .def_readonly("lam", &BeltParams::lambda)
      .def_readonly("rest_length", &BeltParams::rest_length)
      .def("__repr__", [](const BeltParams& p) {
        return "BeltParams(k=" + std::to_string(p.k) + ", beta=" + std::to_string(p.beta) +
               ", lam=" + std::to_string(p.lambda) + ", rest_length=" + std::to_string(p.rest_length) + ")";
      });

  m.def("belt_force", &belt_force, py::arg("params"), py::arg("displacement"), py::arg("rate"));

  m.def(
      "fit_params",
      [](const std::vector<double>& x, const std::vector<double>& v, const std::vector<double>& f,
         const BeltParams& guess) {
        if (x.size() != v.size() || x.size() != f.size()) throw DomainError("fit_params: column lengths differ");
        std::vector<ForceSample> s;
        for (std::size_t i = 0; i < x.size(); ++i) s.push_back({x[i], v[i], f[i]});
        const FitResult r = fit_params(s, guess);
        return py::make_tuple(r.params, r.report.final_sse, r.report.iterations);
      },
      py::arg("displacement"), py::arg("rate"), py::arg("force"), py::arg("initial_guess"),
      "Levenberg-Marquardt fit; returns (params, final_sse, iterations).");

  m.def(
      "forward_kinematics",
      [](const std::string& robot_json, const Vector6d& q) {
        const Pose p = forward_kinematics(io::robot_from_json(io::parse(robot_json)), JointConfig(q));
        return py::make_tuple(Eigen::Vector3d(p.position), Eigen::Vector3d(p.rpy));
      },
      py::arg("robot_json"), py::arg("q"), "Returns (xyz, rpy) of the end effector.");

  m.def(
      "plan",
      [](const std::filesystem::path& config_path) {
        const PipelineConfig c = load_config(config_path);
        const PlanResult r = plan(c.problem(c.belt), c.solver);
        io::Json j = io::to_json(r.path);
        j["report"] = io::to_json(r.report);
        return text(j);
      },
      py::arg("config"), "Plans the config's problem with its belt params; returns path JSON text.");

  m.def(
      "run_pipeline",
      [](const std::filesystem::path& config_path, const std::filesystem::path& out, std::optional<std::uint64_t> seed) {
        const PipelineConfig c = load_config(config_path);
        ArtifactStore store(out);
        const StageContext ctx{c, store, seed.value_or(c.seed)};
        std::vector<StageResult> stages;
        {
          py::gil_scoped_release release;
          stages = run_pipeline(ctx);
        }
        write_manifest(ctx, stages, false);
        io::Json j = io::Json::array();
        for (const auto& s : stages) j.push_back({{"stage", s.stage}, {"summary", s.summary}});
        return text(j);
      },
      py::arg("config"), py::arg("out"), py::arg("seed") = py::none(),
      "Runs every stage into `out`; returns the stage summaries as JSON text.");

  m.def("derive_seed", &derive_seed, py::arg("master"), py::arg("label"));
  m.attr("SCHEMA") = io::kSchema;
}
