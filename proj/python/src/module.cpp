// Python bindings for the countex core.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <map>
#include <optional>

#include "countex/cli.hpp"
#include "countex/errors.hpp"
#include "countex/gradcheck.hpp"
#include "countex/heads.hpp"

namespace py = pybind11;
using namespace countex;

namespace {

py::array_t<double> to_numpy(const Matrix& m) {
  py::array_t<double> out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

Matrix from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.data().begin());
  return m;
}

io::RunConfig config_from(const std::string& json_text) {
  io::RunConfig c;
  if (!json_text.empty()) io::apply_json(c, json_text);
  c.finalize();
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Prompted counting with negative-query refinement on synthetic scenes.";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<SchemaError>(m, "SchemaError", PyExc_ValueError);
  py::register_exception<LookupError>(m, "LookupError", PyExc_KeyError);
  py::register_exception<CapacityError>(m, "CapacityError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("default_config", [] { return io::config_to_json(config_from("")); },
        "Every config key with its built-in value, as flat JSON.");

  m.def(
      "generate_scene",
      [](const std::string& config_json, const std::string& scene_id, std::uint64_t seed) {
        const auto c = config_from(config_json);
        return scene::scene_to_json(scene::generate_scene(c.scene, scene_id, RngStream(seed, "scenes")));
      },
      py::arg("config_json") = "", py::arg("scene_id") = "s00000", py::arg("seed") = 0,
      "One synthetic scene as JSON text.");

  m.def(
      "render_density",
      [](const std::string& scene_json, const std::string& category, double sigma) {
        return to_numpy(scene::render_density(scene::scene_from_json(scene_json), category, sigma).grid);
      },
      py::arg("scene_json"), py::arg("category"), py::arg("sigma") = 1.0);

  m.def(
      "hungarian",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& cost) {
        return heads::hungarian(from_numpy(cost));
      },
      py::arg("cost"), "Column per row of a minimum-cost assignment, -1 for unassigned rows.");

  m.def(
      "count", [](const std::vector<double>& scores, double tau) { return heads::count(scores, tau); },
      py::arg("scores"), py::arg("tau"));

  m.def(
      "metrics",
      [](const std::vector<double>& gt, const std::vector<double>& pred) {
        if (gt.size() != pred.size()) throw ShapeError("gt and pred differ in length");
        std::vector<eval::SceneRecord> recs;
        for (std::size_t i = 0; i < gt.size(); ++i) recs.push_back({std::to_string(i), gt[i], pred[i]});
        const auto r = eval::summarize(std::move(recs), 0.5, "", 0);
        return py::dict(py::arg("mae") = r.mae, py::arg("rmse") = r.rmse, py::arg("nae") = r.nae,
                        py::arg("nae_excluded") = r.nae_excluded);
      },
      py::arg("gt"), py::arg("pred"));

  m.def(
      "gradcheck",
      [](std::uint64_t seed, std::size_t points) {
        py::list out;
        for (const auto& r : gradcheck::run_all(seed, points)) {
          out.append(py::dict(py::arg("name") = r.name, py::arg("max_rel_error") = r.max_rel_error,
                              py::arg("passed") = r.passed));
        }
        return out;
      },
      py::arg("seed") = 0, py::arg("points") = 20);

  m.def(
      "run",
      [](const std::string& command, const std::optional<std::filesystem::path>& config, const std::filesystem::path& out,
         const std::optional<std::filesystem::path>& data, const std::optional<std::uint64_t>& seed,
         const std::optional<std::size_t>& count) {
        cli::Options o;
        o.config = config;
        o.out = out;
        o.data = data;
        o.seed = seed;
        o.count = count;
        const std::map<std::string, int (*)(const cli::Options&)> commands = {
            {"generate", cli::cmd_generate}, {"train", cli::cmd_train}, {"eval", cli::cmd_eval},
            {"ablate", cli::cmd_ablate},     {"swap", cli::cmd_swap},   {"gradcheck", cli::cmd_gradcheck}};
        const auto it = commands.find(command);
        if (it == commands.end()) throw LookupError("unknown command " + command);
        py::gil_scoped_release release;
        return cli::run_guarded([&] { return it->second(o); });
      },
      py::arg("command"), py::arg("config") = py::none(), py::arg("out") = "out", py::arg("data") = py::none(),
      py::arg("seed") = py::none(), py::arg("count") = py::none(),
      "Runs one command-line command in process and returns its exit code.");
}
