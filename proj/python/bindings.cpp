#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "gtselect/attribution.hpp"
#include "gtselect/cli.hpp"
#include "gtselect/config.hpp"
#include "gtselect/error.hpp"
#include "gtselect/pipeline.hpp"
#include "gtselect/sampler.hpp"

namespace py = pybind11;
using namespace gtselect;

namespace {

// Python games receive the sorted member list of each coalition.
CharacteristicFunction python_game(std::size_t num_players, py::function fn) {
  return CharacteristicFunction(num_players, [fn = std::move(fn)](const Coalition& s) {
    py::gil_scoped_acquire gil;
    return fn(s.members()).cast<double>();
  });
}

std::vector<std::size_t> all_players(std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Game-theoretic feature selection core";

  static py::exception<Error> error(m, "GtselectError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (std::string(to_string(e.code())) + ": " + e.what()).c_str());
    }
  });

  py::class_<Dataset>(m, "Dataset")
      .def_static(
          "from_csv",
          [](const std::string& path, const std::string& target, const std::string& task) {
            return load_csv(path, target, parse_task(task));
          },
          py::arg("path"), py::arg("target"), py::arg("task") = "regression")
      .def_static(
          "from_csv_text",
          [](const std::string& text, const std::string& target, const std::string& task) {
            return parse_csv(text, target, parse_task(task));
          },
          py::arg("text"), py::arg("target"), py::arg("task") = "regression")
      .def_property_readonly("n", &Dataset::n)
      .def_property_readonly("m", &Dataset::m)
      .def_property_readonly("task", [](const Dataset& d) { return std::string(to_string(d.task())); })
      .def_property_readonly("feature_names", &Dataset::feature_names)
      .def("features", &Dataset::features)
      .def("targets", &Dataset::targets)
      .def("to_csv", [](const Dataset& d) { return to_csv(d); });

  m.def(
      "diversity_sample",
      [](const Dataset& d, std::size_t s, std::optional<std::size_t> k, std::uint64_t seed) {
        return diversity_sample(d, s, k, seed).indices;
      },
      py::arg("data"), py::arg("s"), py::arg("k") = py::none(), py::arg("seed") = 0,
      "Indices of a clustered, evenly spaced representative subset.");
  m.def("allocate_per_cluster", &allocate_per_cluster, py::arg("s"), py::arg("k"));

  m.def(
      "shapley_exact",
      [](py::function game, std::size_t num_players) {
        auto v = python_game(num_players, std::move(game));
        return shapley_exact(v, all_players(num_players));
      },
      py::arg("game"), py::arg("num_players"));
  m.def(
      "shapley_mc",
      [](py::function game, std::size_t num_players, std::size_t n_perms, std::uint64_t seed) {
        auto v = python_game(num_players, std::move(game));
        return shapley_mc(v, all_players(num_players), n_perms, seed).values;
      },
      py::arg("game"), py::arg("num_players"), py::arg("n_perms"), py::arg("seed") = 0);
  m.def(
      "cis_value",
      [](py::function game, std::size_t num_players) {
        auto v = python_game(num_players, std::move(game));
        auto values = cis_value(v, all_players(num_players));
        return py::make_tuple(values, v.eval_count());
      },
      py::arg("game"), py::arg("num_players"),
      "CIS scores and the number of distinct coalitions evaluated.");

  m.def(
      "select_features",
      [](std::vector<double> scores, std::optional<double> top_q, std::optional<double> threshold) {
        if (top_q.has_value() == threshold.has_value()) {
          throw Error(ErrorCode::kInvalidArgument, "pass exactly one of top_q and threshold");
        }
        ImportanceScores s;
        for (std::size_t i = 0; i < scores.size(); ++i) s.feature_names.push_back("f" + std::to_string(i));
        s.scores = Eigen::Map<Eigen::VectorXd>(scores.data(), static_cast<Eigen::Index>(scores.size()));
        const SelectionRule rule = top_q ? SelectionRule::keep_top(*top_q) : SelectionRule::keep_above(*threshold);
        return select_features(s, rule).mask;
      },
      py::arg("scores"), py::kw_only(), py::arg("top_q") = py::none(), py::arg("threshold") = py::none());

  m.def(
      "run_pipeline_json",
      [](const std::string& config_text, bool strip) {
        const PipelineConfig cfg = parse_config(config_text);
        py::gil_scoped_release release;
        auto report = run_pipeline(cfg);
        return (strip ? strip_timing(std::move(report)) : report).dump();
      },
      py::arg("config_text"), py::arg("strip_timing") = false,
      "Runs the pipeline described by TOML config text; returns the report JSON.");

  m.def(
      "cli",
      [](const std::vector<std::string>& args) {
        std::vector<const char*> argv{"gtselect"};
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool; returns (exit code, stdout, stderr).");
}
