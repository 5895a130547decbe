#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "offirl/experiment.hpp"
#include "offirl/oracle.hpp"

namespace py = pybind11;
using namespace offirl;

namespace {

FiniteMdp finite_env(const std::string& name) {
  const Environment env = builtin_env(name);
  if (!env.is_finite()) throw InvalidParameter("'" + name + "' is not a finite environment");
  return env.finite();
}

ExperimentConfig config_from(const std::string& text, const std::vector<std::string>& overrides) {
  ExperimentConfig cfg = parse_config(text);
  for (const auto& o : overrides) apply_override(cfg, o);
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Offline inverse RL: exact occupancy oracles, MMD scoring and experiment runs";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidParameter>(m, "InvalidParameter", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<EmptyDataset>(m, "EmptyDataset", base.ptr());

  m.def("env_names", &builtin_env_names);
  m.def("algorithm_names", &algorithm_names);
  m.def("env_cost", [](const std::string& env) { return finite_env(env).cost; },
        "S x A cost table of a finite environment");

  m.def(
      "occupancy",
      [](const std::string& env, const Mat& policy, double gamma) {
        return exact_occupancy(finite_env(env), TabularPolicy(policy), gamma).values;
      },
      py::arg("env"), py::arg("policy"), py::arg("gamma"),
      "rows: start state; columns: s*A + a. Row mass 1/(1-gamma).");
  m.def(
      "mu",
      [](const std::string& env, const Mat& policy, double gamma, double delta) {
        return exact_mu(finite_env(env), TabularPolicy(policy), gamma, delta).values;
      },
      py::arg("env"), py::arg("policy"), py::arg("gamma"), py::arg("delta"));
  m.def(
      "value_iteration",
      [](const std::string& env, double gamma) {
        const FiniteMdp mdp = finite_env(env);
        return value_iteration(mdp, mdp.cost, gamma);
      },
      py::arg("env"), py::arg("gamma"));

  m.def("mmd_unbiased", &mmd_unbiased, py::arg("x"), py::arg("y"), "columns are samples");
  m.def("normalized_return", &normalized_return, py::arg("raw"), py::arg("random_anchor"), py::arg("expert_anchor"));

  m.def("default_config", [] { return dump_config(ExperimentConfig{}); });
  m.def(
      "resolve_config",
      [](const std::string& text, const std::vector<std::string>& overrides) {
        return dump_config(config_from(text, overrides));
      },
      py::arg("text") = "", py::arg("overrides") = std::vector<std::string>{});
  m.def(
      "train",
      [](const std::string& text, const std::vector<std::string>& overrides, const std::string& algorithm,
         std::uint64_t seed, const std::filesystem::path& dir) {
        const ExperimentConfig cfg = config_from(text, overrides);
        IrlResult r;
        {
          py::gil_scoped_release release;
          r = train_to_dir(cfg, parse_algorithm(algorithm), seed, dir);
        }
        return py::dict(py::arg("best_return") = r.best_return, py::arg("best_normalized") = r.best_normalized,
                        py::arg("iterations") = r.metrics.size());
      },
      py::arg("text"), py::arg("overrides"), py::arg("algorithm"), py::arg("seed"), py::arg("dir"),
      "One run into dir: config.ini, metrics.csv, policy/cost checkpoints, run.json.");
  m.def(
      "report",
      [](const std::vector<std::filesystem::path>& dirs, const std::string& out) {
        const Report r = collect_report(dirs);
        write_report_csv(r, out);
        py::list rows;
        for (const auto& x : r.rows)
          rows.append(py::dict(py::arg("env") = x.env, py::arg("algorithm") = x.algorithm,
                               py::arg("variant") = x.variant, py::arg("seed") = x.seed,
                               py::arg("normalized") = x.normalized));
        return rows;
      },
      py::arg("dirs"), py::arg("out"));
  m.def("median_ci95", &median_ci95, py::arg("values"));
}
