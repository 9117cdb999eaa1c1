#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "molcom/analytics.hpp"
#include "molcom/channel.hpp"
#include "molcom/experiment.hpp"
#include "molcom/particle_sim.hpp"
#include "molcom/system_config.hpp"

namespace py = pybind11;
using namespace molcom;

namespace {

py::dict report_to_dict(const ErrorReport& rep) {
    py::dict d;
    d["q_bar"] = rep.q_bar;
    d["std_err"] = rep.std_err;
    d["per_interval"] = rep.per_interval;
    d["per_interval_se"] = rep.per_interval_se;
    d["seed"] = rep.seed;
    d["realizations"] = rep.realizations;
    d["source"] = rep.source;
    return d;
}

}  // namespace

PYBIND11_MODULE(pymolcom, m) {
    m.doc() = "cooperative diffusive-link simulator: thin wrappers over the C++ core";

    m.def("hitting_probability", &hitting_probability, py::arg("r_obs"), py::arg("d"),
          py::arg("diff_coef"), py::arg("t"),
          "probability a molecule released at distance d sits inside the sphere at time t");

    m.def("closed_form_threshold", &closed_form_threshold, py::arg("lambda_s"),
          py::arg("lambda_i"), "nearest-integer two-hypothesis Poisson count threshold");

    m.def("config_hash",
          [](const std::string& config_json) {
              return SystemConfig::from_json_text(config_json).config_hash();
          },
          py::arg("config_json"));

    m.def(
        "error_rate",
        [](const std::string& config_json, const std::string& backend, std::uint32_t realizations,
           std::uint64_t seed, std::uint32_t workers) {
            const SystemConfig cfg = SystemConfig::from_json_text(config_json);
            const Model model = make_model(cfg);
            SimOptions opts;
            opts.realizations = realizations;
            opts.seed = seed;
            opts.workers = workers;
            if (backend == "particle")
                opts.backend = ChannelBackend::particle;
            else if (backend == "model")
                opts.backend = ChannelBackend::model;
            else
                throw std::invalid_argument("backend must be 'particle' or 'model'");
            return report_to_dict(estimate_error_rate(model, cfg.detector, opts));
        },
        py::arg("config_json"), py::arg("backend") = "model", py::arg("realizations") = 200,
        py::arg("seed") = 1, py::arg("workers") = 1,
        "Monte Carlo error rate of the configured detector");

    m.def(
        "analytic_error",
        [](const std::string& config_json, std::uint32_t realizations, std::uint64_t seed,
           std::uint32_t inner_draws) {
            const SystemConfig cfg = SystemConfig::from_json_text(config_json);
            const Model model = make_model(cfg);
            SeededStream stream(seed, 0);
            return report_to_dict(
                averaged_error(cfg.detector, model, realizations, stream, inner_draws));
        },
        py::arg("config_json"), py::arg("realizations") = 200, py::arg("seed") = 1,
        py::arg("inner_draws") = 200,
        "semi-analytical average error probability over random TX sequences");

    m.def(
        "run_experiment_file",
        [](const std::string& spec_path) {
            const ExperimentResult result = run_experiment(ExperimentSpec::from_json_file(spec_path));
            py::list rows;
            for (const auto& r : result.rows) {
                py::dict d;
                d["sweep_value"] = r.sweep_value;
                d["variant"] = r.variant;
                d["history_mode"] = r.history_mode;
                d["q_bar"] = r.q_bar;
                d["std_err"] = r.std_err;
                d["source"] = r.source;
                rows.append(d);
            }
            py::dict out;
            out["rows"] = rows;
            out["csv_path"] = result.csv_path;
            out["manifest_path"] = result.manifest_path;
            return out;
        },
        py::arg("spec_path"), "run an experiment spec and return its rows");

    m.def(
        "validate",
        [](std::uint64_t seed, bool thorough) {
            py::list out;
            for (const auto& c : run_validation_suite(seed, thorough)) {
                py::dict d;
                d["name"] = c.name;
                d["pass"] = c.pass;
                d["detail"] = c.detail;
                out.append(d);
            }
            return out;
        },
        py::arg("seed") = 20260825, py::arg("thorough") = false);
}
