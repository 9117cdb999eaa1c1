#include "molcom/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <optional>
#include <string>

namespace {

struct CommonFlags {
    std::optional<std::uint64_t> seed;
    std::optional<std::uint32_t> workers;
    std::optional<std::string> out_dir;
    std::optional<std::uint32_t> realizations;

    molcom::CliOverrides overrides() const { return {seed, workers, out_dir, realizations}; }
};

void add_common(CLI::App* sub, std::string& spec_path, CommonFlags& flags) {
    sub->add_option("spec", spec_path, "experiment spec (or manifest) JSON file")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "override the spec's base seed");
    sub->add_option("--workers", flags.workers, "worker threads for simulation sweeps");
    sub->add_option("--out-dir", flags.out_dir, "override the spec's output directory");
    sub->add_option("--realizations", flags.realizations, "override the realization budget");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"simulation and analysis toolkit for cooperative diffusive links"};
    app.require_subcommand(1);

    std::string spec_path;
    CommonFlags flags;
    bool thorough = false;
    std::uint64_t validate_seed = 20260825;

    CLI::App* run = app.add_subcommand("run", "run an experiment sweep and emit CSV + manifest");
    add_common(run, spec_path, flags);
    CLI::App* tune =
        app.add_subcommand("tune", "grid-search decision thresholds for each sweep point");
    add_common(tune, spec_path, flags);
    CLI::App* optimize =
        app.add_subcommand("optimize", "sweep and optimize the RX molecule allocation");
    add_common(optimize, spec_path, flags);
    CLI::App* validate = app.add_subcommand("validate", "run the internal invariant suites");
    validate->add_flag("--thorough", thorough, "larger sample counts");
    validate->add_option("--seed", validate_seed, "seed for the randomized checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (run->parsed()) {
            const auto spec = molcom::ExperimentSpec::from_json_file(spec_path);
            const auto result = molcom::run_experiment(spec, flags.overrides());
            std::printf("wrote %zu rows to %s (%.1f s)\n", result.rows.size(),
                        result.csv_path.c_str(), result.wall_time_s);
        } else if (tune->parsed()) {
            const auto spec = molcom::ExperimentSpec::from_json_file(spec_path);
            const auto result = molcom::tune_constant_thresholds(spec, flags.overrides());
            std::printf("wrote %zu threshold rows to %s\n", result.rows.size(),
                        result.csv_path.c_str());
        } else if (optimize->parsed()) {
            const auto spec = molcom::ExperimentSpec::from_json_file(spec_path);
            const auto result = molcom::run_optimize(spec, flags.overrides());
            std::printf("wrote %zu rows to %s (%.1f s)\n", result.rows.size(),
                        result.csv_path.c_str(), result.wall_time_s);
        } else if (validate->parsed()) {
            const auto checks = molcom::run_validation_suite(validate_seed, thorough);
            bool all_pass = true;
            for (const auto& c : checks) {
                std::printf("%s %s - %s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(),
                            c.detail.c_str());
                all_pass = all_pass && c.pass;
            }
            if (!all_pass) return 2;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
