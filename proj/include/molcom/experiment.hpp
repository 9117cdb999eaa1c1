#pragma once
// Declarative experiment execution: sweep specs, CSV + manifest emission,
// constant-threshold tuning, and the quick validation suite behind the CLI's
// `validate` subcommand.

#include "molcom/analytics.hpp"
#include "molcom/optimizer.hpp"
#include "molcom/particle_sim.hpp"
#include "molcom/system_config.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace molcom {

// Sweep axes: m_fc rescales the FC sampling grid (dt_fc = t_report / m_fc);
// K re-places that many RXs on the reference ring and re-splits the release
// budgets; rx3_distance moves the first RX along its line of sight to the
// given TX distance (micrometres); allocation_grid sweeps S_1 for K=2.
enum class SweepAxis { none, m_fc, K, rx3_distance, allocation_grid };

const char* to_string(SweepAxis axis);
SweepAxis sweep_axis_from_string(const std::string& s);

struct VariantRun {
    DetectorVariant variant;
    std::string source = "analytic";  // "analytic" or "particle_sim"
};

struct ExperimentSpec {
    std::string name = "experiment";
    SystemConfig base;
    std::vector<VariantRun> variants;
    SweepAxis axis = SweepAxis::none;
    std::vector<double> values;
    std::uint32_t realizations = 2000;
    std::uint64_t seed = 1;
    std::uint32_t workers = 1;
    std::string out_dir = "results";
    // When set, re-derive per-RX budgets at each sweep point: s_k from an
    // even split of rx_budget_total, alpha_k so each RX's expected amplified
    // release is af_release_budget / K.
    std::optional<double> rx_budget_total;
    std::optional<double> af_release_budget;
    std::optional<std::uint32_t> history_draws;  // analytic history averaging

    void validate() const;
    static ExperimentSpec from_json_text(const std::string& text);
    static ExperimentSpec from_json_file(const std::string& path);  // spec or manifest
    std::string to_json_text() const;
};

struct CliOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::uint32_t> workers;
    std::optional<std::string> out_dir;
    std::optional<std::uint32_t> realizations;
};

struct SweepRow {
    double sweep_value = 0.0;
    std::string variant;
    std::string history_mode;
    double q_bar = 0.0;
    double std_err = 0.0;
    bool exact = false;  // analytic branch with no Monte Carlo error: std_err left blank
    std::string source;
};

// The config actually used at one sweep point (budgets re-split, geometry
// moved, detector attached).
SystemConfig resolve_sweep_config(const ExperimentSpec& spec, double sweep_value,
                                  const DetectorVariant& variant);

// alpha_k such that E[round(alpha_k * rx sum)] ~= af_budget_total / K per
// interval under random equiprobable TX symbols.
std::vector<double> calibrate_alpha(const Model& model, double af_budget_total, double p1);

struct ExperimentResult {
    std::vector<SweepRow> rows;
    std::string csv_path;
    std::string manifest_path;
    double wall_time_s = 0.0;
};

ExperimentResult run_experiment(const ExperimentSpec& spec, const CliOverrides& overrides = {});

struct ThresholdChoice {
    double sweep_value = 0.0;
    std::string variant;
    std::string history_mode;
    std::uint64_t xi_rx = 0;
    std::uint64_t xi_fc = 0;  // constant kinds only; 0 otherwise
    double q_star = 0.0;
    double std_err = 0.0;
};

struct TuneResult {
    std::vector<ThresholdChoice> rows;
    std::string csv_path;
    std::string manifest_path;
};

// Exhaustive (xi_rx, xi_fc) grid per sweep point and variant, minimizing the
// model-backend Monte Carlo error rate; bounds from signal means +- 6 sqrt.
TuneResult tune_constant_thresholds(const ExperimentSpec& spec, const CliOverrides& overrides = {});

// allocation_grid pipeline: q_fc_sd rows across the grid plus one
// source=optimizer row per solve with the chosen split.
ExperimentResult run_optimize(const ExperimentSpec& spec, const CliOverrides& overrides = {});

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

// Fast invariant battery (threshold rule equivalences, kernel identity,
// physics probes); thorough widens the sample counts.
std::vector<CheckResult> run_validation_suite(std::uint64_t seed, bool thorough);

// Formatting helpers shared with the tests.
std::string format_csv(const std::vector<SweepRow>& rows);
std::string format_tune_csv(const std::vector<ThresholdChoice>& rows);

}  // namespace molcom
