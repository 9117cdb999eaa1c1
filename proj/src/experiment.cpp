#include "molcom/experiment.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace molcom {

namespace {

using nlohmann::json;

constexpr const char* kVersion = "1.0.0";
constexpr const char* kCsvVersion = "molcom-csv v1";

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Deterministic per-point seed from (base seed, sweep value, variant tag).
std::uint64_t mix_seed(std::uint64_t base, double value, const std::string& tag) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ base;
    auto mixin = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xFF;
            h *= 0x100000001b3ULL;
        }
    };
    std::uint64_t bits = 0;
    std::memcpy(&bits, &value, sizeof bits);
    mixin(bits);
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    // avalanche so nearby inputs decorrelate
    h ^= h >> 33;
    h *= 0xFF51AFD7ED558CCDULL;
    h ^= h >> 33;
    return h;
}

DetectorVariant parse_variant(const json& v, const DetectorVariant& base) {
    DetectorVariant out = base;
    out.rx_thresholds.clear();
    out.fc_constant_threshold.reset();
    if (!v.contains("kind")) throw std::invalid_argument("spec: variant entry needs 'kind'");
    out.kind = detector_kind_from_string(v.at("kind").get<std::string>());
    if (v.contains("history_mode"))
        out.history_mode = history_mode_from_string(v.at("history_mode").get<std::string>());
    if (v.contains("rx_thresholds"))
        for (const auto& t : v.at("rx_thresholds"))
            out.rx_thresholds.push_back(t.get<std::uint64_t>());
    else
        out.rx_thresholds = base.rx_thresholds;
    if (v.contains("fc_constant_threshold"))
        out.fc_constant_threshold = v.at("fc_constant_threshold").get<std::uint64_t>();
    if (v.contains("tie_decides_one")) out.tie_decides_one = v.at("tie_decides_one").get<bool>();
    if (v.contains("sa_path"))
        out.sa_path = v.at("sa_path").get<std::string>() == "mixture" ? SaPath::mixture
                                                                      : SaPath::mean;
    if (v.contains("sa_realization_budget"))
        out.sa_realization_budget = v.at("sa_realization_budget").get<std::uint32_t>();
    if (out.is_af()) out.rx_thresholds.clear();
    return out;
}

json variant_to_json(const VariantRun& run) {
    json v;
    v["kind"] = to_string(run.variant.kind);
    v["history_mode"] = to_string(run.variant.history_mode);
    if (!run.variant.rx_thresholds.empty()) v["rx_thresholds"] = run.variant.rx_thresholds;
    if (run.variant.fc_constant_threshold)
        v["fc_constant_threshold"] = *run.variant.fc_constant_threshold;
    v["tie_decides_one"] = run.variant.tie_decides_one;
    v["sa_path"] = run.variant.sa_path == SaPath::mean ? "mean" : "mixture";
    v["sa_realization_budget"] = run.variant.sa_realization_budget;
    v["source"] = run.source;
    return v;
}

std::string variant_tag(const VariantRun& run) {
    return std::string(to_string(run.variant.kind)) + "/" + to_string(run.variant.history_mode) +
           "/" + run.source;
}

// RX ring used by the K sweep: same lateral radius as the base geometry's
// first RX, centered on the FC, in the plane perpendicular to the TX->FC line
// (the bundled geometries put that line on x).
std::vector<Vec3> ring_positions(const SystemConfig& base, std::size_t K) {
    const Vec3 fc = base.spatial.fc_position;
    const double radius = distance(base.spatial.rx_positions.front(), fc);
    std::vector<Vec3> pos;
    pos.reserve(K);
    for (std::size_t k = 0; k < K; ++k) {
        const double theta = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(K);
        pos.push_back(Vec3{fc.x, fc.y + radius * std::cos(theta), fc.z + radius * std::sin(theta)});
    }
    return pos;
}

bool has_closed_analytic_path(const DetectorVariant& v) {
    if (v.kind == DetectorKind::SA_CONST) return true;
    if (v.history_mode != HistoryMode::genie) return false;
    if (v.kind == DetectorKind::SD_ML) return true;
    return v.kind == DetectorKind::SA_ML && v.sa_path == SaPath::mean;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << content;
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

json manifest_json(const ExperimentSpec& spec, const std::vector<std::string>& csv_files,
                   double wall_time_s) {
    json m;
    m["spec"] = json::parse(spec.to_json_text());
    m["config_hash"] = spec.base.config_hash();
    m["seed"] = spec.seed;
    m["realizations"] = spec.realizations;
    m["workers"] = spec.workers;
    m["versions"] = {{"molcom", kVersion}, {"csv", kCsvVersion}};
    m["csv_files"] = csv_files;
    m["wall_time_s"] = wall_time_s;
    return m;
}

ExperimentSpec apply_overrides(ExperimentSpec spec, const CliOverrides& overrides) {
    if (overrides.seed) spec.seed = *overrides.seed;
    if (overrides.workers) spec.workers = *overrides.workers;
    if (overrides.out_dir) spec.out_dir = *overrides.out_dir;
    if (overrides.realizations) spec.realizations = *overrides.realizations;
    return spec;
}

}  // namespace

const char* to_string(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::none: return "none";
        case SweepAxis::m_fc: return "m_fc";
        case SweepAxis::K: return "K";
        case SweepAxis::rx3_distance: return "rx3_distance";
        case SweepAxis::allocation_grid: return "allocation_grid";
    }
    return "?";
}

SweepAxis sweep_axis_from_string(const std::string& s) {
    if (s == "none") return SweepAxis::none;
    if (s == "m_fc") return SweepAxis::m_fc;
    if (s == "K") return SweepAxis::K;
    if (s == "rx3_distance") return SweepAxis::rx3_distance;
    if (s == "allocation_grid") return SweepAxis::allocation_grid;
    throw std::invalid_argument("unknown sweep axis '" + s + "'");
}

void ExperimentSpec::validate() const {
    if (variants.empty()) throw std::invalid_argument("spec: needs at least one variant");
    if (realizations == 0) throw std::invalid_argument("spec: realizations must be >= 1");
    if (axis != SweepAxis::none && values.empty())
        throw std::invalid_argument("spec: sweep needs values");
    for (double v : values) {
        switch (axis) {
            case SweepAxis::m_fc:
                if (v < 1 || v != std::floor(v))
                    throw std::invalid_argument("spec: m_fc values must be positive integers");
                break;
            case SweepAxis::K:
                if (v < 1 || v > 16 || v != std::floor(v))
                    throw std::invalid_argument("spec: K values must be integers in 1..16");
                break;
            case SweepAxis::rx3_distance:
                if (v <= 0) throw std::invalid_argument("spec: rx3_distance values must be > 0 um");
                break;
            case SweepAxis::allocation_grid:
                if (v < 0) throw std::invalid_argument("spec: allocation values must be >= 0");
                break;
            case SweepAxis::none:
                break;
        }
    }
    if (axis == SweepAxis::allocation_grid && base.spatial.K() != 2)
        throw std::invalid_argument("spec: allocation_grid sweeps S_1 and needs K = 2");
    for (const auto& run : variants)
        if (run.source != "analytic" && run.source != "particle_sim")
            throw std::invalid_argument("spec: variant source must be analytic or particle_sim");
}

ExperimentSpec ExperimentSpec::from_json_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("spec: parse error: ") + e.what());
    }
    const json& j = root.contains("spec") ? root.at("spec") : root;  // accept a manifest

    ExperimentSpec spec;
    if (j.contains("name")) spec.name = j.at("name").get<std::string>();
    if (!j.contains("config")) throw std::invalid_argument("spec: missing 'config'");
    spec.base = SystemConfig::from_json_text(j.at("config").dump());

    if (j.contains("variants")) {
        for (const auto& v : j.at("variants")) {
            VariantRun run;
            run.variant = parse_variant(v, spec.base.detector);
            if (v.contains("source")) run.source = v.at("source").get<std::string>();
            spec.variants.push_back(std::move(run));
        }
    } else {
        spec.variants.push_back(VariantRun{spec.base.detector, "analytic"});
    }

    if (j.contains("sweep")) {
        const json& sw = j.at("sweep");
        if (!sw.contains("axis")) throw std::invalid_argument("spec: sweep needs 'axis'");
        spec.axis = sweep_axis_from_string(sw.at("axis").get<std::string>());
        if (sw.contains("values"))
            for (const auto& v : sw.at("values")) spec.values.push_back(v.get<double>());
    }
    if (j.contains("realizations")) spec.realizations = j.at("realizations").get<std::uint32_t>();
    if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("workers")) spec.workers = j.at("workers").get<std::uint32_t>();
    if (j.contains("out_dir")) spec.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("rx_budget_total")) spec.rx_budget_total = j.at("rx_budget_total").get<double>();
    if (j.contains("af_release_budget"))
        spec.af_release_budget = j.at("af_release_budget").get<double>();
    if (j.contains("history_draws")) spec.history_draws = j.at("history_draws").get<std::uint32_t>();

    spec.validate();
    return spec;
}

ExperimentSpec ExperimentSpec::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("spec: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str());
}

std::string ExperimentSpec::to_json_text() const {
    json j;
    j["name"] = name;
    j["config"] = json::parse(base.to_json_text());
    json vs = json::array();
    for (const auto& run : variants) vs.push_back(variant_to_json(run));
    j["variants"] = vs;
    if (axis != SweepAxis::none) j["sweep"] = {{"axis", to_string(axis)}, {"values", values}};
    j["realizations"] = realizations;
    j["seed"] = seed;
    j["workers"] = workers;
    j["out_dir"] = out_dir;
    if (rx_budget_total) j["rx_budget_total"] = *rx_budget_total;
    if (af_release_budget) j["af_release_budget"] = *af_release_budget;
    if (history_draws) j["history_draws"] = *history_draws;
    return j.dump();
}

std::vector<double> calibrate_alpha(const Model& model, double af_budget_total, double p1) {
    const std::size_t K = model.K();
    std::vector<double> alpha(K);
    for (std::size_t k = 0; k < K; ++k) {
        double expected = 0.0;  // E[per-interval RX observation] under random symbols
        for (double s : model.tx_rx[k].summed_by_lag) expected += s;
        expected *= model.release.s0 * p1;
        if (expected <= 0.0)
            throw std::invalid_argument("calibrate_alpha: RX sees no molecules in expectation");
        alpha[k] = (af_budget_total / static_cast<double>(K)) / expected;
    }
    return alpha;
}

SystemConfig resolve_sweep_config(const ExperimentSpec& spec, double sweep_value,
                                  const DetectorVariant& variant) {
    SystemConfig cfg = spec.base;
    cfg.detector = variant;

    switch (spec.axis) {
        case SweepAxis::none:
        case SweepAxis::allocation_grid:
            break;
        case SweepAxis::m_fc: {
            const auto m = static_cast<std::uint32_t>(sweep_value);
            cfg.timing.m_fc = m;
            cfg.timing.dt_fc = cfg.timing.t_report / m;
            break;
        }
        case SweepAxis::K: {
            const auto K = static_cast<std::size_t>(sweep_value);
            cfg.spatial.rx_positions = ring_positions(spec.base, K);
            cfg.spatial.rx_radii.assign(K, spec.base.spatial.rx_radii.front());
            if (!cfg.release.d_k.empty())
                cfg.release.d_k.assign(K, spec.base.release.d_k.front());
            // Always resize to K: the rx_budget_total split below only runs for
            // DF kinds, but validate() wants K entries for AF kinds too.
            if (!cfg.release.s_k.empty())
                cfg.release.s_k.assign(K, spec.base.release.s_k.front());
            if (!cfg.release.alpha_k.empty()) cfg.release.alpha_k.assign(K, 1.0);  // recalibrated below
            break;
        }
        case SweepAxis::rx3_distance: {
            Vec3& rx = cfg.spatial.rx_positions.front();
            const Vec3 tx = cfg.spatial.tx_position;
            const Vec3 d = rx - tx;
            const double len = norm(d);
            if (len <= 0) throw std::invalid_argument("spec: first RX sits on the TX");
            const double target = sweep_value * 1e-6;  // value in um
            rx = Vec3{tx.x + d.x / len * target, tx.y + d.y / len * target,
                      tx.z + d.z / len * target};
            break;
        }
    }

    const std::size_t K = cfg.spatial.K();
    if (spec.rx_budget_total && !cfg.detector.is_af()) {
        const double each = std::llround(*spec.rx_budget_total / static_cast<double>(K));
        cfg.release.s_k.assign(K, each);
    }
    if (cfg.detector.rx_thresholds.size() == 1 && K > 1)
        cfg.detector.rx_thresholds.assign(K, cfg.detector.rx_thresholds.front());
    if (cfg.detector.is_af() && spec.af_release_budget) {
        if (cfg.release.alpha_k.size() != K) cfg.release.alpha_k.assign(K, 1.0);
        SystemConfig probe = cfg;  // placeholder alphas only feed the profile build
        cfg.release.alpha_k = calibrate_alpha(make_model(probe), *spec.af_release_budget,
                                              cfg.release.p1);
    }
    cfg.validate();
    return cfg;
}

ExperimentResult run_experiment(const ExperimentSpec& raw_spec, const CliOverrides& overrides) {
    const ExperimentSpec spec = apply_overrides(raw_spec, overrides);
    spec.validate();
    if (spec.axis == SweepAxis::allocation_grid) return run_optimize(spec, {});

    const auto t_start = std::chrono::steady_clock::now();
    const std::vector<double> values = spec.axis == SweepAxis::none
                                           ? std::vector<double>{0.0}
                                           : spec.values;
    ExperimentResult result;
    for (double value : values) {
        for (const auto& run : spec.variants) {
            const SystemConfig cfg = resolve_sweep_config(spec, value, run.variant);
            const Model model = make_model(cfg);
            const std::uint64_t point_seed = mix_seed(spec.seed, value, variant_tag(run));

            ErrorReport report;
            if (run.source == "particle_sim" || !has_closed_analytic_path(cfg.detector)) {
                SimOptions opts;
                opts.realizations = spec.realizations;
                opts.seed = point_seed;
                opts.workers = spec.workers;
                opts.backend = run.source == "particle_sim" ? ChannelBackend::particle
                                                            : ChannelBackend::model;
                report = estimate_error_rate(model, cfg.detector, opts);
                if (run.source != "particle_sim") report.source = "analytic";
            } else {
                SeededStream stream(point_seed, 0);
                report = averaged_error(cfg.detector, model, spec.realizations, stream,
                                        spec.history_draws.value_or(200));
            }

            SweepRow row;
            row.sweep_value = value;
            row.variant = to_string(run.variant.kind);
            row.history_mode = to_string(run.variant.history_mode);
            row.q_bar = report.q_bar;
            row.std_err = report.std_err;
            row.exact = false;
            row.source = run.source == "particle_sim" ? "particle_sim" : "analytic";
            result.rows.push_back(std::move(row));
        }
    }

    namespace fs = std::filesystem;
    fs::create_directories(spec.out_dir);
    result.csv_path = (fs::path(spec.out_dir) / (spec.name + ".csv")).string();
    write_file(result.csv_path, format_csv(result.rows));

    result.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    result.manifest_path = (fs::path(spec.out_dir) / (spec.name + "_manifest.json")).string();
    write_file(result.manifest_path,
               manifest_json(spec, {result.csv_path}, result.wall_time_s).dump(2) + "\n");
    return result;
}

TuneResult tune_constant_thresholds(const ExperimentSpec& raw_spec, const CliOverrides& overrides) {
    const ExperimentSpec spec = apply_overrides(raw_spec, overrides);
    spec.validate();
    const auto t_start = std::chrono::steady_clock::now();

    const std::vector<double> values = spec.axis == SweepAxis::none
                                           ? std::vector<double>{0.0}
                                           : spec.values;
    TuneResult result;
    for (double value : values) {
        for (const auto& run : spec.variants) {
            DetectorVariant variant = run.variant;
            const bool tunes_rx = !variant.is_af();
            const bool tunes_fc = variant.kind == DetectorKind::MAJORITY ||
                                  variant.kind == DetectorKind::SD_CONST ||
                                  variant.kind == DetectorKind::SA_CONST;
            if (!tunes_rx && !tunes_fc)
                throw std::invalid_argument(
                    std::string("tune: nothing to tune for ") + to_string(variant.kind));

            // placeholders so the config resolves while we search
            if (tunes_rx && variant.rx_thresholds.empty()) variant.rx_thresholds = {1};
            if (tunes_fc && !variant.fc_constant_threshold) variant.fc_constant_threshold = 1;
            const SystemConfig cfg = resolve_sweep_config(spec, value, variant);
            const Model model = make_model(cfg);
            const std::size_t K = model.K();

            // grid bounds from the relevant signal means
            std::uint64_t rx_hi = 1, fc_hi = 1;
            if (tunes_rx) {
                double mean = 0.0;
                for (std::size_t k = 0; k < K; ++k)
                    mean = std::max(mean, model.release.s0 * model.tx_rx[k].summed_by_lag[0]);
                rx_hi = static_cast<std::uint64_t>(std::ceil(mean + 6.0 * std::sqrt(mean))) + 1;
            }
            if (tunes_fc) {
                // worst-case mean: full ISI history plus the current signal
                double mean = 0.0;
                if (variant.kind == DetectorKind::SA_CONST) {
                    std::vector<std::uint8_t> ones(model.timing.L - 1, 1);
                    const MeanSplit ms = sa_fc_isi_and_signal(
                        model.rx_fc, ones, model.release.alpha_k, model.release.s0, model.tx_rx);
                    mean = ms.isi_mean + ms.signal_mean;
                } else {
                    for (std::size_t k = 0; k < K; ++k) {
                        double per_species = 0.0;
                        for (double s : model.rx_fc[k].summed_by_lag)
                            per_species += model.release.s_k[k] * s;
                        mean = variant.kind == DetectorKind::MAJORITY ? std::max(mean, per_species)
                                                                      : mean + per_species;
                    }
                }
                fc_hi = static_cast<std::uint64_t>(std::ceil(mean + 6.0 * std::sqrt(mean))) + 1;
            }
            const double grid_size = static_cast<double>(tunes_rx ? rx_hi : 1) *
                                     static_cast<double>(tunes_fc ? fc_hi : 1);
            if (grid_size > 2e4)
                throw std::invalid_argument("tune: threshold grid exceeds 2*10^4 points");

            const std::uint64_t point_seed = mix_seed(spec.seed, value, variant_tag(run) + "/tune");
            const std::uint32_t search_real =
                std::max<std::uint32_t>(100, spec.realizations / 10);

            ThresholdChoice best;
            best.q_star = 2.0;
            for (std::uint64_t xr = 1; xr <= (tunes_rx ? rx_hi : 1); ++xr) {
                for (std::uint64_t xf = 1; xf <= (tunes_fc ? fc_hi : 1); ++xf) {
                    DetectorVariant cand = cfg.detector;
                    if (tunes_rx) cand.rx_thresholds.assign(K, xr);
                    if (tunes_fc) cand.fc_constant_threshold = xf;
                    SimOptions opts;
                    opts.realizations = search_real;
                    opts.seed = point_seed;  // common random numbers across candidates
                    opts.workers = spec.workers;
                    opts.backend = ChannelBackend::model;
                    const ErrorReport rep = estimate_error_rate(model, cand, opts);
                    if (rep.q_bar < best.q_star) {
                        best.q_star = rep.q_bar;
                        best.std_err = rep.std_err;
                        best.xi_rx = tunes_rx ? xr : 0;
                        best.xi_fc = tunes_fc ? xf : 0;
                    }
                }
            }

            // re-estimate the winner at the full budget
            DetectorVariant win = cfg.detector;
            if (tunes_rx) win.rx_thresholds.assign(K, best.xi_rx);
            if (tunes_fc) win.fc_constant_threshold = best.xi_fc;
            SimOptions final_opts;
            final_opts.realizations = spec.realizations;
            final_opts.seed = point_seed + 1;
            final_opts.workers = spec.workers;
            final_opts.backend = ChannelBackend::model;
            const ErrorReport rep = estimate_error_rate(model, win, final_opts);
            best.q_star = rep.q_bar;
            best.std_err = rep.std_err;
            best.sweep_value = value;
            best.variant = to_string(variant.kind);
            best.history_mode = to_string(variant.history_mode);
            result.rows.push_back(best);
        }
    }

    namespace fs = std::filesystem;
    fs::create_directories(spec.out_dir);
    result.csv_path = (fs::path(spec.out_dir) / (spec.name + "_thresholds.csv")).string();
    write_file(result.csv_path, format_tune_csv(result.rows));
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    result.manifest_path = (fs::path(spec.out_dir) / (spec.name + "_thresholds_manifest.json")).string();
    write_file(result.manifest_path, manifest_json(spec, {result.csv_path}, wall).dump(2) + "\n");
    return result;
}

ExperimentResult run_optimize(const ExperimentSpec& raw_spec, const CliOverrides& overrides) {
    const ExperimentSpec spec = apply_overrides(raw_spec, overrides);
    spec.validate();
    if (spec.axis != SweepAxis::allocation_grid)
        throw std::invalid_argument("optimize: spec needs the allocation_grid sweep axis");
    const auto t_start = std::chrono::steady_clock::now();

    const VariantRun& run = spec.variants.front();
    if (run.variant.kind != DetectorKind::SD_ML)
        throw std::invalid_argument("optimize: allocation search targets SD_ML");
    const SystemConfig cfg = resolve_sweep_config(spec, 0.0, run.variant);
    Model model = make_model(cfg);
    double n_total = 0.0;
    if (spec.rx_budget_total)
        n_total = *spec.rx_budget_total;
    else
        for (double s : cfg.release.s_k) n_total += s;

    ErrorQuery query;
    query.kind = DetectorKind::SD_ML;
    query.p1 = cfg.release.p1;
    query.rx_thresholds = cfg.detector.rx_thresholds;
    query.history_draws = spec.history_draws.value_or(400);
    // a worked-in prefix so the threshold adapts to nonzero ISI
    query.tx_prefix.assign(std::min<std::size_t>(5, model.timing.L - 1), 1);

    ExperimentResult result;
    for (double s1 : spec.values) {
        Model point = model;
        point.release.s_k = {s1, std::max(0.0, n_total - s1)};
        SeededStream stream(mix_seed(spec.seed, s1, variant_tag(run)), 0);
        const QValue q = q_fc_sd(query, point, stream);
        SweepRow row;
        row.sweep_value = s1;
        row.variant = to_string(run.variant.kind);
        row.history_mode = to_string(run.variant.history_mode);
        row.q_bar = q.value;
        row.std_err = q.std_err;
        row.source = "analytic";
        result.rows.push_back(std::move(row));
    }

    AllocationProblem problem;
    problem.n_total = n_total;
    problem.query = query;
    problem.history_draws = std::min<std::uint32_t>(query.history_draws, 64);
    problem.seed = spec.seed;
    const AllocationResult opt = solve_allocation(problem, model);
    SweepRow row;
    row.sweep_value = opt.allocation.front();
    row.variant = to_string(run.variant.kind);
    row.history_mode = to_string(run.variant.history_mode);
    row.q_bar = opt.objective;
    row.std_err = 0.0;
    row.exact = true;
    row.source = "optimizer";
    result.rows.push_back(std::move(row));

    namespace fs = std::filesystem;
    fs::create_directories(spec.out_dir);
    result.csv_path = (fs::path(spec.out_dir) / (spec.name + ".csv")).string();
    write_file(result.csv_path, format_csv(result.rows));
    result.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    result.manifest_path = (fs::path(spec.out_dir) / (spec.name + "_manifest.json")).string();
    write_file(result.manifest_path,
               manifest_json(spec, {result.csv_path}, result.wall_time_s).dump(2) + "\n");
    return result;
}

namespace {

// Symmetric reference geometry used by the validation battery: RX ring of
// radius 0.6 um around the FC at 2 um, reference timing, pooled-species DF.
SystemConfig validation_config(std::size_t K) {
    SystemConfig cfg;
    cfg.spatial.tx_position = {0, 0, 0};
    cfg.spatial.fc_position = {2e-6, 0, 0};
    for (std::size_t k = 0; k < K; ++k) {
        const double theta = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(K);
        cfg.spatial.rx_positions.push_back(
            Vec3{2e-6, 0.6e-6 * std::cos(theta), 0.6e-6 * std::sin(theta)});
    }
    cfg.spatial.rx_radii.assign(K, 0.2e-6);
    cfg.spatial.fc_radius = 0.2e-6;
    cfg.timing.t_trans = 1e-3;
    cfg.timing.t_report = 0.3e-3;
    cfg.timing.T = 1.3e-3;
    cfg.timing.dt_rx = 100e-6;
    cfg.timing.dt_fc = 30e-6;
    cfg.timing.m_rx = 5;
    cfg.timing.m_fc = 10;
    cfg.timing.L = 20;
    cfg.release.s0 = 1e4;
    cfg.release.s_k.assign(K, std::llround(2000.0 / static_cast<double>(K)));
    cfg.release.d0 = 5e-9;
    cfg.release.p1 = 0.5;
    cfg.detector.kind = DetectorKind::SD_ML;
    cfg.detector.history_mode = HistoryMode::genie;
    cfg.detector.rx_thresholds.assign(K, 2);
    return cfg;
}

// Poisson pmf difference whose root is the two-hypothesis crossing, as a
// function of a real-valued count (via lgamma); used to re-derive the closed
// form by bisection.
double crossing_gap(double s, double lambda_s, double lambda_i) {
    return s * std::log((lambda_i + lambda_s) / lambda_i) - lambda_s;
}

}  // namespace

std::vector<CheckResult> run_validation_suite(std::uint64_t seed, bool thorough) {
    std::vector<CheckResult> checks;
    char detail[160];

    // threshold rule vs per-count likelihood comparison
    {
        SeededStream stream(seed, 11);
        const int contexts = thorough ? 2000 : 400;
        int mismatches = 0, compared = 0;
        for (int c = 0; c < contexts; ++c) {
            const std::size_t K = 1 + stream.next_u64() % 3;
            SystemConfig cfg = validation_config(K);
            const double scale = 0.5 + 1.5 * stream.uniform01();
            for (double& s : cfg.release.s_k) s = std::max(1.0, std::floor(s * scale));
            for (auto& t : cfg.detector.rx_thresholds) t = 1 + stream.next_u64() % 5;
            const Model model = make_model(cfg);
            const std::size_t plen = stream.next_u64() % 7;
            std::vector<std::uint8_t> prefix(plen);
            for (auto& b : prefix) b = stream.bernoulli(0.5) ? 1 : 0;
            std::vector<std::vector<std::uint8_t>> hist(K, std::vector<std::uint8_t>(plen));
            for (auto& h : hist)
                for (auto& b : h) b = stream.bernoulli(0.5) ? 1 : 0;
            const SdMixture mix = build_sd_mixture(model, prefix, hist, cfg.release.s_k,
                                                   cfg.detector.rx_thresholds);
            if (mix.isi_mean <= 0.0 && K > 1) continue;  // rule fixed by convention there
            ++compared;
            const std::uint64_t xi =
                mix.isi_mean > 0.0 ? adaptive_threshold(mix, true) : 1;
            double max_mean = mix.isi_mean;
            for (double s : mix.component_signal) max_mean = std::max(max_mean, mix.isi_mean + s);
            const auto upper =
                static_cast<std::uint64_t>(std::ceil(max_mean + 12.0 * std::sqrt(max_mean))) + 1;
            for (std::uint64_t s = 0; s <= upper; ++s) {
                const bool by_argmax =
                    sd_log_likelihood(mix, s, 1) >= sd_log_likelihood(mix, s, 0);
                const bool by_threshold = s >= xi;
                if (by_argmax != by_threshold) ++mismatches;
            }
        }
        std::snprintf(detail, sizeof detail, "%d mismatches across %d contexts", mismatches,
                      compared);
        checks.push_back({"threshold_rule_equals_argmax", mismatches == 0, detail});
    }

    // closed-form crossing vs independent bisection
    {
        SeededStream stream(seed, 12);
        const int trials = thorough ? 1000 : 300;
        int mismatches = 0;
        for (int t = 0; t < trials; ++t) {
            const double ls = std::exp(std::log(0.5) + stream.uniform01() * std::log(400.0));
            const double li = std::exp(std::log(0.1) + stream.uniform01() * std::log(1000.0));
            double lo = 0.0, hi = 1e9;
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (lo + hi);
                (crossing_gap(mid, ls, li) < 0.0 ? lo : hi) = mid;
            }
            if (std::llround(0.5 * (lo + hi)) != closed_form_threshold(ls, li)) ++mismatches;
        }
        std::snprintf(detail, sizeof detail, "%d mismatches across %d samples", mismatches, trials);
        checks.push_back({"closed_form_threshold_matches_bisection", mismatches == 0, detail});
    }

    // the semi-analytical error and the optimizer objective share one kernel
    {
        SeededStream stream(seed, 13);
        const int scenarios = thorough ? 200 : 60;
        int mismatches = 0;
        for (int c = 0; c < scenarios; ++c) {
            const std::size_t K = 1 + stream.next_u64() % 3;
            const SystemConfig cfg = validation_config(K);
            const Model model = make_model(cfg);
            ErrorQuery query;
            query.kind = DetectorKind::SD_ML;
            query.rx_thresholds = cfg.detector.rx_thresholds;
            query.history_draws = 1;
            const std::size_t plen = 1 + stream.next_u64() % 6;
            query.tx_prefix.resize(plen);
            for (auto& b : query.tx_prefix) b = stream.bernoulli(0.5) ? 1 : 0;

            const std::uint64_t sub_seed = stream.next_u64();
            SeededStream a(sub_seed, 0), b(sub_seed, 0);
            const double via_q = q_fc_sd(query, model, a).value;
            const LinkErrorProbs errs = link_error_probs(model, query.tx_prefix,
                                                         query.rx_thresholds);
            const auto hist = coin_toss_rx_history(b, query.tx_prefix, errs, false);
            const SdMixture mix = build_sd_mixture(model, query.tx_prefix, hist,
                                                   cfg.release.s_k, query.rx_thresholds);
            const std::uint64_t xi = mix.isi_mean > 0.0 ? adaptive_threshold(mix, true) : 1;
            const double direct = sd_conditional_error(mix, xi, query.p1);
            const double via_sharp = q_sharp(cfg.release.s_k, static_cast<double>(xi), query,
                                             model, hist, LambdaForm::discrete);
            if (via_q != direct || via_sharp != direct) ++mismatches;
        }
        std::snprintf(detail, sizeof detail, "%d mismatches across %d scenarios", mismatches,
                      scenarios);
        checks.push_back({"error_kernel_shared_exactly", mismatches == 0, detail});
    }

    // physics: observation probability against a Brownian walk
    {
        SeededStream stream(seed, 14);
        const std::uint64_t walkers = thorough ? 2000000 : 500000;
        const struct {
            double r, d, t;
        } pts[] = {{0.2e-6, 2.0e-6, 0.5e-3}, {0.2e-6, 0.6e-6, 30e-6}};
        double worst = 0.0;
        for (const auto& p : pts) {
            const double closed = hitting_probability(p.r, p.d, 5e-9, p.t);
            const Estimate mc = hitting_probability_mc(p.r, p.d, 5e-9, p.t, walkers, stream);
            const double se = std::max(mc.std_err, 1e-300);
            worst = std::max(worst, std::fabs(mc.value - closed) / se);
        }
        std::snprintf(detail, sizeof detail, "max |z| = %.2f across 2 geometries", worst);
        checks.push_back({"hitting_probability_matches_walk", worst <= 3.0, detail});
    }

    // physics: mean squared displacement 6 D t
    {
        SeededStream stream(seed, 15);
        const Estimate msd = msd_probe(5e-9, 1e-3, 100000, stream);
        const double expect = 6.0 * 5e-9 * 1e-3;
        const double z = std::fabs(msd.value - expect) / std::max(msd.std_err, 1e-300);
        std::snprintf(detail, sizeof detail, "|z| = %.2f", z);
        checks.push_back({"mean_squared_displacement", z <= 3.0, detail});
    }
    return checks;
}

std::string format_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out << "# " << kCsvVersion << "\n";
    out << "sweep_value,variant,history_mode,q_bar,std_err,source\n";
    for (const auto& r : rows) {
        out << fmt(r.sweep_value) << ',' << r.variant << ',' << r.history_mode << ','
            << fmt(r.q_bar) << ',' << (r.exact ? std::string() : fmt(r.std_err)) << ','
            << r.source << "\n";
    }
    return out.str();
}

std::string format_tune_csv(const std::vector<ThresholdChoice>& rows) {
    std::ostringstream out;
    out << "# " << kCsvVersion << "\n";
    out << "sweep_value,variant,history_mode,xi_rx,xi_fc,q_star,std_err\n";
    for (const auto& r : rows) {
        out << fmt(r.sweep_value) << ',' << r.variant << ',' << r.history_mode << ','
            << r.xi_rx << ',' << r.xi_fc << ',' << fmt(r.q_star) << ',' << fmt(r.std_err)
            << "\n";
    }
    return out.str();
}

}  // namespace molcom
