#include "molcom/system_config.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace molcom {

namespace {

using nlohmann::json;  // plain json: keys stored sorted, which keeps dumps canonical

constexpr double kUm = 1e-6;         // m per micrometre
constexpr double kMs = 1e-3;         // s per millisecond
constexpr double kUm2PerMs = 1e-9;   // m^2/s per um^2/ms

const json& require(const json& j, const char* key, const std::string& path) {
    if (!j.is_object() || !j.contains(key))
        throw std::invalid_argument("config: missing field '" + path + "'");
    return j.at(key);
}

double num(const json& j, const std::string& path) {
    if (!j.is_number()) throw std::invalid_argument("config: '" + path + "' must be a number");
    return j.get<double>();
}

std::uint64_t uint_field(const json& j, const std::string& path) {
    if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0))
        throw std::invalid_argument("config: '" + path + "' must be a nonnegative integer");
    return j.get<std::uint64_t>();
}

Vec3 vec3_field(const json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 3)
        throw std::invalid_argument("config: '" + path + "' must be [x, y, z]");
    return Vec3{num(j[0], path), num(j[1], path), num(j[2], path)};
}

std::vector<double> num_array(const json& j, const std::string& path) {
    if (!j.is_array()) throw std::invalid_argument("config: '" + path + "' must be an array");
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& v : j) out.push_back(num(v, path));
    return out;
}

json vec3_to_json(const Vec3& v, double scale) {
    return json::array({v.x / scale, v.y / scale, v.z / scale});
}

}  // namespace

void SystemConfig::validate() const {
    spatial.validate();
    timing.validate();
    release.validate(spatial.K());
    detector.validate(spatial.K());
    const bool df = !detector.is_af();
    if (df && detector.kind != DetectorKind::SA_CONST && release.s_k.size() != spatial.K())
        throw std::invalid_argument("config: decode-and-forward detector needs s_k of length K");
    if (detector.is_af() && release.alpha_k.size() != spatial.K())
        throw std::invalid_argument("config: amplify-and-forward detector needs alpha_k of length K");
}

SystemConfig SystemConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: parse error: ") + e.what());
    }

    SystemConfig cfg;
    const json& sp = require(j, "spatial", "spatial");
    cfg.spatial.tx_position = vec3_field(require(sp, "tx_position_um", "spatial.tx_position_um"),
                                         "spatial.tx_position_um");
    cfg.spatial.tx_position = {cfg.spatial.tx_position.x * kUm, cfg.spatial.tx_position.y * kUm,
                               cfg.spatial.tx_position.z * kUm};
    const json& rxp = require(sp, "rx_positions_um", "spatial.rx_positions_um");
    if (!rxp.is_array() || rxp.empty())
        throw std::invalid_argument("config: 'spatial.rx_positions_um' must be a nonempty array");
    for (const auto& p : rxp) {
        Vec3 v = vec3_field(p, "spatial.rx_positions_um[]");
        cfg.spatial.rx_positions.push_back({v.x * kUm, v.y * kUm, v.z * kUm});
    }
    Vec3 fc = vec3_field(require(sp, "fc_position_um", "spatial.fc_position_um"),
                         "spatial.fc_position_um");
    cfg.spatial.fc_position = {fc.x * kUm, fc.y * kUm, fc.z * kUm};
    for (double r : num_array(require(sp, "rx_radii_um", "spatial.rx_radii_um"), "spatial.rx_radii_um"))
        cfg.spatial.rx_radii.push_back(r * kUm);
    cfg.spatial.fc_radius = num(require(sp, "fc_radius_um", "spatial.fc_radius_um"),
                                "spatial.fc_radius_um") * kUm;

    const json& tm = require(j, "timing", "timing");
    cfg.timing.t_trans = num(require(tm, "t_trans_ms", "timing.t_trans_ms"), "timing.t_trans_ms") * kMs;
    cfg.timing.t_report = num(require(tm, "t_report_ms", "timing.t_report_ms"), "timing.t_report_ms") * kMs;
    cfg.timing.T = num(require(tm, "T_ms", "timing.T_ms"), "timing.T_ms") * kMs;
    cfg.timing.dt_rx = num(require(tm, "dt_rx_ms", "timing.dt_rx_ms"), "timing.dt_rx_ms") * kMs;
    cfg.timing.dt_fc = num(require(tm, "dt_fc_ms", "timing.dt_fc_ms"), "timing.dt_fc_ms") * kMs;
    cfg.timing.m_rx = static_cast<std::uint32_t>(uint_field(require(tm, "m_rx", "timing.m_rx"), "timing.m_rx"));
    cfg.timing.m_fc = static_cast<std::uint32_t>(uint_field(require(tm, "m_fc", "timing.m_fc"), "timing.m_fc"));
    cfg.timing.L = static_cast<std::uint32_t>(uint_field(require(tm, "L", "timing.L"), "timing.L"));

    const json& rl = require(j, "release", "release");
    cfg.release.s0 = num(require(rl, "s0", "release.s0"), "release.s0");
    if (rl.contains("s_k")) cfg.release.s_k = num_array(rl.at("s_k"), "release.s_k");
    if (rl.contains("alpha_k")) cfg.release.alpha_k = num_array(rl.at("alpha_k"), "release.alpha_k");
    cfg.release.d0 = num(require(rl, "d_um2_per_ms", "release.d_um2_per_ms"),
                         "release.d_um2_per_ms") * kUm2PerMs;
    if (rl.contains("d_k_um2_per_ms")) {
        for (double d : num_array(rl.at("d_k_um2_per_ms"), "release.d_k_um2_per_ms"))
            cfg.release.d_k.push_back(d * kUm2PerMs);
    }
    if (rl.contains("p1")) cfg.release.p1 = num(rl.at("p1"), "release.p1");

    const json& dt = require(j, "detector", "detector");
    cfg.detector.kind = detector_kind_from_string(
        require(dt, "kind", "detector.kind").get<std::string>());
    if (dt.contains("history_mode"))
        cfg.detector.history_mode =
            history_mode_from_string(dt.at("history_mode").get<std::string>());
    if (dt.contains("rx_thresholds")) {
        for (const auto& v : dt.at("rx_thresholds"))
            cfg.detector.rx_thresholds.push_back(uint_field(v, "detector.rx_thresholds[]"));
    }
    if (dt.contains("fc_constant_threshold"))
        cfg.detector.fc_constant_threshold =
            uint_field(dt.at("fc_constant_threshold"), "detector.fc_constant_threshold");
    if (dt.contains("tie_decides_one")) {
        if (!dt.at("tie_decides_one").is_boolean())
            throw std::invalid_argument("config: 'detector.tie_decides_one' must be a boolean");
        cfg.detector.tie_decides_one = dt.at("tie_decides_one").get<bool>();
    }
    if (dt.contains("sa_path")) {
        const std::string p = dt.at("sa_path").get<std::string>();
        if (p == "mean")
            cfg.detector.sa_path = SaPath::mean;
        else if (p == "mixture")
            cfg.detector.sa_path = SaPath::mixture;
        else
            throw std::invalid_argument("config: 'detector.sa_path' must be mean or mixture");
    }
    if (dt.contains("sa_realization_budget"))
        cfg.detector.sa_realization_budget = static_cast<std::uint32_t>(
            uint_field(dt.at("sa_realization_budget"), "detector.sa_realization_budget"));

    cfg.validate();
    return cfg;
}

SystemConfig SystemConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str());
}

std::string SystemConfig::to_json_text() const {
    json j;
    json sp;
    sp["tx_position_um"] = vec3_to_json(spatial.tx_position, kUm);
    json rxp = json::array();
    for (const Vec3& p : spatial.rx_positions) rxp.push_back(vec3_to_json(p, kUm));
    sp["rx_positions_um"] = rxp;
    sp["fc_position_um"] = vec3_to_json(spatial.fc_position, kUm);
    json radii = json::array();
    for (double r : spatial.rx_radii) radii.push_back(r / kUm);
    sp["rx_radii_um"] = radii;
    sp["fc_radius_um"] = spatial.fc_radius / kUm;
    j["spatial"] = sp;

    json tm;
    tm["t_trans_ms"] = timing.t_trans / kMs;
    tm["t_report_ms"] = timing.t_report / kMs;
    tm["T_ms"] = timing.T / kMs;
    tm["dt_rx_ms"] = timing.dt_rx / kMs;
    tm["dt_fc_ms"] = timing.dt_fc / kMs;
    tm["m_rx"] = timing.m_rx;
    tm["m_fc"] = timing.m_fc;
    tm["L"] = timing.L;
    j["timing"] = tm;

    json rl;
    rl["s0"] = release.s0;
    if (!release.s_k.empty()) rl["s_k"] = release.s_k;
    if (!release.alpha_k.empty()) rl["alpha_k"] = release.alpha_k;
    rl["d_um2_per_ms"] = release.d0 / kUm2PerMs;
    if (!release.d_k.empty()) {
        json dk = json::array();
        for (double d : release.d_k) dk.push_back(d / kUm2PerMs);
        rl["d_k_um2_per_ms"] = dk;
    }
    rl["p1"] = release.p1;
    j["release"] = rl;

    json dt;
    dt["kind"] = to_string(detector.kind);
    dt["history_mode"] = to_string(detector.history_mode);
    if (!detector.rx_thresholds.empty()) dt["rx_thresholds"] = detector.rx_thresholds;
    if (detector.fc_constant_threshold) dt["fc_constant_threshold"] = *detector.fc_constant_threshold;
    dt["tie_decides_one"] = detector.tie_decides_one;
    dt["sa_path"] = detector.sa_path == SaPath::mean ? "mean" : "mixture";
    dt["sa_realization_budget"] = detector.sa_realization_budget;
    j["detector"] = dt;

    return j.dump();
}

std::uint64_t SystemConfig::config_hash() const {
    const std::string text = to_json_text();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Model make_model(const SystemConfig& config) {
    config.validate();
    Model m;
    m.spatial = config.spatial;
    m.timing = config.timing;
    m.release = config.release;
    const std::size_t K = config.spatial.K();
    m.tx_rx.reserve(K);
    m.rx_fc.reserve(K);
    for (std::size_t k = 0; k < K; ++k) {
        m.tx_rx.push_back(build_link_profile(config.spatial.rx_radii[k],
                                             config.spatial.tx_rx_distance(k), config.release.d0,
                                             config.timing, LinkPhase::tx_to_rx));
        const double dk = config.release.d_k.empty() ? config.release.d0 : config.release.d_k[k];
        m.rx_fc.push_back(build_link_profile(config.spatial.fc_radius,
                                             config.spatial.rx_fc_distance(k), dk, config.timing,
                                             LinkPhase::rx_to_fc));
    }
    return m;
}

}  // namespace molcom
