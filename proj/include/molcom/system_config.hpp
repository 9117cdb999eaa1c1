#pragma once
// Whole-system configuration (geometry + timing + release + detector choice),
// JSON round-trip, and the precomputed Model handed to detectors/analytics.
//
// JSON files use micrometres and milliseconds (matching how the scenarios are
// usually quoted); everything is converted to SI on load. D = 5 um^2/ms is
// 5e-9 m^2/s.

#include "molcom/channel.hpp"
#include "molcom/detectors.hpp"

#include <cstdint>
#include <string>

namespace molcom {

struct SystemConfig {
    SpatialConfig spatial;
    TimingConfig timing;
    ReleaseConfig release;
    DetectorVariant detector;

    void validate() const;

    static SystemConfig from_json_text(const std::string& text);
    static SystemConfig from_json_file(const std::string& path);
    std::string to_json_text() const;  // canonical: sorted keys, fixed field set

    // FNV-1a over the canonical JSON; stable across runs, used to stamp
    // result files so mismatched configs are detectable.
    std::uint64_t config_hash() const;
};

// Precomputed link profiles for each TX->RX and RX->FC pair. Species released
// by RX k diffuses with release.d_k[k] everywhere it appears (detectors,
// analytics, particle simulation), so the three agree even if coefficients
// are made species-specific; the bundled scenarios keep them all equal.
struct Model {
    SpatialConfig spatial;
    TimingConfig timing;
    ReleaseConfig release;
    std::vector<LinkProfile> tx_rx;  // per RX, species 0
    std::vector<LinkProfile> rx_fc;  // per RX, that RX's released species

    std::size_t K() const { return spatial.rx_positions.size(); }
};

Model make_model(const SystemConfig& config);

}  // namespace molcom
