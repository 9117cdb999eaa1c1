#pragma once
// Deterministic diffusion-channel math: observation probabilities for passive
// spherical observers, per-link sample-probability tables, and the ISI/signal
// mean decompositions used by the detectors and the error analysis.
//
// Everything here is pure and immutable after construction; safe to share
// across threads.

#include "molcom/vec3.hpp"

#include <cstdint>
#include <vector>

namespace molcom {

struct SpatialConfig {
    Vec3 tx_position;                // m
    std::vector<Vec3> rx_positions;  // m, length K
    Vec3 fc_position;                // m
    std::vector<double> rx_radii;    // m, length K
    double fc_radius = 0.0;          // m

    std::size_t K() const { return rx_positions.size(); }
    double tx_rx_distance(std::size_t k) const { return distance(tx_position, rx_positions[k]); }
    double rx_fc_distance(std::size_t k) const { return distance(rx_positions[k], fc_position); }
    void validate() const;  // throws std::invalid_argument
};

struct TimingConfig {
    double t_trans = 0.0;  // s, transmission phase
    double t_report = 0.0; // s, report phase
    double T = 0.0;        // s, symbol interval = t_trans + t_report
    double dt_rx = 0.0;    // s, RX sampling period
    double dt_fc = 0.0;    // s, FC sampling period
    std::uint32_t m_rx = 0;
    std::uint32_t m_fc = 0;
    std::uint32_t L = 0;   // symbols per sequence
    void validate() const;
};

struct ReleaseConfig {
    double s0 = 0.0;               // molecules per TX "1"
    std::vector<double> s_k;       // per-RX release budgets (DF)
    std::vector<double> alpha_k;   // per-RX amplification factors (AF)
    double d0 = 0.0;               // m^2/s, TX species diffusion coefficient
    std::vector<double> d_k;       // m^2/s, per-RX species
    double p1 = 0.5;               // prior Pr[symbol = 1]
    void validate(std::size_t K) const;
};

// Per-link table of observation probabilities across symbol lags.
// per_sample_probs[lag][m] = P_ob(lag*T + (m+1)*dt) for m = 0..M-1;
// summed_by_lag[lag] = row sum. lag runs 0..L-1.
struct LinkProfile {
    std::vector<std::vector<double>> per_sample_probs;
    std::vector<double> summed_by_lag;
};

enum class LinkPhase { tx_to_rx, rx_to_fc };

// Probability that a molecule released at distance d from the center of a
// passive sphere of radius r_obs is inside it at time t (free 3-D diffusion,
// diffusion coefficient diff_coef). Throws std::domain_error unless all four
// arguments are strictly positive.
double hitting_probability(double r_obs, double d, double diff_coef, double t);

// Evaluate hitting_probability on the phase's sample grid for lags 0..L-1.
LinkProfile build_link_profile(double r_obs, double d, double diff_coef,
                               const TimingConfig& timing, LinkPhase phase);

// Mean observed count at an RX in interval j (1-based) given the TX bit
// sequence: sum_{i<=j} s0 * tx_symbols[i] * summed_by_lag[j-i].
double mean_rx_count(const LinkProfile& profile, const std::vector<std::uint8_t>& tx_symbols,
                     std::size_t j, double s0);

// ISI / signal mean split of the FC observation for the shared-species DF
// scheme: isi from decided-and-released prior RX symbols, signal from the
// hypothesized current RX decisions.
struct MeanSplit {
    double isi_mean = 0.0;
    double signal_mean = 0.0;
};

MeanSplit sd_fc_isi_and_signal(const std::vector<LinkProfile>& rx_fc_profiles,
                               const std::vector<std::vector<std::uint8_t>>& rx_history,
                               const std::vector<std::uint8_t>& rx_current,
                               const std::vector<double>& s_k);

// Same split for the amplify-and-forward scheme, with RX observations replaced
// by their expected values given the TX prefix. The ISI term has two parts:
// tails of prior amplified releases, and the amplified ISI content of the
// current release.
MeanSplit sa_fc_isi_and_signal(const std::vector<LinkProfile>& rx_fc_profiles,
                               const std::vector<std::uint8_t>& tx_history,
                               const std::vector<double>& alpha_k, double s0,
                               const std::vector<LinkProfile>& tx_rx_profiles);

// Allocation-sensitivity coefficients for one RX: nu = lag-0 sum of the
// RX->FC profile; sigma = sum over decided prior symbols of the lagged sums.
struct NuSigma {
    double nu = 0.0;
    double sigma = 0.0;
};

NuSigma nu_sigma(const LinkProfile& rx_fc_profile, const std::vector<std::uint8_t>& rx_history_k);

}  // namespace molcom
