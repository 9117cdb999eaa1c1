#include "molcom/channel.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace molcom {

void SpatialConfig::validate() const {
    if (rx_positions.empty()) throw std::invalid_argument("spatial: need at least one RX");
    if (rx_radii.size() != rx_positions.size())
        throw std::invalid_argument("spatial: rx_radii / rx_positions length mismatch");
    if (fc_radius <= 0.0) throw std::invalid_argument("spatial: fc_radius must be > 0");
    for (std::size_t k = 0; k < K(); ++k) {
        if (rx_radii[k] <= 0.0) throw std::invalid_argument("spatial: rx radius must be > 0");
        if (tx_rx_distance(k) <= 0.0) throw std::invalid_argument("spatial: TX coincides with an RX");
        if (rx_fc_distance(k) <= 0.0) throw std::invalid_argument("spatial: FC coincides with an RX");
    }
}

void TimingConfig::validate() const {
    if (t_trans <= 0 || t_report <= 0 || dt_rx <= 0 || dt_fc <= 0 || L == 0)
        throw std::invalid_argument("timing: durations must be positive and L >= 1");
    if (std::abs(T - (t_trans + t_report)) > 1e-12 * T)
        throw std::invalid_argument("timing: T != t_trans + t_report");
    if (m_rx * dt_rx > t_trans * (1 + 1e-12))
        throw std::invalid_argument("timing: RX samples spill out of the transmission phase");
    if (m_fc * dt_fc > t_report * (1 + 1e-12))
        throw std::invalid_argument("timing: FC samples spill out of the report phase");
}

void ReleaseConfig::validate(std::size_t K) const {
    if (s0 < 0) throw std::invalid_argument("release: s0 must be >= 0");
    if (d0 <= 0) throw std::invalid_argument("release: d0 must be > 0");
    if (p1 < 0 || p1 > 1) throw std::invalid_argument("release: p1 outside [0,1]");
    if (!s_k.empty() && s_k.size() != K) throw std::invalid_argument("release: s_k length != K");
    if (!alpha_k.empty() && alpha_k.size() != K) throw std::invalid_argument("release: alpha_k length != K");
    if (!d_k.empty() && d_k.size() != K) throw std::invalid_argument("release: d_k length != K");
    for (double s : s_k)
        if (s < 0) throw std::invalid_argument("release: s_k entries must be >= 0");
    for (double a : alpha_k)
        if (a < 0) throw std::invalid_argument("release: alpha_k entries must be >= 0");
    for (double d : d_k)
        if (d <= 0) throw std::invalid_argument("release: d_k entries must be > 0");
}

double hitting_probability(double r_obs, double d, double diff_coef, double t) {
    auto reject = [](const char* name) {
        throw std::domain_error(std::string("hitting_probability: ") + name + " must be > 0");
    };
    if (!(r_obs > 0.0)) reject("r_obs");
    if (!(d > 0.0)) reject("d");
    if (!(diff_coef > 0.0)) reject("diff_coef");
    if (!(t > 0.0)) reject("t");

    const double root_dt = std::sqrt(diff_coef * t);
    const double tau1 = (r_obs + d) / (2.0 * root_dt);
    const double tau2 = (r_obs - d) / (2.0 * root_dt);
    const double inv_sqrt_pi = 0.56418958354775628695;  // 1/sqrt(pi)
    double p = 0.5 * (boost::math::erf(tau1) + boost::math::erf(tau2)) +
               root_dt / d * inv_sqrt_pi * (std::exp(-tau1 * tau1) - std::exp(-tau2 * tau2));
    // The exact expression lies in [0,1]; rounding of the near-cancelling terms
    // may leave a harmless e-17-scale excursion.
    return std::clamp(p, 0.0, 1.0);
}

LinkProfile build_link_profile(double r_obs, double d, double diff_coef,
                               const TimingConfig& timing, LinkPhase phase) {
    const double dt = phase == LinkPhase::tx_to_rx ? timing.dt_rx : timing.dt_fc;
    const std::uint32_t m_count = phase == LinkPhase::tx_to_rx ? timing.m_rx : timing.m_fc;
    LinkProfile profile;
    profile.per_sample_probs.resize(timing.L);
    profile.summed_by_lag.resize(timing.L);
    for (std::uint32_t lag = 0; lag < timing.L; ++lag) {
        auto& row = profile.per_sample_probs[lag];
        row.resize(m_count);
        double sum = 0.0;
        for (std::uint32_t m = 0; m < m_count; ++m) {
            row[m] = hitting_probability(r_obs, d, diff_coef, lag * timing.T + (m + 1) * dt);
            sum += row[m];
        }
        profile.summed_by_lag[lag] = sum;
    }
    return profile;
}

double mean_rx_count(const LinkProfile& profile, const std::vector<std::uint8_t>& tx_symbols,
                     std::size_t j, double s0) {
    if (j < 1 || j > tx_symbols.size()) throw std::out_of_range("mean_rx_count: j outside 1..len");
    double mean = 0.0;
    for (std::size_t i = 1; i <= j; ++i) {
        if (tx_symbols[i - 1]) mean += s0 * profile.summed_by_lag[j - i];
    }
    return mean;
}

MeanSplit sd_fc_isi_and_signal(const std::vector<LinkProfile>& rx_fc_profiles,
                               const std::vector<std::vector<std::uint8_t>>& rx_history,
                               const std::vector<std::uint8_t>& rx_current,
                               const std::vector<double>& s_k) {
    const std::size_t K = rx_fc_profiles.size();
    if (rx_history.size() != K || rx_current.size() != K || s_k.size() != K)
        throw std::invalid_argument("sd_fc_isi_and_signal: K mismatch across arguments");
    MeanSplit out;
    const std::size_t hist_len = rx_history.empty() ? 0 : rx_history[0].size();
    for (std::size_t k = 0; k < K; ++k) {
        if (rx_history[k].size() != hist_len)
            throw std::invalid_argument("sd_fc_isi_and_signal: ragged histories");
        const auto& sums = rx_fc_profiles[k].summed_by_lag;
        const std::size_t j = hist_len + 1;  // current interval index, 1-based
        for (std::size_t i = 1; i < j; ++i) {
            if (rx_history[k][i - 1]) out.isi_mean += s_k[k] * sums[j - i];
        }
        if (rx_current[k]) out.signal_mean += s_k[k] * sums[0];
    }
    return out;
}

MeanSplit sa_fc_isi_and_signal(const std::vector<LinkProfile>& rx_fc_profiles,
                               const std::vector<std::uint8_t>& tx_history,
                               const std::vector<double>& alpha_k, double s0,
                               const std::vector<LinkProfile>& tx_rx_profiles) {
    const std::size_t K = rx_fc_profiles.size();
    if (alpha_k.size() != K || tx_rx_profiles.size() != K)
        throw std::invalid_argument("sa_fc_isi_and_signal: K mismatch across arguments");
    MeanSplit out;
    const std::size_t j = tx_history.size() + 1;
    for (std::size_t k = 0; k < K; ++k) {
        const auto& fc_sums = rx_fc_profiles[k].summed_by_lag;
        const auto& rx_sums = tx_rx_profiles[k].summed_by_lag;
        // tails of releases made in earlier intervals (expected release size =
        // alpha * expected RX observation at that interval)
        double tail = 0.0;
        for (std::size_t i = 1; i < j; ++i) {
            tail += mean_rx_count(tx_rx_profiles[k], tx_history, i, s0) * fc_sums[j - i];
        }
        // ISI molecules inside the current release: prior TX symbols still
        // arriving at the RX during this interval, amplified and re-observed
        double current_isi_obs = 0.0;
        for (std::size_t i = 1; i < j; ++i) {
            if (tx_history[i - 1]) current_isi_obs += s0 * rx_sums[j - i];
        }
        out.isi_mean += alpha_k[k] * (tail + current_isi_obs * fc_sums[0]);
        out.signal_mean += alpha_k[k] * s0 * rx_sums[0] * fc_sums[0];
    }
    return out;
}

NuSigma nu_sigma(const LinkProfile& rx_fc_profile, const std::vector<std::uint8_t>& rx_history_k) {
    NuSigma out;
    const auto& sums = rx_fc_profile.summed_by_lag;
    out.nu = sums.empty() ? 0.0 : sums[0];
    const std::size_t j = rx_history_k.size() + 1;
    for (std::size_t i = 1; i < j; ++i) {
        if (rx_history_k[i - 1]) out.sigma += sums[j - i];
    }
    return out;
}

}  // namespace molcom
