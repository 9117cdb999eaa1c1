#include "molcom/detectors.hpp"

#include "molcom/system_config.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace molcom {

namespace {

// log(exp(a) + exp(b)) without overflow; respects the kLogZero sentinel.
double lse2(double a, double b) {
    if (a < b) std::swap(a, b);
    if (a <= kLogZero) return kLogZero;
    if (b <= kLogZero) return a;
    return a + std::log1p(std::exp(b - a));
}

// Pr[RX k decides 1 | TX prefix + hypothesized current bit]: exact Poisson
// tail of the sample-sum mean against that RX's energy threshold.
double rx_one_prob(const Model& model, std::size_t k, const std::vector<std::uint8_t>& tx_prefix,
                   std::uint8_t bit, std::uint64_t threshold) {
    std::vector<std::uint8_t> seq = tx_prefix;
    seq.push_back(bit);
    const double mean = mean_rx_count(model.tx_rx[k], seq, seq.size(), model.release.s0);
    return 1.0 - poisson_cdf_below(mean, threshold);
}

// ISI mean at the FC contributed by RX k's decided-and-released history.
double fc_isi_from_history(const LinkProfile& rx_fc, const std::vector<std::uint8_t>& history,
                           double s_k) {
    double isi = 0.0;
    const std::size_t len = history.size();  // deciding interval j = len + 1
    for (std::size_t i = 0; i < len; ++i)
        if (history[i]) isi += s_k * rx_fc.summed_by_lag[len - i];
    return isi;
}

// Lexicographic comparison of RX-decision patterns as vectors (a_1 .. a_K):
// used to break exact likelihood ties deterministically.
bool pattern_lex_less(std::size_t a, std::size_t b, std::size_t K) {
    for (std::size_t k = 0; k < K; ++k) {
        const unsigned ba = (a >> k) & 1u, bb = (b >> k) & 1u;
        if (ba != bb) return ba < bb;
    }
    return false;
}

bool pattern_tie_better(std::size_t cand, std::size_t best, std::size_t K) {
    const int pc_c = __builtin_popcountll(cand), pc_b = __builtin_popcountll(best);
    if (pc_c != pc_b) return pc_c < pc_b;
    return pattern_lex_less(cand, best, K);
}

}  // namespace

const char* to_string(DetectorKind kind) {
    switch (kind) {
        case DetectorKind::MD_ML: return "MD_ML";
        case DetectorKind::SD_ML: return "SD_ML";
        case DetectorKind::SA_ML: return "SA_ML";
        case DetectorKind::MAJORITY: return "MAJORITY";
        case DetectorKind::SD_CONST: return "SD_CONST";
        case DetectorKind::SA_CONST: return "SA_CONST";
    }
    return "?";
}

const char* to_string(HistoryMode mode) {
    return mode == HistoryMode::local ? "local" : "genie";
}

DetectorKind detector_kind_from_string(const std::string& s) {
    if (s == "MD_ML") return DetectorKind::MD_ML;
    if (s == "SD_ML") return DetectorKind::SD_ML;
    if (s == "SA_ML") return DetectorKind::SA_ML;
    if (s == "MAJORITY") return DetectorKind::MAJORITY;
    if (s == "SD_CONST") return DetectorKind::SD_CONST;
    if (s == "SA_CONST") return DetectorKind::SA_CONST;
    throw std::invalid_argument("unknown detector kind '" + s + "'");
}

HistoryMode history_mode_from_string(const std::string& s) {
    if (s == "local") return HistoryMode::local;
    if (s == "genie") return HistoryMode::genie;
    throw std::invalid_argument("unknown history mode '" + s + "'");
}

void DetectorVariant::validate(std::size_t K) const {
    const bool df = !is_af();
    if (df) {
        if (rx_thresholds.size() != K)
            throw std::invalid_argument("detector: rx_thresholds must have length K");
        for (std::uint64_t t : rx_thresholds)
            if (t == 0) throw std::invalid_argument("detector: rx thresholds must be >= 1");
    } else if (!rx_thresholds.empty()) {
        throw std::invalid_argument("detector: amplify-and-forward kinds take no rx_thresholds");
    }
    const bool constant = kind == DetectorKind::MAJORITY || kind == DetectorKind::SD_CONST ||
                          kind == DetectorKind::SA_CONST;
    if (constant) {
        if (!fc_constant_threshold || *fc_constant_threshold == 0)
            throw std::invalid_argument("detector: constant kinds need fc_constant_threshold >= 1");
    } else if (fc_constant_threshold) {
        throw std::invalid_argument("detector: fc_constant_threshold is only for constant kinds");
    }
    if (kind == DetectorKind::SA_ML && sa_path == SaPath::mixture && sa_realization_budget == 0)
        throw std::invalid_argument("detector: sa_realization_budget must be >= 1");
}

std::uint8_t rx_energy_decide(std::uint64_t sum_count, std::uint64_t threshold) {
    return sum_count >= threshold ? 1 : 0;
}

SdMixture build_sd_mixture(const Model& model, const std::vector<std::uint8_t>& tx_prefix,
                           const std::vector<std::vector<std::uint8_t>>& rx_histories,
                           const std::vector<double>& s_k,
                           const std::vector<std::uint64_t>& rx_thresholds) {
    const std::size_t K = model.K();
    if (K == 0 || K > 16) throw std::invalid_argument("mixture: K must be in 1..16");
    if (rx_histories.size() != K) throw std::invalid_argument("mixture: rx_histories length != K");
    if (s_k.size() != K) throw std::invalid_argument("mixture: s_k length != K");
    if (rx_thresholds.size() != K) throw std::invalid_argument("mixture: rx_thresholds length != K");
    for (const auto& h : rx_histories)
        if (h.size() != tx_prefix.size())
            throw std::invalid_argument("mixture: history length != prefix length");

    SdMixture mix;
    std::vector<double> p0(K), p1(K), nu(K);
    for (std::size_t k = 0; k < K; ++k) {
        mix.isi_mean += fc_isi_from_history(model.rx_fc[k], rx_histories[k], s_k[k]);
        p0[k] = rx_one_prob(model, k, tx_prefix, 0, rx_thresholds[k]);
        p1[k] = rx_one_prob(model, k, tx_prefix, 1, rx_thresholds[k]);
        nu[k] = model.rx_fc[k].summed_by_lag[0];
    }

    const std::size_t H = std::size_t{1} << K;
    mix.component_signal.resize(H);
    mix.weight_b0.resize(H);
    mix.weight_b1.resize(H);
    for (std::size_t h = 0; h < H; ++h) {
        double sig = 0.0, w0 = 1.0, w1 = 1.0;
        for (std::size_t k = 0; k < K; ++k) {
            if ((h >> k) & 1u) {
                sig += s_k[k] * nu[k];
                w0 *= p0[k];
                w1 *= p1[k];
            } else {
                w0 *= 1.0 - p0[k];
                w1 *= 1.0 - p1[k];
            }
        }
        mix.component_signal[h] = sig;
        mix.weight_b0[h] = w0;
        mix.weight_b1[h] = w1;
    }
    return mix;
}

double sd_log_likelihood(const SdMixture& mix, std::uint64_t count, int hypothesis_bit) {
    const std::vector<double>& w = hypothesis_bit ? mix.weight_b1 : mix.weight_b0;
    double acc = kLogZero;
    for (std::size_t h = 0; h < w.size(); ++h) {
        if (w[h] <= 0.0) continue;
        acc = lse2(acc, std::log(w[h]) +
                            poisson_log_pmf(mix.isi_mean + mix.component_signal[h], count));
    }
    return acc;
}

std::uint64_t adaptive_threshold(const SdMixture& mix, bool ties_decide_one) {
    double max_mean = mix.isi_mean;
    for (double s : mix.component_signal) max_mean = std::max(max_mean, mix.isi_mean + s);
    const auto upper =
        static_cast<std::uint64_t>(std::ceil(max_mean + 12.0 * std::sqrt(max_mean))) + 1;
    auto crossed = [&](std::uint64_t s) {
        const double d = sd_log_likelihood(mix, s, 1) - sd_log_likelihood(mix, s, 0);
        return ties_decide_one ? d >= 0.0 : d > 0.0;
    };
    if (crossed(0)) return 0;
    if (!crossed(upper)) return upper + 1;  // "never decide 1" in the plausible range
    std::uint64_t lo = 0, hi = upper;       // invariant: !crossed(lo), crossed(hi)
    while (hi - lo > 1) {
        const std::uint64_t mid = lo + (hi - lo) / 2;
        (crossed(mid) ? hi : lo) = mid;
    }
    return hi;
}

Decision md_ml_decide(const LikelihoodContext& ctx, const std::vector<std::uint64_t>& fc_species_sums,
                      const Model& model, const DetectorVariant& variant) {
    const std::size_t K = model.K();
    if (fc_species_sums.size() != K)
        throw std::invalid_argument("md_ml: species sum count != K");
    if (ctx.fc_rx_histories.size() != K)
        throw std::invalid_argument("md_ml: rx history count != K");

    std::vector<double> isi(K), sig(K), p0(K), p1(K);
    double ll0 = 0.0, ll1 = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        isi[k] = fc_isi_from_history(model.rx_fc[k], ctx.fc_rx_histories[k], model.release.s_k[k]);
        sig[k] = model.release.s_k[k] * model.rx_fc[k].summed_by_lag[0];
        p0[k] = rx_one_prob(model, k, ctx.fc_tx_history, 0, variant.rx_thresholds[k]);
        p1[k] = rx_one_prob(model, k, ctx.fc_tx_history, 1, variant.rx_thresholds[k]);
        auto species_ll = [&](double p) {
            const double stay = p < 1.0 ? std::log(1.0 - p) + poisson_log_pmf(isi[k], fc_species_sums[k])
                                        : kLogZero;
            const double go = p > 0.0
                                  ? std::log(p) + poisson_log_pmf(isi[k] + sig[k], fc_species_sums[k])
                                  : kLogZero;
            return lse2(stay, go);
        };
        ll0 += species_ll(p0[k]);
        ll1 += species_ll(p1[k]);
    }
    Decision d;
    d.bit = (ll1 > ll0 || (ll1 == ll0 && variant.tie_decides_one)) ? 1 : 0;
    d.rx_estimates.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
        const double p = d.bit ? p1[k] : p0[k];
        const double score0 =
            p < 1.0 ? std::log(1.0 - p) + poisson_log_pmf(isi[k], fc_species_sums[k]) : kLogZero;
        const double score1 =
            p > 0.0 ? std::log(p) + poisson_log_pmf(isi[k] + sig[k], fc_species_sums[k]) : kLogZero;
        d.rx_estimates[k] = score1 >= score0 ? 1 : 0;  // tie favors 1
    }
    return d;
}

Decision sd_ml_decide(const LikelihoodContext& ctx, std::uint64_t fc_sum, const Model& model,
                      const DetectorVariant& variant) {
    const SdMixture mix = build_sd_mixture(model, ctx.fc_tx_history, ctx.fc_rx_histories,
                                           model.release.s_k, variant.rx_thresholds);
    Decision d;
    if (mix.isi_mean > 0.0) {
        const std::uint64_t xi = adaptive_threshold(mix, variant.tie_decides_one);
        d.bit = fc_sum >= xi ? 1 : 0;
    } else {
        d.bit = fc_sum > 0 ? 1 : 0;  // ISI-free intervals: any arrival indicates a send
    }

    const std::vector<double>& w = d.bit ? mix.weight_b1 : mix.weight_b0;
    const std::size_t K = model.K();
    std::size_t best = 0;
    double best_score = kLogZero;
    bool have = false;
    for (std::size_t h = 0; h < w.size(); ++h) {
        if (w[h] <= 0.0) continue;
        const double score =
            std::log(w[h]) + poisson_log_pmf(mix.isi_mean + mix.component_signal[h], fc_sum);
        if (!have || score > best_score ||
            (score == best_score && pattern_tie_better(h, best, K))) {
            best = h;
            best_score = score;
            have = true;
        }
    }
    d.rx_estimates.resize(K);
    for (std::size_t k = 0; k < K; ++k) d.rx_estimates[k] = (best >> k) & 1u;
    return d;
}

std::uint8_t sa_ml_decide(const LikelihoodContext& ctx, std::uint64_t fc_sum, const Model& model,
                          const DetectorVariant& variant, std::uint32_t realization_budget,
                          SeededStream* mixture_stream) {
    const std::vector<std::uint8_t>& prefix = ctx.fc_tx_history;
    const MeanSplit ms = sa_fc_isi_and_signal(model.rx_fc, prefix, model.release.alpha_k,
                                              model.release.s0, model.tx_rx);

    if (variant.sa_path == SaPath::mean) {
        if (ms.isi_mean > 0.0) {
            SdMixture two;  // degenerate: hypothesis b contributes exactly b * signal_mean
            two.isi_mean = ms.isi_mean;
            two.component_signal = {0.0, ms.signal_mean};
            two.weight_b0 = {1.0, 0.0};
            two.weight_b1 = {0.0, 1.0};
            const std::uint64_t xi = adaptive_threshold(two, variant.tie_decides_one);
            return fc_sum >= xi ? 1 : 0;
        }
        return fc_sum > 0 ? 1 : 0;
    }

    if (mixture_stream == nullptr)
        throw std::invalid_argument("sa_ml: mixture path needs a random stream");
    if (realization_budget == 0)
        throw std::invalid_argument("sa_ml: realization budget must be >= 1");

    // Monte Carlo the amplified-observation likelihood: sample the recent RX
    // observations (older ISI enters by its mean, where the Poisson spread no
    // longer matters), share the current-interval draws across hypotheses.
    const std::size_t K = model.K();
    const std::size_t j = prefix.size() + 1;
    const std::size_t sampled_lags = std::min<std::size_t>(prefix.size(), 10);
    double ll0 = kLogZero, ll1 = kLogZero;
    for (std::uint32_t r = 0; r < realization_budget; ++r) {
        double lam0 = 0.0, lam1 = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const double alpha = model.release.alpha_k[k];
            double prior = 0.0;
            for (std::size_t i = 1; i < j; ++i) {
                const double mean_obs =
                    mean_rx_count(model.tx_rx[k], prefix, i, model.release.s0);
                const double obs = (j - i) <= sampled_lags
                                       ? static_cast<double>(poisson_sample(*mixture_stream, mean_obs))
                                       : mean_obs;
                prior += alpha * obs * model.rx_fc[k].summed_by_lag[j - i];
            }
            // current-interval RX observation, split into ISI and signal parts
            std::vector<std::uint8_t> with_zero = prefix;
            with_zero.push_back(0);
            const double isi_obs_mean = mean_rx_count(model.tx_rx[k], with_zero, j, model.release.s0);
            const double sig_obs_mean = model.release.s0 * model.tx_rx[k].summed_by_lag[0];
            const double c_isi = static_cast<double>(poisson_sample(*mixture_stream, isi_obs_mean));
            const double c_sig = static_cast<double>(poisson_sample(*mixture_stream, sig_obs_mean));
            const double nu0 = model.rx_fc[k].summed_by_lag[0];
            lam0 += prior + alpha * c_isi * nu0;
            lam1 += prior + alpha * (c_isi + c_sig) * nu0;
        }
        ll0 = lse2(ll0, poisson_log_pmf(lam0, fc_sum));
        ll1 = lse2(ll1, poisson_log_pmf(lam1, fc_sum));
    }
    return (ll1 > ll0 || (ll1 == ll0 && variant.tie_decides_one)) ? 1 : 0;
}

std::uint8_t constant_or_majority_decide(const DetectorVariant& variant,
                                         const std::vector<std::uint64_t>& fc_species_sums,
                                         std::uint64_t fc_sum) {
    if (!variant.fc_constant_threshold)
        throw std::invalid_argument("constant rule: fc_constant_threshold not set");
    const std::uint64_t xi = *variant.fc_constant_threshold;
    if (variant.kind == DetectorKind::MAJORITY) {
        const std::size_t K = fc_species_sums.size();
        std::size_t votes = 0;
        for (std::uint64_t s : fc_species_sums) votes += (s >= xi) ? 1 : 0;
        return votes >= (K + 1) / 2 ? 1 : 0;
    }
    return fc_sum >= xi ? 1 : 0;
}

void update_local_history(LikelihoodContext& ctx, const SymbolFrame& frame,
                          const DetectorVariant& variant, std::uint8_t true_tx_bit,
                          const std::vector<std::uint8_t>& true_rx_decisions) {
    const bool genie = variant.history_mode == HistoryMode::genie;
    ctx.fc_tx_history.push_back(genie ? true_tx_bit : frame.fc_decision);
    if (!variant.is_af()) {
        const std::size_t K = ctx.fc_rx_histories.size();
        for (std::size_t k = 0; k < K; ++k) {
            std::uint8_t bit;
            if (genie) {
                bit = true_rx_decisions.at(k);
            } else if (frame.fc_rx_estimates.size() == K) {
                bit = frame.fc_rx_estimates[k];
            } else {
                bit = 0;  // constant kinds that estimate nothing
            }
            ctx.fc_rx_histories[k].push_back(bit);
        }
    }
    ctx.j += 1;
}

Decision fc_decide(const LikelihoodContext& ctx, const SymbolFrame& frame, const Model& model,
                   const DetectorVariant& variant, SeededStream* sa_stream) {
    Decision d;
    switch (variant.kind) {
        case DetectorKind::MD_ML:
            return md_ml_decide(ctx, frame.fc_species_sums, model, variant);
        case DetectorKind::SD_ML:
            return sd_ml_decide(ctx, frame.fc_sum, model, variant);
        case DetectorKind::SA_ML:
            d.bit = sa_ml_decide(ctx, frame.fc_sum, model, variant,
                                 variant.sa_realization_budget, sa_stream);
            return d;
        case DetectorKind::MAJORITY: {
            d.bit = constant_or_majority_decide(variant, frame.fc_species_sums, frame.fc_sum);
            d.rx_estimates.resize(frame.fc_species_sums.size());
            for (std::size_t k = 0; k < frame.fc_species_sums.size(); ++k)
                d.rx_estimates[k] =
                    frame.fc_species_sums[k] >= *variant.fc_constant_threshold ? 1 : 0;
            return d;
        }
        case DetectorKind::SD_CONST:
        case DetectorKind::SA_CONST:
            d.bit = constant_or_majority_decide(variant, frame.fc_species_sums, frame.fc_sum);
            return d;
    }
    throw std::logic_error("fc_decide: unhandled detector kind");
}

}  // namespace molcom
