#include "molcom/analytics.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace molcom {

namespace {

// Pr[RX k decides 1 at interval i | true TX bits], exact Poisson tail.
double decided_one_prob(const Model& model, std::size_t k, const std::vector<std::uint8_t>& tx_bits,
                        std::size_t i, std::uint64_t threshold) {
    const double mean = mean_rx_count(model.tx_rx[k], tx_bits, i, model.release.s0);
    return 1.0 - poisson_cdf_below(mean, threshold);
}

double sample_se(double sum, double sumsq, std::uint64_t n) {
    if (n < 2) return 0.0;
    const double mean = sum / static_cast<double>(n);
    const double var = std::max(0.0, sumsq - static_cast<double>(n) * mean * mean) /
                       static_cast<double>(n - 1);
    return std::sqrt(var / static_cast<double>(n));
}

}  // namespace

void ErrorQuery::validate(std::size_t K) const {
    if (p1 < 0.0 || p1 > 1.0) throw std::invalid_argument("query: p1 outside [0,1]");
    for (std::uint8_t b : tx_prefix)
        if (b > 1) throw std::invalid_argument("query: tx_prefix entries must be 0/1");
    switch (kind) {
        case DetectorKind::SD_ML:
            if (rx_thresholds.size() != K)
                throw std::invalid_argument("query: rx_thresholds must have length K");
            for (std::uint64_t t : rx_thresholds)
                if (t == 0) throw std::invalid_argument("query: rx thresholds must be >= 1");
            if (history_draws == 0)
                throw std::invalid_argument("query: history_draws must be >= 1");
            break;
        case DetectorKind::SA_ML:
        case DetectorKind::SA_CONST:
            if (!rx_thresholds.empty())
                throw std::invalid_argument("query: amplify-and-forward kinds take no rx_thresholds");
            if (kind == DetectorKind::SA_CONST &&
                (!fc_constant_threshold || *fc_constant_threshold == 0))
                throw std::invalid_argument("query: SA_CONST needs fc_constant_threshold >= 1");
            break;
        default:
            throw unsupported_variant_error(
                std::string("no analytical error path for detector kind ") + to_string(kind));
    }
}

LinkErrorProbs link_error_probs(const Model& model, const std::vector<std::uint8_t>& tx_prefix,
                                const std::vector<std::uint64_t>& rx_thresholds) {
    const std::size_t K = model.K();
    if (rx_thresholds.size() != K)
        throw std::invalid_argument("link_error_probs: rx_thresholds length != K");
    LinkErrorProbs errs;
    errs.miss.assign(K, std::vector<double>(tx_prefix.size(), 0.0));
    errs.false_alarm.assign(K, std::vector<double>(tx_prefix.size(), 0.0));
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t i = 1; i <= tx_prefix.size(); ++i) {
            const double p_one = decided_one_prob(model, k, tx_prefix, i, rx_thresholds[k]);
            if (tx_prefix[i - 1])
                errs.miss[k][i - 1] = 1.0 - p_one;
            else
                errs.false_alarm[k][i - 1] = p_one;
        }
    }
    return errs;
}

std::vector<std::vector<std::uint8_t>> coin_toss_rx_history(SeededStream& stream,
                                                            const std::vector<std::uint8_t>& tx_prefix,
                                                            const LinkErrorProbs& errs,
                                                            bool shared_across_rx) {
    const std::size_t K = errs.miss.size();
    std::vector<std::vector<std::uint8_t>> hist(K, std::vector<std::uint8_t>(tx_prefix.size(), 0));
    for (std::size_t i = 0; i < tx_prefix.size(); ++i) {
        double shared_u = 0.0;
        if (shared_across_rx) shared_u = stream.uniform01();
        for (std::size_t k = 0; k < K; ++k) {
            const double p_one =
                tx_prefix[i] ? 1.0 - errs.miss[k][i] : errs.false_alarm[k][i];
            const double u = shared_across_rx ? shared_u : stream.uniform01();
            hist[k][i] = u < p_one ? 1 : 0;
        }
    }
    return hist;
}

double mixture_error_kernel(const SdMixture& mix, double xi, double p1, LambdaForm form) {
    // Pr[count < xi | mean], in the requested form
    auto below = [&](double mean) {
        if (form == LambdaForm::discrete) {
            const double c = std::ceil(xi);
            if (c <= 0.0) return 0.0;
            return poisson_cdf_below(mean, static_cast<std::uint64_t>(c));
        }
        if (xi <= 0.0) return 0.0;
        if (mean <= 0.0) return 1.0;
        return boost::math::gamma_q(xi, mean);
    };
    double below_b1 = 0.0, below_b0 = 0.0;
    for (std::size_t h = 0; h < mix.component_signal.size(); ++h) {
        const double lam = mix.isi_mean + mix.component_signal[h];
        if (mix.weight_b1[h] > 0.0) below_b1 += mix.weight_b1[h] * below(lam);
        if (mix.weight_b0[h] > 0.0) below_b0 += mix.weight_b0[h] * below(lam);
    }
    return p1 * below_b1 + (1.0 - p1) * (1.0 - below_b0);
}

double sd_conditional_error(const SdMixture& mix, std::uint64_t xi, double p1) {
    return mixture_error_kernel(mix, static_cast<double>(xi), p1, LambdaForm::discrete);
}

QValue q_fc_sd(const ErrorQuery& query, const Model& model, SeededStream& stream) {
    query.validate(model.K());
    if (query.kind != DetectorKind::SD_ML)
        throw unsupported_variant_error("q_fc_sd handles the pooled-species DF ML detector only");
    if (model.release.s_k.size() != model.K())
        throw std::invalid_argument("q_fc_sd: model release needs s_k of length K");

    const LinkErrorProbs errs = link_error_probs(model, query.tx_prefix, query.rx_thresholds);
    double sum = 0.0, sumsq = 0.0;
    for (std::uint32_t r = 0; r < query.history_draws; ++r) {
        const auto hist = coin_toss_rx_history(stream, query.tx_prefix, errs, false);
        const SdMixture mix = build_sd_mixture(model, query.tx_prefix, hist, model.release.s_k,
                                               query.rx_thresholds);
        const std::uint64_t xi = mix.isi_mean > 0.0 ? adaptive_threshold(mix, true) : 1;
        const double v = sd_conditional_error(mix, xi, query.p1);
        sum += v;
        sumsq += v * v;
    }
    QValue q;
    q.value = sum / query.history_draws;
    q.std_err = sample_se(sum, sumsq, query.history_draws);
    return q;
}

QValue q_fc_sa(const ErrorQuery& query, const Model& model, SeededStream& stream) {
    query.validate(model.K());
    if (query.kind != DetectorKind::SA_ML && query.kind != DetectorKind::SA_CONST)
        throw unsupported_variant_error("q_fc_sa handles amplify-and-forward kinds only");
    if (model.release.alpha_k.size() != model.K())
        throw std::invalid_argument("q_fc_sa: model release needs alpha_k of length K");

    // Threshold of the operational mean-path detector (prefix-deterministic).
    const MeanSplit ms = sa_fc_isi_and_signal(model.rx_fc, query.tx_prefix, model.release.alpha_k,
                                              model.release.s0, model.tx_rx);
    SdMixture two;
    two.isi_mean = ms.isi_mean;
    two.component_signal = {0.0, ms.signal_mean};
    two.weight_b0 = {1.0, 0.0};
    two.weight_b1 = {0.0, 1.0};
    std::uint64_t xi;
    if (query.kind == DetectorKind::SA_CONST)
        xi = *query.fc_constant_threshold;
    else if (ms.isi_mean > 0.0)
        xi = adaptive_threshold(two, true);
    else
        xi = 1;

    // Error under the true law: average the conditional Poisson error over
    // drawn RX observations. Prefix-interval draws feed the FC's residual ISI
    // through their integer releases; the current-interval observation is
    // coupled across hypotheses by superposition (bit-1 adds an independent
    // signal-mean component on top of the bit-0 draw).
    const std::size_t K = model.K();
    const std::size_t j = query.j();
    std::vector<std::vector<double>> prefix_mean(K);   // [k][i-1], i = 1..j-1
    std::vector<double> current_isi_mean(K, 0.0), current_sig_mean(K, 0.0);
    std::vector<std::uint8_t> with_zero(query.tx_prefix);
    with_zero.push_back(0);
    for (std::size_t k = 0; k < K; ++k) {
        prefix_mean[k].resize(j - 1);
        for (std::size_t i = 1; i < j; ++i)
            prefix_mean[k][i - 1] = mean_rx_count(model.tx_rx[k], query.tx_prefix, i,
                                                  model.release.s0);
        current_isi_mean[k] = mean_rx_count(model.tx_rx[k], with_zero, j, model.release.s0);
        current_sig_mean[k] = model.release.s0 * model.tx_rx[k].summed_by_lag[0];
    }

    double sum = 0.0, sumsq = 0.0;
    for (std::uint32_t r = 0; r < query.history_draws; ++r) {
        double fc_isi = 0.0, fc_b0 = 0.0, fc_b1 = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const double alpha = model.release.alpha_k[k];
            const auto& lags = model.rx_fc[k].summed_by_lag;
            for (std::size_t i = 1; i < j; ++i) {
                const auto obs = poisson_sample(stream, prefix_mean[k][i - 1]);
                fc_isi += static_cast<double>(std::llround(alpha * static_cast<double>(obs))) *
                          lags[j - i];
            }
            const auto obs0 = poisson_sample(stream, current_isi_mean[k]);
            const auto obs1 = obs0 + poisson_sample(stream, current_sig_mean[k]);
            fc_b0 += static_cast<double>(std::llround(alpha * static_cast<double>(obs0))) * lags[0];
            fc_b1 += static_cast<double>(std::llround(alpha * static_cast<double>(obs1))) * lags[0];
        }
        SdMixture draw;
        draw.isi_mean = fc_isi;
        draw.component_signal = {fc_b0, fc_b1};
        draw.weight_b0 = {1.0, 0.0};
        draw.weight_b1 = {0.0, 1.0};
        const double v = sd_conditional_error(draw, xi, query.p1);
        sum += v;
        sumsq += v * v;
    }
    QValue q;
    q.value = sum / query.history_draws;
    q.std_err = sample_se(sum, sumsq, query.history_draws);
    return q;
}

double q_sharp(const std::vector<double>& allocation, double xi, const ErrorQuery& query,
               const Model& model, const std::vector<std::vector<std::uint8_t>>& rx_histories,
               LambdaForm form) {
    if (query.kind != DetectorKind::SD_ML)
        throw unsupported_variant_error("q_sharp is defined for the pooled-species DF detector");
    const SdMixture mix = build_sd_mixture(model, query.tx_prefix, rx_histories, allocation,
                                           query.rx_thresholds);
    return mixture_error_kernel(mix, xi, query.p1, form);
}

RxDecisionProbs rx_decision_probs(const Model& model, const std::vector<std::uint8_t>& tx_prefix,
                                  const std::vector<std::vector<std::uint8_t>>& rx_histories,
                                  const std::vector<std::uint64_t>& rx_thresholds) {
    const std::size_t K = model.K();
    std::vector<double> s_for_weights =
        model.release.s_k.size() == K ? model.release.s_k : std::vector<double>(K, 1.0);
    const SdMixture mix =
        build_sd_mixture(model, tx_prefix, rx_histories, s_for_weights, rx_thresholds);

    RxDecisionProbs probs;
    probs.given_tx0 = mix.weight_b0;
    probs.given_tx1 = mix.weight_b1;
    double marg0 = 0.0, marg1 = 0.0;  // first RX's probability of answering 1
    for (std::size_t h = 0; h < mix.weight_b0.size(); ++h) {
        if (h & 1u) {
            marg0 += mix.weight_b0[h];
            marg1 += mix.weight_b1[h];
        }
    }
    probs.alpha_sym = marg0;
    probs.beta_sym = 1.0 - marg1;
    probs.nu_k.resize(K);
    probs.sigma_k.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
        const NuSigma ns = nu_sigma(model.rx_fc[k], rx_histories[k]);
        probs.nu_k[k] = ns.nu;
        probs.sigma_k[k] = ns.sigma;
    }
    return probs;
}

double upsilon(double xi, double n_total, double nu, double sigma, double alpha, double beta,
               double p1) {
    return (alpha * (p1 - 1.0) + beta * p1) *
           (2.0 + n_total * (nu + 2.0 * sigma) - 2.0 * std::ceil(xi));
}

std::int64_t closed_form_threshold(double lambda_s, double lambda_i) {
    if (!(lambda_s > 0.0)) throw std::domain_error("closed_form_threshold: lambda_s must be > 0");
    if (!(lambda_i > 0.0)) throw std::domain_error("closed_form_threshold: lambda_i must be > 0");
    const double crossing = lambda_s / std::log((lambda_i + lambda_s) / lambda_i);
    return std::llround(crossing);
}

ErrorReport averaged_error(const DetectorVariant& variant, const Model& model,
                           std::uint32_t realizations, SeededStream& stream,
                           std::uint32_t inner_draws) {
    if (realizations == 0) throw std::invalid_argument("averaged_error: realizations must be >= 1");
    const bool sd = variant.kind == DetectorKind::SD_ML;
    const bool sa = variant.kind == DetectorKind::SA_ML || variant.kind == DetectorKind::SA_CONST;
    if (!sd && !sa)
        throw unsupported_variant_error(
            std::string("averaged_error: no analytical path for ") + to_string(variant.kind));
    if ((sd || variant.kind == DetectorKind::SA_ML) &&
        variant.history_mode != HistoryMode::genie)
        throw unsupported_variant_error(
            "averaged_error: the likelihood analysis assumes genie symbol history");
    if (variant.kind == DetectorKind::SA_ML && variant.sa_path != SaPath::mean)
        throw unsupported_variant_error(
            "averaged_error: only the mean-path amplify-and-forward detector has a closed form");

    const std::uint32_t L = model.timing.L;
    ErrorReport report;
    report.per_interval.assign(L, 0.0);
    report.per_interval_se.assign(L, 0.0);
    report.realizations = realizations;
    report.seed = stream.seed();
    report.source = "analytic";

    std::vector<double> interval_sum(L, 0.0), interval_sumsq(L, 0.0);
    double seq_sum = 0.0, seq_sumsq = 0.0;
    for (std::uint32_t r = 0; r < realizations; ++r) {
        SeededStream seq_stream = stream.fork(r);
        std::vector<std::uint8_t> bits(L);
        for (auto& b : bits) b = seq_stream.bernoulli(model.release.p1) ? 1 : 0;

        double seq_mean = 0.0;
        for (std::uint32_t j = 1; j <= L; ++j) {
            ErrorQuery query;
            query.kind = variant.kind;
            query.tx_prefix.assign(bits.begin(), bits.begin() + (j - 1));
            query.history_draws = inner_draws;
            query.p1 = model.release.p1;
            if (sd) query.rx_thresholds = variant.rx_thresholds;
            if (variant.kind == DetectorKind::SA_CONST)
                query.fc_constant_threshold = variant.fc_constant_threshold;
            const QValue q = sd ? q_fc_sd(query, model, seq_stream)
                                : q_fc_sa(query, model, seq_stream);
            seq_mean += q.value;
            interval_sum[j - 1] += q.value;
            interval_sumsq[j - 1] += q.value * q.value;
        }
        seq_mean /= L;
        seq_sum += seq_mean;
        seq_sumsq += seq_mean * seq_mean;
    }

    report.q_bar = seq_sum / realizations;
    report.std_err = sample_se(seq_sum, seq_sumsq, realizations);
    for (std::uint32_t j = 0; j < L; ++j) {
        report.per_interval[j] = interval_sum[j] / realizations;
        report.per_interval_se[j] = sample_se(interval_sum[j], interval_sumsq[j], realizations);
    }
    return report;
}

}  // namespace molcom
