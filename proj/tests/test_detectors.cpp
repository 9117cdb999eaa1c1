#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "molcom/detectors.hpp"
#include "molcom/system_config.hpp"

#include <cmath>

using namespace molcom;

namespace {

// Reference-scale geometry: RX ring of radius 0.6 um around the FC at 2 um.
SystemConfig ring_config(std::size_t K) {
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
    cfg.timing = {1e-3, 0.3e-3, 1.3e-3, 100e-6, 30e-6, 5, 10, 20};
    cfg.release.s0 = 1e4;
    cfg.release.s_k.assign(K, std::llround(2000.0 / static_cast<double>(K)));
    cfg.release.d0 = 5e-9;
    cfg.release.p1 = 0.5;
    cfg.detector.kind = DetectorKind::SD_ML;
    cfg.detector.history_mode = HistoryMode::genie;
    cfg.detector.rx_thresholds.assign(K, 2);
    return cfg;
}

SdMixture two_point_mixture(double isi, double signal) {
    SdMixture mix;
    mix.isi_mean = isi;
    mix.component_signal = {0.0, signal};
    mix.weight_b0 = {1.0, 0.0};
    mix.weight_b1 = {0.0, 1.0};
    return mix;
}

}  // namespace

TEST_CASE("detector kind and history mode names round-trip") {
    for (DetectorKind k : {DetectorKind::MD_ML, DetectorKind::SD_ML, DetectorKind::SA_ML,
                           DetectorKind::MAJORITY, DetectorKind::SD_CONST, DetectorKind::SA_CONST})
        CHECK(detector_kind_from_string(to_string(k)) == k);
    CHECK(history_mode_from_string("local") == HistoryMode::local);
    CHECK(history_mode_from_string("genie") == HistoryMode::genie);
    CHECK_THROWS_AS(detector_kind_from_string("bogus"), std::invalid_argument);
    CHECK_THROWS_AS(history_mode_from_string(""), std::invalid_argument);
}

TEST_CASE("variant validation catches inconsistent setups") {
    DetectorVariant v;
    v.kind = DetectorKind::SD_ML;
    v.rx_thresholds = {2, 2};
    CHECK_NOTHROW(v.validate(2));
    CHECK_THROWS_AS(v.validate(3), std::invalid_argument);  // wrong threshold count
    v.rx_thresholds = {2, 0};
    CHECK_THROWS_AS(v.validate(2), std::invalid_argument);  // zero threshold
    v.rx_thresholds = {2, 2};
    v.fc_constant_threshold = 10;
    CHECK_THROWS_AS(v.validate(2), std::invalid_argument);  // constant threshold on an ML kind

    DetectorVariant c;
    c.kind = DetectorKind::SD_CONST;
    c.rx_thresholds = {2};
    CHECK_THROWS_AS(c.validate(1), std::invalid_argument);  // missing fc threshold
    c.fc_constant_threshold = 25;
    CHECK_NOTHROW(c.validate(1));

    DetectorVariant a;
    a.kind = DetectorKind::SA_ML;
    CHECK_NOTHROW(a.validate(2));
    a.rx_thresholds = {2, 2};
    CHECK_THROWS_AS(a.validate(2), std::invalid_argument);  // AF kinds have no RX thresholds
}

TEST_CASE("rx energy detector compares the sum against the threshold") {
    CHECK(rx_energy_decide(5, 5) == 1);
    CHECK(rx_energy_decide(4, 5) == 0);
    CHECK(rx_energy_decide(0, 1) == 0);
    CHECK(rx_energy_decide(7, 1) == 1);
}

TEST_CASE("single-RX mixture has the hand-computed means and weights") {
    const SystemConfig cfg = ring_config(1);
    const Model model = make_model(cfg);

    // no prefix: no ISI, and an RX that saw nothing never clears threshold 2
    SdMixture mix = build_sd_mixture(model, {}, {{}}, cfg.release.s_k, {2});
    CHECK(mix.isi_mean == 0.0);
    CHECK(mix.component_signal[0] == 0.0);
    CHECK(mix.component_signal[1] == doctest::Approx(34.965266342815213).epsilon(1e-12));
    CHECK(mix.weight_b0[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(mix.weight_b0[1] == doctest::Approx(0.0).epsilon(1e-12));
    // under a sent 1 the RX almost surely clears threshold 2
    const double mean1 = 1e4 * 9.6866512746069396262e-4;
    const double p1 = 1.0 - poisson_cdf_below(mean1, 2);
    CHECK(mix.weight_b1[1] == doctest::Approx(p1).epsilon(1e-13));

    // decided history [1]: ISI is the lag-1 tail of that release
    mix = build_sd_mixture(model, {1}, {{1}}, cfg.release.s_k, {2});
    CHECK(mix.isi_mean == doctest::Approx(0.75383239728433009).epsilon(1e-12));
}

TEST_CASE("mixture weights are probability tables for any context") {
    SeededStream stream(321, 0);
    for (int rep = 0; rep < 60; ++rep) {
        const std::size_t K = 1 + stream.next_u64() % 3;
        const SystemConfig cfg = ring_config(K);
        const Model model = make_model(cfg);
        const std::size_t plen = stream.next_u64() % 6;
        std::vector<std::uint8_t> prefix(plen);
        for (auto& b : prefix) b = stream.bernoulli(0.5) ? 1 : 0;
        std::vector<std::vector<std::uint8_t>> hist(K, std::vector<std::uint8_t>(plen));
        for (auto& h : hist)
            for (auto& b : h) b = stream.bernoulli(0.5) ? 1 : 0;
        std::vector<std::uint64_t> thr(K, 1 + stream.next_u64() % 5);
        const SdMixture mix = build_sd_mixture(model, prefix, hist, cfg.release.s_k, thr);
        double w0 = 0.0, w1 = 0.0;
        for (std::size_t h = 0; h < mix.weight_b0.size(); ++h) {
            CHECK(mix.weight_b0[h] >= 0.0);
            CHECK(mix.weight_b1[h] <= 1.0);
            w0 += mix.weight_b0[h];
            w1 += mix.weight_b1[h];
        }
        CHECK(w0 == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(w1 == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(mix.isi_mean >= 0.0);
    }
}

TEST_CASE("mixture shape mismatches throw") {
    const SystemConfig cfg = ring_config(2);
    const Model model = make_model(cfg);
    CHECK_THROWS_AS(build_sd_mixture(model, {1}, {{1}}, cfg.release.s_k, {2, 2}),
                    std::invalid_argument);  // one history for two RXs
    CHECK_THROWS_AS(build_sd_mixture(model, {1}, {{1}, {1, 0}}, cfg.release.s_k, {2, 2}),
                    std::invalid_argument);  // ragged history
    CHECK_THROWS_AS(build_sd_mixture(model, {1}, {{1}, {1}}, {2000.0}, {2, 2}),
                    std::invalid_argument);  // allocation length
}

TEST_CASE("mixture log-likelihood matches direct summation and normalizes") {
    const SystemConfig cfg = ring_config(1);
    const Model model = make_model(cfg);
    const SdMixture mix = build_sd_mixture(model, {1, 0}, {{1, 0}}, cfg.release.s_k, {2});
    for (std::uint64_t c : {0ULL, 1ULL, 5ULL, 20ULL, 40ULL}) {
        for (int b = 0; b < 2; ++b) {
            const auto& w = b ? mix.weight_b1 : mix.weight_b0;
            double direct = 0.0;
            for (std::size_t h = 0; h < w.size(); ++h)
                direct += w[h] * std::exp(poisson_log_pmf(mix.isi_mean + mix.component_signal[h], c));
            CHECK(std::exp(sd_log_likelihood(mix, c, b)) ==
                  doctest::Approx(direct).epsilon(1e-11));
        }
    }
    double total = 0.0;
    for (std::uint64_t c = 0; c < 200; ++c) total += std::exp(sd_log_likelihood(mix, c, 1));
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("adaptive threshold reproduces the two-hypothesis crossing") {
    // crossing = lambda_s / ln((lambda_i+lambda_s)/lambda_i), next integer up
    CHECK(adaptive_threshold(two_point_mixture(5.0, 10.0)) == 10);   // crossing 9.102
    CHECK(adaptive_threshold(two_point_mixture(20.0, 40.0)) == 37);  // crossing 36.41
    CHECK(adaptive_threshold(two_point_mixture(0.9, 3.7)) == 3);     // crossing 2.268

    // mixture weights cancel in the single-RX likelihood ratio
    SdMixture weighted = two_point_mixture(5.0, 10.0);
    weighted.weight_b0 = {0.8, 0.2};
    weighted.weight_b1 = {0.2, 0.8};
    CHECK(adaptive_threshold(weighted) == 10);
}

TEST_CASE("adaptive threshold equals exhaustive likelihood comparison") {
    SeededStream stream(77, 0);
    for (int rep = 0; rep < 40; ++rep) {
        const std::size_t K = 1 + stream.next_u64() % 3;
        const SystemConfig cfg = ring_config(K);
        const Model model = make_model(cfg);
        const std::size_t plen = 1 + stream.next_u64() % 5;
        std::vector<std::uint8_t> prefix(plen);
        for (auto& b : prefix) b = stream.bernoulli(0.5) ? 1 : 0;
        std::vector<std::vector<std::uint8_t>> hist(K, std::vector<std::uint8_t>(plen));
        bool any = false;
        for (auto& h : hist)
            for (auto& b : h) {
                b = stream.bernoulli(0.5) ? 1 : 0;
                any = any || b;
            }
        if (!any) hist[0][0] = 1;  // keep the ISI branch active
        const SdMixture mix =
            build_sd_mixture(model, prefix, hist, cfg.release.s_k, cfg.detector.rx_thresholds);
        REQUIRE(mix.isi_mean > 0.0);
        const std::uint64_t xi = adaptive_threshold(mix, true);
        double max_mean = mix.isi_mean;
        for (double s : mix.component_signal) max_mean = std::max(max_mean, mix.isi_mean + s);
        const auto upper =
            static_cast<std::uint64_t>(std::ceil(max_mean + 12.0 * std::sqrt(max_mean))) + 1;
        for (std::uint64_t s = 0; s <= upper; ++s) {
            const bool argmax = sd_log_likelihood(mix, s, 1) >= sd_log_likelihood(mix, s, 0);
            CHECK(argmax == (s >= xi));
        }
    }
}

TEST_CASE("pooled DF detector thresholds correctly around the crossing") {
    const SystemConfig cfg = ring_config(2);
    const Model model = make_model(cfg);
    LikelihoodContext ctx;
    ctx.fc_tx_history = {1, 1};
    ctx.fc_rx_histories = {{1, 0}, {1, 1}};
    ctx.j = 3;
    const SdMixture mix = build_sd_mixture(model, ctx.fc_tx_history, ctx.fc_rx_histories,
                                           cfg.release.s_k, cfg.detector.rx_thresholds);
    const std::uint64_t xi = adaptive_threshold(mix, true);
    REQUIRE(xi >= 1);
    CHECK(sd_ml_decide(ctx, xi - 1, model, cfg.detector).bit == 0);
    CHECK(sd_ml_decide(ctx, xi, model, cfg.detector).bit == 1);
}

TEST_CASE("without ISI the pooled detector fires on any arrival") {
    const SystemConfig cfg = ring_config(1);
    const Model model = make_model(cfg);
    LikelihoodContext ctx;
    ctx.fc_rx_histories = {{}};
    CHECK(sd_ml_decide(ctx, 0, model, cfg.detector).bit == 0);
    CHECK(sd_ml_decide(ctx, 1, model, cfg.detector).bit == 1);

    // for one RX this convention is exactly the likelihood argmax
    const SdMixture mix = build_sd_mixture(model, {}, {{}}, cfg.release.s_k, {2});
    for (std::uint64_t s = 0; s <= 60; ++s) {
        const bool argmax = sd_log_likelihood(mix, s, 1) >= sd_log_likelihood(mix, s, 0);
        CHECK(argmax == (s >= 1));
    }
}

TEST_CASE("single-RX multi-species and pooled detectors agree") {
    const SystemConfig cfg = ring_config(1);
    const Model model = make_model(cfg);
    DetectorVariant md = cfg.detector;
    md.kind = DetectorKind::MD_ML;
    LikelihoodContext ctx;
    ctx.fc_tx_history = {1, 0, 1};
    ctx.fc_rx_histories = {{1, 0, 1}};
    ctx.j = 4;
    for (std::uint64_t s = 0; s <= 60; ++s) {
        const Decision via_md = md_ml_decide(ctx, {s}, model, md);
        const Decision via_sd = sd_ml_decide(ctx, s, model, cfg.detector);
        CHECK(via_md.bit == via_sd.bit);
    }
}

TEST_CASE("RX-pattern estimates break exact ties toward fewer and earlier zeros") {
    const SystemConfig cfg = ring_config(2);  // symmetric pair: (0,1) and (1,0) tie exactly
    const Model model = make_model(cfg);
    LikelihoodContext ctx;
    ctx.fc_tx_history = {1};
    ctx.fc_rx_histories = {{1}, {1}};
    ctx.j = 2;
    const SdMixture mix = build_sd_mixture(model, ctx.fc_tx_history, ctx.fc_rx_histories,
                                           cfg.release.s_k, cfg.detector.rx_thresholds);
    // pick a count where a single-RX pattern wins the likelihood
    const auto count =
        static_cast<std::uint64_t>(std::llround(mix.isi_mean + mix.component_signal[1]));
    const Decision d = sd_ml_decide(ctx, count, model, cfg.detector);
    if (d.rx_estimates[0] + d.rx_estimates[1] == 1) {
        CHECK(d.rx_estimates[0] == 0);  // lexicographically smallest of the tied pair
        CHECK(d.rx_estimates[1] == 1);
    }
}

TEST_CASE("amplify-and-forward mean path thresholds the expected observation") {
    const SystemConfig cfg = [] {
        SystemConfig c = ring_config(1);
        c.detector.kind = DetectorKind::SA_ML;
        c.detector.rx_thresholds.clear();
        c.release.s_k.clear();
        c.release.alpha_k = {148.67761799357852};
        return c;
    }();
    const Model model = make_model(cfg);

    LikelihoodContext empty;
    CHECK(sa_ml_decide(empty, 0, model, cfg.detector, 1) == 0);
    CHECK(sa_ml_decide(empty, 1, model, cfg.detector, 1) == 1);

    LikelihoodContext ctx;
    ctx.fc_tx_history = {1, 1};
    ctx.j = 3;
    const MeanSplit ms = sa_fc_isi_and_signal(model.rx_fc, ctx.fc_tx_history,
                                              model.release.alpha_k, model.release.s0, model.tx_rx);
    REQUIRE(ms.isi_mean > 0.0);
    const std::uint64_t xi = adaptive_threshold(two_point_mixture(ms.isi_mean, ms.signal_mean));
    CHECK(sa_ml_decide(ctx, xi - 1, model, cfg.detector, 1) == 0);
    CHECK(sa_ml_decide(ctx, xi, model, cfg.detector, 1) == 1);
}

TEST_CASE("amplify-and-forward mixture path is deterministic and sane") {
    SystemConfig cfg = ring_config(1);
    cfg.detector.kind = DetectorKind::SA_ML;
    cfg.detector.rx_thresholds.clear();
    cfg.detector.sa_path = SaPath::mixture;
    cfg.release.s_k.clear();
    cfg.release.alpha_k = {148.67761799357852};
    const Model model = make_model(cfg);

    LikelihoodContext ctx;
    ctx.fc_tx_history = {1, 0, 1};
    ctx.j = 4;
    SeededStream a(5, 0), b(5, 0);
    const std::uint8_t d1 = sa_ml_decide(ctx, 30, model, cfg.detector, 400, &a);
    const std::uint8_t d2 = sa_ml_decide(ctx, 30, model, cfg.detector, 400, &b);
    CHECK(d1 == d2);

    SeededStream c(6, 0);
    CHECK(sa_ml_decide(ctx, 0, model, cfg.detector, 400, &c) == 0);    // nothing arrived
    CHECK(sa_ml_decide(ctx, 400, model, cfg.detector, 400, &c) == 1);  // overwhelming count
    CHECK_THROWS_AS(sa_ml_decide(ctx, 30, model, cfg.detector, 400, nullptr),
                    std::invalid_argument);
    CHECK_THROWS_AS(sa_ml_decide(ctx, 30, model, cfg.detector, 0, &c), std::invalid_argument);
}

TEST_CASE("constant and majority rules") {
    DetectorVariant sd_const;
    sd_const.kind = DetectorKind::SD_CONST;
    sd_const.rx_thresholds = {2};
    sd_const.fc_constant_threshold = 30;
    CHECK(constant_or_majority_decide(sd_const, {}, 29) == 0);
    CHECK(constant_or_majority_decide(sd_const, {}, 30) == 1);

    DetectorVariant maj;
    maj.kind = DetectorKind::MAJORITY;
    maj.rx_thresholds = {2, 2, 2};
    maj.fc_constant_threshold = 3;
    CHECK(constant_or_majority_decide(maj, {5, 0, 0}, 0) == 0);  // one vote of three
    CHECK(constant_or_majority_decide(maj, {5, 4, 0}, 0) == 1);  // two votes carry
    CHECK(constant_or_majority_decide(maj, {0, 0, 0}, 0) == 0);

    DetectorVariant missing;
    missing.kind = DetectorKind::SD_CONST;
    CHECK_THROWS_AS(constant_or_majority_decide(missing, {}, 10), std::invalid_argument);
}

TEST_CASE("history update tracks truth in genie mode and decisions in local mode") {
    const SystemConfig cfg = ring_config(2);
    SymbolFrame frame;
    frame.fc_decision = 0;
    frame.fc_rx_estimates = {0, 1};

    DetectorVariant genie = cfg.detector;
    LikelihoodContext ctx;
    ctx.fc_rx_histories.resize(2);
    update_local_history(ctx, frame, genie, 1, {1, 1});
    CHECK(ctx.fc_tx_history == std::vector<std::uint8_t>{1});
    CHECK(ctx.fc_rx_histories[0] == std::vector<std::uint8_t>{1});
    CHECK(ctx.j == 2);

    DetectorVariant local = cfg.detector;
    local.history_mode = HistoryMode::local;
    LikelihoodContext lctx;
    lctx.fc_rx_histories.resize(2);
    update_local_history(lctx, frame, local, 1, {1, 1});
    CHECK(lctx.fc_tx_history == std::vector<std::uint8_t>{0});  // its own (wrong) decision
    CHECK(lctx.fc_rx_histories[1] == std::vector<std::uint8_t>{1});

    DetectorVariant af = cfg.detector;
    af.kind = DetectorKind::SA_ML;
    af.rx_thresholds.clear();
    LikelihoodContext actx;  // AF tracks only TX symbols
    update_local_history(actx, frame, af, 1, {});
    CHECK(actx.fc_tx_history.size() == 1);
    CHECK(actx.fc_rx_histories.empty());
}

TEST_CASE("detector dispatch matches the per-kind entry points") {
    const SystemConfig cfg = ring_config(2);
    const Model model = make_model(cfg);
    LikelihoodContext ctx;
    ctx.fc_tx_history = {1};
    ctx.fc_rx_histories = {{1}, {0}};
    ctx.j = 2;
    SymbolFrame frame;
    frame.fc_sum = 25;
    const Decision direct = sd_ml_decide(ctx, 25, model, cfg.detector);
    const Decision routed = fc_decide(ctx, frame, model, cfg.detector);
    CHECK(direct.bit == routed.bit);
    CHECK(direct.rx_estimates == routed.rx_estimates);
}
