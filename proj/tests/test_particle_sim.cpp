#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "molcom/particle_sim.hpp"
#include "molcom/system_config.hpp"

#include <cmath>
#include <cstdlib>

using namespace molcom;

namespace {

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

// trimmed-down variant for the slow particle runs
SystemConfig small_config() {
    SystemConfig cfg = ring_config(1);
    cfg.timing.L = 5;
    cfg.release.s0 = 4000;
    cfg.release.s_k = {1500};
    return cfg;
}

}  // namespace

TEST_CASE("sequence runner validates its inputs") {
    const SystemConfig cfg = small_config();
    const Model model = make_model(cfg);
    SimOptions opts;
    opts.backend = ChannelBackend::model;
    SeededStream s(1, 0);
    CHECK_THROWS_AS(run_sequence(model, cfg.detector, {}, s, opts), std::invalid_argument);
    CHECK_THROWS_AS(run_sequence(model, cfg.detector, {1, 2, 0}, s, opts), std::invalid_argument);

    SystemConfig broken = cfg;
    broken.release.s_k.clear();
    CHECK_THROWS_AS(run_sequence(make_model(broken), cfg.detector, {1, 0}, s, opts),
                    std::invalid_argument);

    DetectorVariant af = cfg.detector;
    af.kind = DetectorKind::SA_ML;
    af.rx_thresholds.clear();
    CHECK_THROWS_AS(run_sequence(model, af, {1, 0}, s, opts), std::invalid_argument);  // no alpha
}

TEST_CASE("frames carry consistent bookkeeping (decode-and-forward)") {
    const SystemConfig cfg = small_config();
    const Model model = make_model(cfg);
    SimOptions opts;
    const std::vector<std::uint8_t> bits = {1, 0, 1, 1, 0};
    SeededStream s1(3, 0), s2(3, 0);
    const SequenceRecord a = run_sequence(model, cfg.detector, bits, s1, opts);
    const SequenceRecord b = run_sequence(model, cfg.detector, bits, s2, opts);
    REQUIRE(a.frames.size() == bits.size());
    std::uint32_t mismatches = 0;
    for (std::size_t j = 0; j < bits.size(); ++j) {
        const SymbolFrame& f = a.frames[j];
        CHECK(f.j == j + 1);
        CHECK(f.tx_symbol == bits[j]);
        REQUIRE(f.rx_sums.size() == 1);
        REQUIRE(f.rx_decisions.size() == 1);
        CHECK((f.rx_decisions[0] == 0 || f.rx_decisions[0] == 1));
        CHECK(f.rx_decisions[0] == (f.rx_sums[0] >= 2 ? 1 : 0));
        // a decode-and-forward RX releases its fixed budget or nothing
        CHECK(f.rx_releases[0] == (f.rx_decisions[0] ? 1500u : 0u));
        CHECK((f.fc_decision == 0 || f.fc_decision == 1));
        if (f.fc_decision != bits[j]) ++mismatches;
        // same seed, same physics
        CHECK(f.rx_sums[0] == b.frames[j].rx_sums[0]);
        CHECK(f.fc_sum == b.frames[j].fc_sum);
        CHECK(f.fc_decision == b.frames[j].fc_decision);
    }
    CHECK(a.fc_errors == mismatches);
    CHECK(a.rx_errors.size() == 1);
}

TEST_CASE("amplify-and-forward releases scale with the observed sum") {
    SystemConfig cfg = small_config();
    cfg.detector.kind = DetectorKind::SA_ML;
    cfg.detector.rx_thresholds.clear();
    cfg.release.s_k.clear();
    cfg.release.alpha_k = {40.0};
    const Model model = make_model(cfg);
    SimOptions opts;
    SeededStream s(5, 0);
    const SequenceRecord rec = run_sequence(model, cfg.detector, {1, 1, 0, 1, 0}, s, opts);
    for (const SymbolFrame& f : rec.frames) {
        const auto expect = static_cast<std::uint64_t>(
            std::llround(40.0 * static_cast<double>(f.rx_sums[0])));
        CHECK(f.rx_releases[0] == expect);
    }
    CHECK(rec.rx_errors.empty());  // AF relays make no decisions
}

TEST_CASE("recorded decisions replay exactly through the detector") {
    const SystemConfig cfg = ring_config(2);
    const Model model = make_model(cfg);
    SimOptions opts;
    opts.backend = ChannelBackend::model;
    SeededStream s(17, 0);
    std::vector<std::uint8_t> bits;
    SeededStream bitsrc(18, 0);
    for (std::size_t j = 0; j < cfg.timing.L; ++j) bits.push_back(bitsrc.bernoulli(0.5) ? 1 : 0);
    const SequenceRecord rec = run_sequence(model, cfg.detector, bits, s, opts);

    LikelihoodContext ctx;
    ctx.fc_rx_histories.resize(2);
    for (std::size_t j = 0; j < bits.size(); ++j) {
        const SymbolFrame& f = rec.frames[j];
        const Decision redo = sd_ml_decide(ctx, f.fc_sum, model, cfg.detector);
        CHECK(redo.bit == f.fc_decision);
        update_local_history(ctx, f, cfg.detector, bits[j], f.rx_decisions);
    }
}

TEST_CASE("error estimate does not depend on the worker count") {
    const SystemConfig cfg = ring_config(1);
    const Model model = make_model(cfg);
    SimOptions one;
    one.backend = ChannelBackend::model;
    one.realizations = 30;
    one.seed = 99;
    one.workers = 1;
    SimOptions three = one;
    three.workers = 3;
    const ErrorReport a = estimate_error_rate(model, cfg.detector, one);
    const ErrorReport b = estimate_error_rate(model, cfg.detector, three);
    CHECK(a.q_bar == b.q_bar);
    CHECK(a.std_err == b.std_err);
    CHECK(a.per_interval == b.per_interval);
    CHECK(a.realizations == 30);
    CHECK(a.source == "analytic");  // model backend samples the analytical law
}

TEST_CASE("knowing the true history can only help (up to noise)") {
    const SystemConfig cfg = ring_config(1);
    const Model model = make_model(cfg);
    DetectorVariant local = cfg.detector;
    local.history_mode = HistoryMode::local;
    SimOptions opts;
    opts.backend = ChannelBackend::model;
    opts.realizations = 200;
    opts.seed = 44;
    const ErrorReport genie = estimate_error_rate(model, cfg.detector, opts);
    const ErrorReport loc = estimate_error_rate(model, local, opts);
    CHECK(genie.q_bar <= loc.q_bar + 3.0 * (genie.std_err + loc.std_err));
}

TEST_CASE("model backend agrees with the averaged analytical error") {
    const SystemConfig cfg = ring_config(1);
    const Model model = make_model(cfg);
    SimOptions opts;
    opts.backend = ChannelBackend::model;
    opts.realizations = 300;
    opts.seed = 7;
    const ErrorReport mc = estimate_error_rate(model, cfg.detector, opts);
    SeededStream s(8, 0);
    const ErrorReport an = averaged_error(cfg.detector, model, 150, s, 200);
    CHECK(std::abs(mc.q_bar - an.q_bar) <= 3.0 * (mc.std_err + an.std_err) + 1e-12);
}

TEST_CASE("particle and model backends tell the same story") {
    const SystemConfig cfg = small_config();
    const Model model = make_model(cfg);
    SimOptions particle;
    particle.realizations = 40;
    particle.seed = 21;
    SimOptions modeled = particle;
    modeled.backend = ChannelBackend::model;
    modeled.realizations = 400;
    const ErrorReport p = estimate_error_rate(model, cfg.detector, particle);
    const ErrorReport m = estimate_error_rate(model, cfg.detector, modeled);
    CHECK(p.source == "particle_sim");
    CHECK(std::abs(p.q_bar - m.q_bar) <= 3.0 * (p.std_err + m.std_err) + 1e-12);
}

TEST_CASE("subdividing the Brownian strides does not move the answer") {
    const SystemConfig cfg = small_config();
    const Model model = make_model(cfg);
    SimOptions coarse;
    coarse.realizations = 16;
    coarse.seed = 33;
    SimOptions fine = coarse;
    fine.max_stride = 10e-6;
    const ErrorReport a = estimate_error_rate(model, cfg.detector, coarse);
    const ErrorReport b = estimate_error_rate(model, cfg.detector, fine);
    CHECK(std::abs(a.q_bar - b.q_bar) <= 3.0 * (a.std_err + b.std_err) + 1e-12);
}

TEST_CASE("culling far particles leaves the counts essentially unchanged") {
    const SystemConfig cfg = small_config();
    const Model model = make_model(cfg);
    SimOptions plain;
    plain.realizations = 12;
    plain.seed = 55;
    SimOptions culled = plain;
    culled.cull_far_particles = true;
    culled.cull_radius = 30e-6;
    const ErrorReport a = estimate_error_rate(model, cfg.detector, plain);
    const ErrorReport b = estimate_error_rate(model, cfg.detector, culled);
    CHECK(std::abs(a.q_bar - b.q_bar) <= 3.0 * (a.std_err + b.std_err) + 0.05);
}

TEST_CASE("overwhelming molecule budgets drive the error to zero") {
    SystemConfig cfg = ring_config(1);
    cfg.timing.L = 10;
    cfg.release.s0 = 1e6;
    cfg.release.s_k = {50000};
    // At this budget the RX signal mean is ~968 while the worst-case summed ISI
    // is ~376; the threshold has to sit between them or the energy detector
    // fires on residue from earlier intervals.
    cfg.detector.rx_thresholds = {650};
    const Model model = make_model(cfg);
    SimOptions opts;
    opts.backend = ChannelBackend::model;
    opts.realizations = 10;
    opts.seed = 61;
    const ErrorReport rep = estimate_error_rate(model, cfg.detector, opts);
    CHECK(rep.q_bar == 0.0);
}

TEST_CASE("endpoint walkers reproduce the closed-form hitting probability") {
    SeededStream s(101, 0);
    const double p = hitting_probability(0.2e-6, 2e-6, 5e-9, 0.5e-3);
    CHECK(p == doctest::Approx(1.2734201627958781e-4).epsilon(1e-12));
    const Estimate one = hitting_probability_mc(0.2e-6, 2e-6, 5e-9, 0.5e-3, 2000000, s);
    CHECK(std::abs(one.value - p) <= 3.0 * one.std_err);
    // the endpoint law does not depend on how many strides build the flight
    const Estimate many = hitting_probability_mc(0.2e-6, 2e-6, 5e-9, 0.5e-3, 1000000, s, 4);
    CHECK(std::abs(many.value - p) <= 3.0 * many.std_err);
}

TEST_CASE("mean squared displacement grows like 6 D t") {
    SeededStream s(103, 0);
    const double D = 5e-9, t = 0.4e-3;
    const Estimate est = msd_probe(D, t, 100000, s);
    CHECK(std::abs(est.value - 6.0 * D * t) <= 3.0 * est.std_err);
    const Estimate strided = msd_probe(D, t, 100000, s, 8);
    CHECK(std::abs(strided.value - 6.0 * D * t) <= 3.0 * strided.std_err);
}
