#include "molcom/particle_sim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace molcom {

namespace {

// One molecular species: structure-of-arrays positions plus creation
// bookkeeping so every particle can be advanced with a single exact Gaussian
// stride per observation event regardless of when it was released.
struct Species {
    double diff = 0.0;  // m^2/s
    std::vector<double> x, y, z;
    double current_time = 0.0;               // applies to particles before batch_start[0]
    std::vector<std::size_t> batch_start;    // particles appended since the last advance
    std::vector<double> batch_birth;

    void add_batch(const Vec3& origin, std::uint64_t count, double t) {
        if (count == 0) return;
        batch_start.push_back(x.size());
        batch_birth.push_back(t);
        x.insert(x.end(), count, origin.x);
        y.insert(y.end(), count, origin.y);
        z.insert(z.end(), count, origin.z);
    }

    void advance_range(std::size_t lo, std::size_t hi, double dt, SeededStream& stream,
                       double max_stride) {
        if (hi <= lo || dt <= 0.0) return;
        std::uint64_t steps = 1;
        if (max_stride > 0.0 && dt > max_stride)
            steps = static_cast<std::uint64_t>(std::ceil(dt / max_stride - 1e-12));
        const double sigma = std::sqrt(2.0 * diff * (dt / static_cast<double>(steps)));
        for (std::uint64_t s = 0; s < steps; ++s) {
            for (std::size_t i = lo; i < hi; ++i) x[i] += sigma * stream.normal();
            for (std::size_t i = lo; i < hi; ++i) y[i] += sigma * stream.normal();
            for (std::size_t i = lo; i < hi; ++i) z[i] += sigma * stream.normal();
        }
    }

    void advance_to(double t, SeededStream& stream, double max_stride) {
        const std::size_t settled_end = batch_start.empty() ? x.size() : batch_start.front();
        advance_range(0, settled_end, t - current_time, stream, max_stride);
        for (std::size_t b = 0; b < batch_start.size(); ++b) {
            const std::size_t hi = b + 1 < batch_start.size() ? batch_start[b + 1] : x.size();
            advance_range(batch_start[b], hi, t - batch_birth[b], stream, max_stride);
        }
        batch_start.clear();
        batch_birth.clear();
        current_time = t;
    }

    std::uint64_t count_inside(const Vec3& c, double r) const {
        const double r2 = r * r;
        std::uint64_t n = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double dx = x[i] - c.x, dy = y[i] - c.y, dz = z[i] - c.z;
            if (dx * dx + dy * dy + dz * dz <= r2) ++n;
        }
        return n;
    }

    // drop particles farther than radius from every observer (only valid with
    // no pending batches, i.e. right after an advance)
    void cull(const std::vector<Vec3>& observers, double radius) {
        const double r2 = radius * radius;
        std::size_t w = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            bool keep = false;
            for (const Vec3& c : observers) {
                const double dx = x[i] - c.x, dy = y[i] - c.y, dz = z[i] - c.z;
                if (dx * dx + dy * dy + dz * dz <= r2) {
                    keep = true;
                    break;
                }
            }
            if (keep) {
                x[w] = x[i];
                y[w] = y[i];
                z[w] = z[i];
                ++w;
            }
        }
        x.resize(w);
        y.resize(w);
        z.resize(w);
    }

    std::size_t size() const { return x.size(); }
};

void check_sequence_inputs(const Model& model, const DetectorVariant& variant,
                           const std::vector<std::uint8_t>& tx_bits) {
    variant.validate(model.K());
    if (tx_bits.empty() || tx_bits.size() > model.timing.L)
        throw std::invalid_argument("run_sequence: need 1..L TX symbols");
    for (std::uint8_t b : tx_bits)
        if (b > 1) throw std::invalid_argument("run_sequence: TX symbols must be 0/1");
    const bool df = !variant.is_af();
    if (df && model.release.s_k.size() != model.K())
        throw std::invalid_argument("run_sequence: decode-and-forward needs s_k of length K");
    if (!df && model.release.alpha_k.size() != model.K())
        throw std::invalid_argument("run_sequence: amplify-and-forward needs alpha_k of length K");
}

double species_diff(const Model& model, std::size_t k) {
    return model.release.d_k.empty() ? model.release.d0 : model.release.d_k[k];
}

}  // namespace

SequenceRecord run_sequence(const Model& model, const DetectorVariant& variant,
                            const std::vector<std::uint8_t>& tx_bits, SeededStream& stream,
                            const SimOptions& opts) {
    check_sequence_inputs(model, variant, tx_bits);
    const std::size_t K = model.K();
    const TimingConfig& tm = model.timing;
    const bool particle = opts.backend == ChannelBackend::particle;
    const bool df = !variant.is_af();
    const bool multi = variant.is_multi_species();

    Species tx_species;
    tx_species.diff = model.release.d0;
    std::vector<Species> rx_species(K);  // one per RX even when counts are pooled,
    for (std::size_t k = 0; k < K; ++k)  // so per-RX diffusion coefficients stay exact
        rx_species[k].diff = species_diff(model, k);

    // model backend: per-interval emitted counts, most recent last
    std::vector<std::vector<std::uint64_t>> released(K);

    std::vector<Vec3> observers = model.spatial.rx_positions;
    observers.push_back(model.spatial.fc_position);
    observers.push_back(model.spatial.tx_position);

    LikelihoodContext ctx;
    if (df) ctx.fc_rx_histories.resize(K);

    SequenceRecord record;
    record.tx_bits = tx_bits;
    record.rx_errors.assign(df ? K : 0, 0);

    for (std::size_t j = 1; j <= tx_bits.size(); ++j) {
        const double t0 = static_cast<double>(j - 1) * tm.T;
        const std::uint8_t bit = tx_bits[j - 1];

        SymbolFrame frame;
        frame.j = j;
        frame.tx_symbol = bit;
        frame.rx_sums.assign(K, 0);

        if (particle) {
            if (bit)
                tx_species.add_batch(model.spatial.tx_position,
                                     static_cast<std::uint64_t>(std::llround(model.release.s0)), t0);
            for (std::uint32_t m = 1; m <= tm.m_rx; ++m) {
                tx_species.advance_to(t0 + m * tm.dt_rx, stream, opts.max_stride);
                for (std::size_t k = 0; k < K; ++k)
                    frame.rx_sums[k] += tx_species.count_inside(model.spatial.rx_positions[k],
                                                                model.spatial.rx_radii[k]);
            }
        } else {
            std::vector<std::uint8_t> bits_so_far(tx_bits.begin(), tx_bits.begin() + j);
            for (std::size_t k = 0; k < K; ++k) {
                const double mean = mean_rx_count(model.tx_rx[k], bits_so_far, j, model.release.s0);
                frame.rx_sums[k] = poisson_sample(stream, mean);
            }
        }

        // RX decisions and releases at t0 + t_trans
        const double t_rel = t0 + tm.t_trans;
        if (df) {
            frame.rx_decisions.resize(K);
            frame.rx_releases.resize(K);
            for (std::size_t k = 0; k < K; ++k) {
                frame.rx_decisions[k] =
                    rx_energy_decide(frame.rx_sums[k], variant.rx_thresholds[k]);
                const std::uint64_t count =
                    frame.rx_decisions[k]
                        ? static_cast<std::uint64_t>(std::llround(model.release.s_k[k]))
                        : 0;
                frame.rx_releases[k] = count;
                if (particle)
                    rx_species[k].add_batch(model.spatial.rx_positions[k], count, t_rel);
                else
                    released[k].push_back(count);
            }
        } else {
            frame.rx_releases.resize(K);
            for (std::size_t k = 0; k < K; ++k) {
                frame.rx_releases[k] = static_cast<std::uint64_t>(
                    std::llround(model.release.alpha_k[k] * static_cast<double>(frame.rx_sums[k])));
                if (particle)
                    rx_species[k].add_batch(model.spatial.rx_positions[k], frame.rx_releases[k],
                                            t_rel);
                else
                    released[k].push_back(frame.rx_releases[k]);
            }
        }

        // FC observation
        std::vector<std::uint64_t> species_sums(K, 0);
        if (particle) {
            for (std::uint32_t m = 1; m <= tm.m_fc; ++m) {
                const double t = t_rel + m * tm.dt_fc;
                for (std::size_t k = 0; k < K; ++k) {
                    rx_species[k].advance_to(t, stream, opts.max_stride);
                    species_sums[k] += rx_species[k].count_inside(model.spatial.fc_position,
                                                                  model.spatial.fc_radius);
                }
            }
        } else {
            for (std::size_t k = 0; k < K; ++k) {
                double lam = 0.0;
                for (std::size_t i = 1; i <= j; ++i)
                    lam += static_cast<double>(released[k][i - 1]) *
                           model.rx_fc[k].summed_by_lag[j - i];
                species_sums[k] = poisson_sample(stream, lam);
            }
        }
        if (multi) {
            frame.fc_species_sums = species_sums;
        } else {
            for (std::uint64_t s : species_sums) frame.fc_sum += s;
        }

        const Decision d = fc_decide(ctx, frame, model, variant, &stream);
        frame.fc_decision = d.bit;
        frame.fc_rx_estimates = d.rx_estimates;

        if (frame.fc_decision != bit) ++record.fc_errors;
        if (df)
            for (std::size_t k = 0; k < K; ++k)
                if (frame.rx_decisions[k] != bit) ++record.rx_errors[k];

        update_local_history(ctx, frame, variant, bit, frame.rx_decisions);
        record.frames.push_back(std::move(frame));

        if (particle && opts.cull_far_particles) {
            tx_species.advance_to(t_rel + tm.t_report, stream, opts.max_stride);
            for (auto& sp : rx_species) sp.advance_to(t_rel + tm.t_report, stream, opts.max_stride);
            tx_species.cull(observers, opts.cull_radius);
            for (auto& sp : rx_species) sp.cull(observers, opts.cull_radius);
        }
    }
    return record;
}

ErrorReport estimate_error_rate(const Model& model, const DetectorVariant& variant,
                                const SimOptions& opts) {
    if (opts.realizations == 0)
        throw std::invalid_argument("estimate_error_rate: realizations must be >= 1");
    const std::uint32_t R = opts.realizations;
    const std::uint32_t L = model.timing.L;
    const SeededStream base(opts.seed, 0);

    std::vector<std::vector<std::uint8_t>> interval_err(R);
    const std::uint32_t workers = std::max<std::uint32_t>(1, opts.workers);
    auto work = [&](std::uint32_t w) {
        for (std::uint32_t r = w; r < R; r += workers) {
            SeededStream seq = base.fork(r);
            std::vector<std::uint8_t> bits(L);
            for (auto& b : bits) b = seq.bernoulli(model.release.p1) ? 1 : 0;
            const SequenceRecord rec = run_sequence(model, variant, bits, seq, opts);
            auto& row = interval_err[r];
            row.resize(L);
            for (std::uint32_t j = 0; j < L; ++j)
                row[j] = rec.frames[j].fc_decision != bits[j] ? 1 : 0;
        }
    };
    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::uint32_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
        for (auto& t : pool) t.join();
    }

    ErrorReport report;
    report.realizations = R;
    report.seed = opts.seed;
    report.source = opts.backend == ChannelBackend::particle ? "particle_sim" : "analytic";
    report.per_interval.assign(L, 0.0);
    report.per_interval_se.assign(L, 0.0);
    double seq_sum = 0.0, seq_sumsq = 0.0;
    for (std::uint32_t r = 0; r < R; ++r) {
        double frac = 0.0;
        for (std::uint32_t j = 0; j < L; ++j) {
            frac += interval_err[r][j];
            report.per_interval[j] += interval_err[r][j];
        }
        frac /= L;
        seq_sum += frac;
        seq_sumsq += frac * frac;
    }
    report.q_bar = seq_sum / R;
    if (R > 1) {
        const double var =
            std::max(0.0, seq_sumsq - R * report.q_bar * report.q_bar) / (R - 1.0);
        report.std_err = std::sqrt(var / R);
    }
    for (std::uint32_t j = 0; j < L; ++j) {
        const double p = report.per_interval[j] / R;
        report.per_interval[j] = p;
        if (R > 1) report.per_interval_se[j] = std::sqrt(p * (1.0 - p) / R);
    }
    return report;
}

Estimate hitting_probability_mc(double r, double d, double diffusion, double t,
                                std::uint64_t walkers, SeededStream& stream,
                                std::uint32_t strides) {
    if (r <= 0 || d <= 0 || diffusion <= 0 || t <= 0 || walkers == 0 || strides == 0)
        throw std::domain_error("hitting_probability_mc: all arguments must be positive");
    const double sigma = std::sqrt(2.0 * diffusion * (t / strides));
    const double r2 = r * r;
    std::uint64_t hits = 0;
    for (std::uint64_t i = 0; i < walkers; ++i) {
        double x = 0.0, y = 0.0, z = 0.0;
        for (std::uint32_t s = 0; s < strides; ++s) {
            x += sigma * stream.normal();
            y += sigma * stream.normal();
            z += sigma * stream.normal();
        }
        const double dx = x - d;
        if (dx * dx + y * y + z * z <= r2) ++hits;
    }
    Estimate e;
    e.trials = walkers;
    e.value = static_cast<double>(hits) / static_cast<double>(walkers);
    e.std_err = std::sqrt(std::max(0.0, e.value * (1.0 - e.value)) / static_cast<double>(walkers));
    return e;
}

Estimate msd_probe(double diffusion, double t, std::uint64_t walkers, SeededStream& stream,
                   std::uint32_t strides) {
    if (diffusion <= 0 || t <= 0 || walkers == 0 || strides == 0)
        throw std::domain_error("msd_probe: all arguments must be positive");
    const double sigma = std::sqrt(2.0 * diffusion * (t / strides));
    double sum = 0.0, sumsq = 0.0;
    for (std::uint64_t i = 0; i < walkers; ++i) {
        double x = 0.0, y = 0.0, z = 0.0;
        for (std::uint32_t s = 0; s < strides; ++s) {
            x += sigma * stream.normal();
            y += sigma * stream.normal();
            z += sigma * stream.normal();
        }
        const double sq = x * x + y * y + z * z;
        sum += sq;
        sumsq += sq * sq;
    }
    Estimate e;
    e.trials = walkers;
    e.value = sum / static_cast<double>(walkers);
    const double var =
        std::max(0.0, sumsq / walkers - e.value * e.value) * walkers / std::max(1.0, walkers - 1.0);
    e.std_err = std::sqrt(var / static_cast<double>(walkers));
    return e;
}

}  // namespace molcom
