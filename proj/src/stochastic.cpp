#include "molcom/stochastic.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <stdexcept>

namespace molcom {

double poisson_log_pmf(double mean, std::uint64_t count) {
    if (!(mean >= 0.0)) throw std::domain_error("poisson_log_pmf: mean must be >= 0");
    if (mean == 0.0) return count == 0 ? 0.0 : kLogZero;
    return static_cast<double>(count) * std::log(mean) - mean - std::lgamma(static_cast<double>(count) + 1.0);
}

double poisson_cdf_below(double mean, std::uint64_t threshold) {
    if (!(mean >= 0.0)) throw std::domain_error("poisson_cdf_below: mean must be >= 0");
    if (threshold == 0) return 0.0;
    if (mean == 0.0) return 1.0;
    // Pr[X <= threshold-1] = Q(threshold, mean) (regularized upper incomplete gamma);
    // deliberately a different route than summing exp(poisson_log_pmf), so the
    // pmf/cdf consistency check exercises two independent evaluations.
    return boost::math::gamma_q(static_cast<double>(threshold), mean);
}

// ---- SeededStream ----------------------------------------------------------

namespace {

inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

SeededStream::SeededStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
    // Mix the pair through SplitMix64 so (seed, id) and (seed, id+1) share no state.
    std::uint64_t x = seed ^ (0x9E3779B97F4A7C15ULL * (stream_id + 1));
    for (auto& w : s_) w = splitmix64(x);
    // xoshiro must not start from the all-zero state
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
}

SeededStream SeededStream::fork(std::uint64_t child_id) const {
    std::uint64_t x = seed_ ^ (0xD1B54A32D192ED03ULL * (stream_id_ + 1));
    // Fold child_id in *before* the final SplitMix64 pass; a plain XOR after it
    // would be undone by the constructor's own mixing for matching stream ids.
    std::uint64_t y = splitmix64(x) + 0x9E3779B97F4A7C15ULL * (child_id + 1);
    return SeededStream(splitmix64(y), child_id);
}

std::uint64_t SeededStream::next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double SeededStream::uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

// ---- ziggurat normal sampler (Marsaglia & Tsang, 256 layers) ---------------
// The particle engine draws billions of Gaussians; the ziggurat's common path
// is one u64 draw, one table lookup and one multiply.

namespace {

constexpr double kZigR = 3.6541528853610088;     // rightmost layer edge
constexpr double kZigV = 0.00492867323399;       // area per layer (256 layers)

// x[0] = V/f(R) > x[1] = R > ... > x[256] = 0; y[i] = exp(-x[i]^2/2).
struct ZigguratTables {
    double x[257];
    double y[257];
    std::uint64_t k[256];  // fast-accept bound: |u53| < k[i] <=> |z| < x[i+1]

    ZigguratTables() {
        auto f = [](double t) { return std::exp(-0.5 * t * t); };
        x[0] = kZigV / f(kZigR);
        x[1] = kZigR;
        x[256] = 0.0;
        for (int i = 2; i < 256; ++i)
            x[i] = std::sqrt(-2.0 * std::log(kZigV / x[i - 1] + f(x[i - 1])));
        for (int i = 0; i <= 256; ++i) y[i] = f(x[i]);
        for (int i = 0; i < 256; ++i)
            k[i] = static_cast<std::uint64_t>((x[i + 1] / x[i]) * 9007199254740992.0);  // 2^53
    }
};

const ZigguratTables& zig() {
    static const ZigguratTables tables;
    return tables;
}

}  // namespace

double SeededStream::normal() {
    const auto& t = zig();
    for (;;) {
        const std::uint64_t bits = next_u64();
        const int i = static_cast<int>(bits & 0xFF);
        const bool negative = bits & 0x100;
        const std::uint64_t u53 = bits >> 11;
        const double z = static_cast<double>(u53) * 0x1.0p-53 * t.x[i];
        if (u53 < t.k[i]) return negative ? -z : z;  // strictly inside the box
        if (i == 0) {
            // base layer overflow corresponds exactly to the tail beyond R
            for (;;) {
                const double ex = -std::log(1.0 - uniform01()) / kZigR;
                const double ey = -std::log(1.0 - uniform01());
                if (ex * ex <= 2.0 * ey) return negative ? -(kZigR + ex) : (kZigR + ex);
            }
        }
        // wedge: accept against the true density between y[i] and y[i+1]
        if (uniform01() * (t.y[i + 1] - t.y[i]) < std::exp(-0.5 * z * z) - t.y[i])
            return negative ? -z : z;
    }
}

void SeededStream::fill_normal(double* dst, std::size_t n, double stddev) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = stddev * normal();
}

// ---- Poisson sampling ------------------------------------------------------

namespace {

// Inversion by sequential search; fine up to mean ~ 30.
std::uint64_t poisson_small(SeededStream& stream, double mean) {
    double p = std::exp(-mean);
    double cum = p;
    double u = stream.uniform01();
    std::uint64_t k = 0;
    while (u > cum) {
        ++k;
        p *= mean / static_cast<double>(k);
        cum += p;
        if (p < 1e-300 && k > mean) break;  // guard against u in the far tail
    }
    return k;
}

// Hormann's PTRS transformed-rejection sampler: exact for mean >= ~10.
std::uint64_t poisson_ptrs(SeededStream& stream, double mean) {
    const double slam = std::sqrt(mean);
    const double loglam = std::log(mean);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double v_r = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
        double u = stream.uniform01() - 0.5;
        double v = stream.uniform01();
        double us = 0.5 - std::abs(u);
        double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
        if (us >= 0.07 && v <= v_r) return static_cast<std::uint64_t>(k);
        if (k < 0.0 || (us < 0.013 && v > us)) continue;
        if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
            k * loglam - mean - std::lgamma(k + 1.0)) {
            return static_cast<std::uint64_t>(k);
        }
    }
}

}  // namespace

std::uint64_t poisson_sample(SeededStream& stream, double mean) {
    if (!std::isfinite(mean) || mean < 0.0) throw std::domain_error("poisson_sample: bad mean");
    if (mean == 0.0) return 0;
    if (mean < 10.0) return poisson_small(stream, mean);
    return poisson_ptrs(stream, mean);
}

}  // namespace molcom
