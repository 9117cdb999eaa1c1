#pragma once
// Particle-based Monte Carlo of the full cooperative link, plus a cheaper
// backend that draws the per-interval count sums directly from their Poisson
// model. Both feed the same detector code path, so a decision differs between
// backends only if the physics does.
//
// The particle backend tracks every released molecule as an independent
// Brownian walker and advances each species only to the instants where it can
// be observed or created (RX sample times for the TX species, FC sample times
// for the RX species); between events a walker takes one exact Gaussian
// stride of the full duration. max_stride subdivides those strides to check
// step-size insensitivity.

#include "molcom/analytics.hpp"
#include "molcom/detectors.hpp"
#include "molcom/stochastic.hpp"
#include "molcom/system_config.hpp"

#include <cstdint>
#include <vector>

namespace molcom {

enum class ChannelBackend { particle, model };

struct SimOptions {
    std::uint32_t realizations = 100;
    std::uint64_t seed = 1;
    std::uint32_t workers = 1;
    ChannelBackend backend = ChannelBackend::particle;
    double max_stride = 0.0;  // seconds; 0 = one stride per inter-event gap
    bool cull_far_particles = false;
    double cull_radius = 30e-6;  // metres from the TX
};

struct SequenceRecord {
    std::vector<std::uint8_t> tx_bits;
    std::vector<SymbolFrame> frames;
    std::uint32_t fc_errors = 0;
    std::vector<std::uint32_t> rx_errors;  // decode-and-forward kinds only
};

SequenceRecord run_sequence(const Model& model, const DetectorVariant& variant,
                            const std::vector<std::uint8_t>& tx_bits, SeededStream& stream,
                            const SimOptions& opts);

// Error rate over opts.realizations random TX sequences of length timing.L.
// Each sequence runs on a stream forked from (seed, sequence index), so the
// result is invariant to the worker count.
ErrorReport estimate_error_rate(const Model& model, const DetectorVariant& variant,
                                const SimOptions& opts);

struct Estimate {
    double value = 0.0;
    double std_err = 0.0;
    std::uint64_t trials = 0;
};

// Fraction of point-released walkers found inside a sphere of radius r at
// distance d after time t (strides > 1 splits the flight into equal steps).
Estimate hitting_probability_mc(double r, double d, double diffusion, double t,
                                std::uint64_t walkers, SeededStream& stream,
                                std::uint32_t strides = 1);

// Mean squared displacement after time t; expectation is 6 D t.
Estimate msd_probe(double diffusion, double t, std::uint64_t walkers, SeededStream& stream,
                   std::uint32_t strides = 1);

}  // namespace molcom
