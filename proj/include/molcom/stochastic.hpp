#pragma once
// Log-domain Poisson utilities and the seeded RNG stream shared by every
// Monte Carlo component. Streams are cheap value types: fork one per worker /
// per sequence and results are independent of scheduling.

#include <cstdint>
#include <limits>

namespace molcom {

// Sentinel for log(0). A finite large-negative value keeps comparisons and
// argmax rules totally ordered (no NaN propagation from -inf arithmetic).
inline constexpr double kLogZero = -1.0e300;

// log Pr[X = count] for X ~ Poisson(mean). Convention: mean==0 gives 0 for
// count==0 (log of a point mass) and kLogZero otherwise. Throws std::domain_error
// on negative mean.
double poisson_log_pmf(double mean, std::uint64_t count);

// Pr[X < threshold] for X ~ Poisson(mean); threshold is an integer count.
// threshold==0 gives 0. Throws std::domain_error on negative mean.
double poisson_cdf_below(double mean, std::uint64_t threshold);

// xoshiro256++ stream, seeded via SplitMix64 from (seed, stream_id).
// Identical (seed, stream_id) -> identical draws; distinct stream_ids give
// statistically independent streams.
class SeededStream {
  public:
    SeededStream(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    // Derive an independent child stream; deterministic in (this stream's
    // identity, child_id), independent of draw position.
    SeededStream fork(std::uint64_t child_id) const;

    std::uint64_t next_u64();
    double uniform01();              // in [0, 1)
    double normal();                 // standard normal (ziggurat; exact tails)
    void fill_normal(double* dst, std::size_t n, double stddev);
    std::uint64_t bernoulli(double p) { return uniform01() < p ? 1u : 0u; }

  private:
    std::uint64_t s_[4];
    std::uint64_t seed_, stream_id_;
};

// Exact Poisson draw: inversion by sequential search for small means,
// PTRS rejection for large. mean==0 -> 0. Throws on negative/nonfinite mean.
std::uint64_t poisson_sample(SeededStream& stream, double mean);

}  // namespace molcom
