#pragma once
// FC-side decision rules (three ML schemes plus constant-threshold and
// majority baselines), RX-side energy detection, and local-history tracking.
//
// The ML rules are implemented through a shared Poisson-mixture abstraction:
// the FC observation under hypothesis b is a mixture over the 2^K possible
// current RX decision patterns h, with weights Pr[h | b, estimated TX prefix]
// and means isi_mean + signal(h). The adaptive count threshold is the first
// crossing of the two mixture likelihoods; by the monotone likelihood ratio
// this reproduces the argmax rule exactly (a property the tests enforce).

#include "molcom/channel.hpp"
#include "molcom/stochastic.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace molcom {

struct Model;  // system_config.hpp

enum class DetectorKind { MD_ML, SD_ML, SA_ML, MAJORITY, SD_CONST, SA_CONST };
enum class HistoryMode { local, genie };
enum class SaPath { mean, mixture };

const char* to_string(DetectorKind kind);
const char* to_string(HistoryMode mode);
DetectorKind detector_kind_from_string(const std::string& s);
HistoryMode history_mode_from_string(const std::string& s);

struct DetectorVariant {
    DetectorKind kind = DetectorKind::SD_ML;
    HistoryMode history_mode = HistoryMode::genie;
    std::optional<std::uint64_t> fc_constant_threshold;  // constant kinds only
    std::vector<std::uint64_t> rx_thresholds;            // per-RX energy thresholds (DF)
    bool tie_decides_one = true;                         // FC behaviour at exact likelihood ties
    SaPath sa_path = SaPath::mean;
    std::uint32_t sa_realization_budget = 5000;

    bool is_ml() const {
        return kind == DetectorKind::MD_ML || kind == DetectorKind::SD_ML ||
               kind == DetectorKind::SA_ML;
    }
    bool is_af() const { return kind == DetectorKind::SA_ML || kind == DetectorKind::SA_CONST; }
    // one FC species per RX (vs a single pooled species)
    bool is_multi_species() const {
        return kind == DetectorKind::MD_ML || kind == DetectorKind::MAJORITY;
    }
    void validate(std::size_t K) const;
};

// The FC's running knowledge at interval j: estimated (or, in genie mode,
// true) TX symbols and per-RX decisions for intervals 1..j-1.
struct LikelihoodContext {
    std::vector<std::uint8_t> fc_tx_history;
    std::vector<std::vector<std::uint8_t>> fc_rx_histories;  // per RX; unused for AF kinds
    std::size_t j = 1;
};

// Everything observed/decided in one interval.
struct SymbolFrame {
    std::size_t j = 1;
    std::uint8_t tx_symbol = 0;
    std::vector<std::uint64_t> rx_sums;          // per-RX sample sums
    std::vector<std::uint8_t> rx_decisions;      // DF kinds
    std::vector<std::uint64_t> rx_releases;      // DF: budget or 0; AF: round(alpha * sum)
    std::vector<std::uint64_t> fc_species_sums;  // multi-species kinds
    std::uint64_t fc_sum = 0;                    // pooled-species kinds
    std::uint8_t fc_decision = 0;
    std::vector<std::uint8_t> fc_rx_estimates;   // MD / SD estimated RX decisions
};

struct Decision {
    std::uint8_t bit = 0;
    std::vector<std::uint8_t> rx_estimates;
};

// 1 iff the sample sum reaches the threshold.
std::uint8_t rx_energy_decide(std::uint64_t sum_count, std::uint64_t threshold);

// Mixture description of the FC count under the two hypotheses.
struct SdMixture {
    double isi_mean = 0.0;
    std::vector<double> component_signal;  // indexed by RX-pattern bitmask h (bit k = RX k answered 1)
    std::vector<double> weight_b0;         // Pr[h | current bit 0, prefix]
    std::vector<double> weight_b1;         // Pr[h | current bit 1, prefix]
};

// Build the mixture from the channel model: weights from per-RX Poisson tail
// probabilities given the TX prefix + hypothesized current bit; means from the
// decided RX histories (ISI) and the allocation s_k (signal).
SdMixture build_sd_mixture(const Model& model, const std::vector<std::uint8_t>& tx_prefix,
                           const std::vector<std::vector<std::uint8_t>>& rx_histories,
                           const std::vector<double>& s_k,
                           const std::vector<std::uint64_t>& rx_thresholds);

// log of the mixture likelihood of observing `count` under hypothesis bit b.
double sd_log_likelihood(const SdMixture& mix, std::uint64_t count, int hypothesis_bit);

// Smallest count at which the b=1 likelihood reaches (>= ; or exceeds, if
// ties_decide_one is false) the b=0 likelihood. Search range
// 0..ceil(mean_max + 12 sqrt(mean_max)), bisected under the monotone
// likelihood ratio.
std::uint64_t adaptive_threshold(const SdMixture& mix, bool ties_decide_one = true);

Decision md_ml_decide(const LikelihoodContext& ctx, const std::vector<std::uint64_t>& fc_species_sums,
                      const Model& model, const DetectorVariant& variant);

Decision sd_ml_decide(const LikelihoodContext& ctx, std::uint64_t fc_sum, const Model& model,
                      const DetectorVariant& variant);

// mean path: threshold rule on the expected-observation means; mixture path:
// Monte Carlo average of the likelihood over sampled RX-observation
// trajectories (realization_budget of them, recent 10 lags sampled, older ISI
// by its mean).
std::uint8_t sa_ml_decide(const LikelihoodContext& ctx, std::uint64_t fc_sum, const Model& model,
                          const DetectorVariant& variant, std::uint32_t realization_budget,
                          SeededStream* mixture_stream = nullptr);

std::uint8_t constant_or_majority_decide(const DetectorVariant& variant,
                                         const std::vector<std::uint64_t>& fc_species_sums,
                                         std::uint64_t fc_sum);

// Append this interval's decisions (or, in genie mode, the true symbols) to
// the context and advance j.
void update_local_history(LikelihoodContext& ctx, const SymbolFrame& frame,
                          const DetectorVariant& variant, std::uint8_t true_tx_bit,
                          const std::vector<std::uint8_t>& true_rx_decisions);

// Variant dispatch used by the simulator; sa_stream only needed for the SA
// mixture path.
Decision fc_decide(const LikelihoodContext& ctx, const SymbolFrame& frame, const Model& model,
                   const DetectorVariant& variant, SeededStream* sa_stream = nullptr);

}  // namespace molcom
