#pragma once
// Closed-form / semi-analytical error probabilities for the cooperative
// system, plus the pieces the allocation optimizer differentiates.
//
// The central object is a single conditional-error kernel evaluated on an
// SdMixture: given a count threshold xi, the error probability is
//   p1 * sum_h w1[h] * Pr[count < xi | mean_h]
//   + (1 - p1) * (1 - sum_h w0[h] * Pr[count < xi | mean_h]).
// Every analytical path (FC error with adaptive threshold, the smooth
// surrogate the optimizer descends, and the amplify-and-forward cases) calls
// this one function so their agreement is exact rather than approximate.

#include "molcom/detectors.hpp"
#include "molcom/stochastic.hpp"
#include "molcom/system_config.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace molcom {

class unsupported_variant_error : public std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// What error probability is being asked for: detector kind, the true TX
// prefix (symbols 1..j-1), and how many RX-history draws to average over.
struct ErrorQuery {
    DetectorKind kind = DetectorKind::SD_ML;
    std::vector<std::uint8_t> tx_prefix;
    std::uint32_t history_draws = 1000;
    double p1 = 0.5;
    std::vector<std::uint64_t> rx_thresholds;
    std::optional<std::uint64_t> fc_constant_threshold;  // SA_CONST only

    std::size_t j() const { return tx_prefix.size() + 1; }
    void validate(std::size_t K) const;
};

struct QValue {
    double value = 0.0;
    double std_err = 0.0;
};

// Per-RX, per-lag miss / false-alarm probabilities of the RX energy
// detectors given the true TX prefix (exact Poisson tails).
struct LinkErrorProbs {
    std::vector<std::vector<double>> miss;         // [k][i], i over prefix intervals
    std::vector<std::vector<double>> false_alarm;  // [k][i]
};

LinkErrorProbs link_error_probs(const Model& model, const std::vector<std::uint8_t>& tx_prefix,
                                const std::vector<std::uint64_t>& rx_thresholds);

// Sample decided-history realizations by flipping each true prefix bit with
// that RX's miss/false-alarm probability. shared_across_rx draws one flip
// pattern and copies it to every RX (single-realization device used when
// studying the symmetric allocation).
std::vector<std::vector<std::uint8_t>> coin_toss_rx_history(SeededStream& stream,
                                                            const std::vector<std::uint8_t>& tx_prefix,
                                                            const LinkErrorProbs& errs,
                                                            bool shared_across_rx = false);

enum class LambdaForm { discrete, gamma };

// The shared kernel. discrete: Pr[count < ceil(xi)] by exact Poisson CDF.
// gamma: the regularized upper incomplete gamma Q(xi, mean), which matches
// the discrete form at integer xi and is smooth in both xi and the means.
double mixture_error_kernel(const SdMixture& mix, double xi, double p1, LambdaForm form);

// Conditional error of the adaptive-threshold FC rule given one decided
// history (threshold recomputed from the mixture; zero-ISI prefixes use the
// count>0 rule, i.e. xi=1 with the ISI term absent).
double sd_conditional_error(const SdMixture& mix, std::uint64_t xi, double p1);

// Decode-and-forward FC error, averaged over query.history_draws coin-toss
// histories. Deterministic given the stream seed.
QValue q_fc_sd(const ErrorQuery& query, const Model& model, SeededStream& stream);

// Amplify-and-forward FC error. The decision threshold is the mean-path
// detector's (deterministic given the prefix), but the error is scored under
// the true observation law: each of query.history_draws realizations draws the
// RX Poisson observations, converts them to integer releases round(alpha*s),
// and the conditional Poisson errors are averaged. Collapsing the amplified
// observations to their means instead would miss the forwarded RX noise
// (variance ~ (alpha p)^2 lambda on top of the Poisson mean) and report
// errors that are orders of magnitude too small.
QValue q_fc_sa(const ErrorQuery& query, const Model& model, SeededStream& stream);

// Smooth(able) objective for the allocation search: error at allocation
// `allocation` and threshold xi, for explicit frozen histories (common random
// numbers across evaluations).
double q_sharp(const std::vector<double>& allocation, double xi, const ErrorQuery& query,
               const Model& model, const std::vector<std::vector<std::uint8_t>>& rx_histories,
               LambdaForm form = LambdaForm::discrete);

// RX decision probabilities conditioned on the current TX bit, both as a
// joint table over patterns h (indexed like SdMixture components) and as the
// symmetric-case scalars: alpha_sym = Pr[one fixed RX answers 1 | bit 0],
// beta_sym = Pr[that RX answers 0 | bit 1], plus per-RX signal means nu_k and
// ISI means sigma_k implied by the decided histories.
struct RxDecisionProbs {
    std::vector<double> given_tx0;  // Pr[h | bit 0], size 2^K
    std::vector<double> given_tx1;
    double alpha_sym = 0.0;
    double beta_sym = 0.0;
    std::vector<double> nu_k;
    std::vector<double> sigma_k;
};

RxDecisionProbs rx_decision_probs(const Model& model, const std::vector<std::uint8_t>& tx_prefix,
                                  const std::vector<std::vector<std::uint8_t>>& rx_histories,
                                  const std::vector<std::uint64_t>& rx_thresholds);

// Curvature proxy used by the symmetric-allocation check:
// (alpha (p1 - 1) + beta p1) * (2 + N (nu + 2 sigma) - 2 ceil(xi)).
double upsilon(double xi, double n_total, double nu, double sigma, double alpha, double beta,
               double p1);

// Nearest integer to lambda_s / ln((lambda_i + lambda_s) / lambda_i); the
// single-RX pooled-species threshold in closed form. Throws std::domain_error
// unless both arguments are positive.
std::int64_t closed_form_threshold(double lambda_s, double lambda_i);

struct ErrorReport {
    double q_bar = 0.0;
    double std_err = 0.0;
    std::vector<double> per_interval;
    std::vector<double> per_interval_se;
    std::uint64_t seed = 0;
    std::uint32_t realizations = 0;
    std::string source;
};

// Average the per-interval error over `realizations` sampled TX sequences
// (all L intervals each). Supported kinds: SD_ML (genie history), SA_ML,
// SA_CONST; others throw unsupported_variant_error.
ErrorReport averaged_error(const DetectorVariant& variant, const Model& model,
                           std::uint32_t realizations, SeededStream& stream,
                           std::uint32_t inner_draws = 1000);

}  // namespace molcom
