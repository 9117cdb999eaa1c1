#include "molcom/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace molcom {

namespace {

// Euclidean projection onto {x >= 0, sum(x) <= cap}.
std::vector<double> project_capped_simplex(std::vector<double> x, double cap) {
    for (double& v : x) v = std::max(0.0, v);
    const double s = std::accumulate(x.begin(), x.end(), 0.0);
    if (s <= cap) return x;
    std::vector<double> u = x;
    std::sort(u.begin(), u.end(), std::greater<>());
    double css = 0.0, tau = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        css += u[i];
        const double t = (css - cap) / static_cast<double>(i + 1);
        if (u[i] - t > 0.0) tau = t;
    }
    for (double& v : x) v = std::max(0.0, v - tau);
    return x;
}

struct FrozenEvaluator {
    const Model& model;
    const ErrorQuery& query;
    std::vector<std::vector<std::vector<std::uint8_t>>> histories;  // [draw][rx][interval]
    double n_total;

    std::vector<double> expand(const std::vector<double>& reduced) const {
        std::vector<double> s(reduced);
        const double used = std::accumulate(reduced.begin(), reduced.end(), 0.0);
        s.push_back(std::max(0.0, n_total - used));
        return s;
    }

    double value(const std::vector<double>& reduced, double xi, LambdaForm form) const {
        const std::vector<double> s = expand(reduced);
        double acc = 0.0;
        for (const auto& hist : histories) acc += q_sharp(s, xi, query, model, hist, form);
        return acc / static_cast<double>(histories.size());
    }
};

FrozenEvaluator make_evaluator(const AllocationProblem& problem, const Model& model,
                               bool shared_across_rx) {
    FrozenEvaluator ev{model, problem.query, {}, problem.n_total};
    SeededStream stream(problem.seed, 0);
    const LinkErrorProbs errs =
        link_error_probs(model, problem.query.tx_prefix, problem.query.rx_thresholds);
    const std::uint32_t draws = std::max<std::uint32_t>(1, problem.history_draws);
    ev.histories.reserve(draws);
    for (std::uint32_t d = 0; d < draws; ++d)
        ev.histories.push_back(
            coin_toss_rx_history(stream, problem.query.tx_prefix, errs, shared_across_rx));
    return ev;
}

// Adaptive threshold of the mixture at this allocation, averaged start point
// for the continuous threshold variable (first frozen history).
double initial_xi(const FrozenEvaluator& ev, const std::vector<double>& reduced) {
    const SdMixture mix = build_sd_mixture(ev.model, ev.query.tx_prefix, ev.histories.front(),
                                           ev.expand(reduced), ev.query.rx_thresholds);
    if (mix.isi_mean <= 0.0) return 1.0;
    return static_cast<double>(adaptive_threshold(mix, true));
}

}  // namespace

AllocationResult solve_allocation(const AllocationProblem& problem, const Model& model) {
    const std::size_t K = model.K();
    if (problem.n_total <= 0.0)
        throw std::invalid_argument("allocation: n_total must be > 0");
    problem.query.validate(K);
    if (problem.query.kind != DetectorKind::SD_ML)
        throw unsupported_variant_error("allocation search targets the pooled-species DF detector");

    const FrozenEvaluator ev = make_evaluator(problem, model, false);
    const std::size_t dim = K - 1;  // S_K is eliminated
    const double n = problem.n_total;

    // start points in reduced coordinates (molecule units)
    std::vector<std::vector<double>> starts;
    starts.emplace_back(dim, n / static_cast<double>(K));  // uniform split
    for (std::size_t k = 0; k < K; ++k) {                  // all budget at one RX
        std::vector<double> v(dim, 0.0);
        if (k < dim) v[k] = n;
        starts.push_back(std::move(v));
    }
    const std::uint32_t want = problem.starts ? problem.starts
                                              : static_cast<std::uint32_t>(20 + 2 * K);
    SeededStream start_stream(problem.seed, 1);
    while (starts.size() < want) {
        std::vector<double> g(K);
        double tot = 0.0;
        for (double& v : g) {
            v = -std::log(std::max(1e-300, start_stream.uniform01()));
            tot += v;
        }
        std::vector<double> v(dim);
        for (std::size_t i = 0; i < dim; ++i) v[i] = n * g[i] / tot;
        starts.push_back(std::move(v));
    }

    // joint variable z = (reduced allocation / n, xi / xi_scale)
    AllocationResult best;
    bool have_best = false;

    for (std::size_t si = 0; si < starts.size(); ++si) {
        std::vector<double> x(dim);
        for (std::size_t i = 0; i < dim; ++i) x[i] = starts[si][i] / n;
        double xi0 = initial_xi(ev, starts[si]);
        const double xi_scale = std::max(1.0, xi0);
        double xz = xi0 / xi_scale;

        auto to_reduced = [&](const std::vector<double>& xv) {
            std::vector<double> r(dim);
            for (std::size_t i = 0; i < dim; ++i) r[i] = xv[i] * n;
            return r;
        };
        auto f = [&](const std::vector<double>& xv, double xiv) {
            return ev.value(to_reduced(xv), std::max(0.0, xiv) * xi_scale, LambdaForm::gamma);
        };

        const double h = 1e-5;
        double fx = f(x, xz);
        double residual = 0.0;
        bool converged = false;
        for (std::uint32_t it = 0; it < problem.max_iters; ++it) {
            // central-difference gradient in normalized coordinates
            std::vector<double> g(dim);
            for (std::size_t i = 0; i < dim; ++i) {
                std::vector<double> xp = x, xm = x;
                xp[i] += h;
                xm[i] -= h;
                g[i] = (f(project_capped_simplex(xp, 1.0), xz) -
                        f(project_capped_simplex(xm, 1.0), xz)) /
                       (2.0 * h);
            }
            const double gxi = (f(x, xz + h) - f(x, xz - h)) / (2.0 * h);

            // projected-gradient residual
            std::vector<double> trial = x;
            for (std::size_t i = 0; i < dim; ++i) trial[i] -= g[i];
            trial = project_capped_simplex(trial, 1.0);
            double res = 0.0;
            for (std::size_t i = 0; i < dim; ++i) res += (x[i] - trial[i]) * (x[i] - trial[i]);
            const double xi_trial = std::max(0.0, xz - gxi);
            res += (xz - xi_trial) * (xz - xi_trial);
            residual = std::sqrt(res);
            if (residual < 1e-6 * std::max(1.0, std::fabs(fx))) {
                converged = true;
                break;
            }

            // Armijo backtracking along the projected direction
            double step = 0.25;
            bool moved = false;
            const double gnorm2 = std::inner_product(g.begin(), g.end(), g.begin(), 0.0) + gxi * gxi;
            for (int bt = 0; bt < 50; ++bt) {
                std::vector<double> cand = x;
                for (std::size_t i = 0; i < dim; ++i) cand[i] -= step * g[i];
                cand = project_capped_simplex(cand, 1.0);
                const double cand_xi = std::max(0.0, xz - step * gxi);
                const double fc = f(cand, cand_xi);
                if (fc <= fx - 1e-4 * step * gnorm2) {
                    x = std::move(cand);
                    xz = cand_xi;
                    fx = fc;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if (!moved) {
                converged = residual < 1e-4 * std::max(1.0, std::fabs(fx));
                break;  // stuck on numerical floor
            }
        }

        AllocationResult r;
        r.allocation = ev.expand(to_reduced(x));
        r.xi = std::max(0.0, xz) * xi_scale;
        r.objective = fx;
        r.kkt_residual = residual;
        r.converged = converged;
        r.start_index = static_cast<std::uint32_t>(si);
        const bool better =
            !have_best || r.objective < best.objective ||
            (r.objective == best.objective &&
             std::lexicographical_compare(r.allocation.begin(), r.allocation.end(),
                                          best.allocation.begin(), best.allocation.end()));
        if (better) {
            best = std::move(r);
            have_best = true;
        }
    }
    return best;
}

GridResult exhaustive_grid(const AllocationProblem& problem, const Model& model,
                           double grid_step) {
    const std::size_t K = model.K();
    problem.query.validate(K);
    if (grid_step <= 0.0) throw std::invalid_argument("grid: step must be > 0");
    const auto levels = static_cast<std::size_t>(std::floor(problem.n_total / grid_step)) + 1;
    double count = 1.0;  // compositions of the lattice: levels^(K-1) interior choices
    for (std::size_t i = 0; i + 1 < K; ++i) count *= static_cast<double>(levels);
    if (count > 1e4) throw std::invalid_argument("grid: more than 10^4 lattice points");

    GridResult result;
    std::vector<std::size_t> idx(K - 1, 0);
    Model scratch = model;
    std::size_t point = 0;
    while (true) {
        double used = 0.0;
        std::vector<double> alloc(K);
        for (std::size_t i = 0; i + 1 < K; ++i) {
            alloc[i] = static_cast<double>(idx[i]) * grid_step;
            used += alloc[i];
        }
        if (used <= problem.n_total + 1e-9) {
            alloc[K - 1] = problem.n_total - used;
            scratch.release.s_k = alloc;
            SeededStream stream(problem.seed, 1000 + point);
            const QValue q = q_fc_sd(problem.query, scratch, stream);
            result.points.push_back(GridPoint{alloc, q.value, q.std_err});
        }
        ++point;
        // advance the odometer
        std::size_t d = 0;
        for (; d < idx.size(); ++d) {
            if (++idx[d] < levels) break;
            idx[d] = 0;
        }
        if (d == idx.size()) break;
    }
    for (std::size_t i = 0; i < result.points.size(); ++i)
        if (result.points[i].value < result.points[result.argmin].value) result.argmin = i;
    return result;
}

SymmetryCheck symmetric_local_min_check(const AllocationProblem& problem, const Model& model) {
    const std::size_t K = model.K();
    if (K < 2) throw std::invalid_argument("symmetry check needs K >= 2");
    for (std::size_t k = 1; k < K; ++k) {
        const double d0 = model.spatial.tx_rx_distance(0), dk = model.spatial.tx_rx_distance(k);
        const double f0 = model.spatial.rx_fc_distance(0), fk = model.spatial.rx_fc_distance(k);
        if (std::fabs(dk - d0) > 1e-9 * d0 || std::fabs(fk - f0) > 1e-9 * std::max(f0, 1e-30))
            throw std::invalid_argument("symmetry check: geometry is not RX-symmetric");
    }

    const FrozenEvaluator ev = make_evaluator(problem, model, /*shared_across_rx=*/true);
    const double n = problem.n_total;
    const std::vector<double> uniform(K - 1, n / static_cast<double>(K));

    // freeze one threshold per history at the uniform split
    std::vector<double> xis(ev.histories.size());
    for (std::size_t d = 0; d < ev.histories.size(); ++d) {
        const SdMixture mix = build_sd_mixture(model, problem.query.tx_prefix, ev.histories[d],
                                               ev.expand(uniform), problem.query.rx_thresholds);
        xis[d] = mix.isi_mean > 0.0 ? static_cast<double>(adaptive_threshold(mix, true)) : 1.0;
    }
    auto fval = [&](const std::vector<double>& reduced) {
        const std::vector<double> s = ev.expand(reduced);
        double acc = 0.0;
        for (std::size_t d = 0; d < ev.histories.size(); ++d)
            acc += q_sharp(s, xis[d], problem.query, model, ev.histories[d], LambdaForm::gamma);
        return acc / static_cast<double>(ev.histories.size());
    };

    SymmetryCheck check;
    const double h = n / 1000.0;
    const double f0 = fval(uniform);
    double grad2 = 0.0;
    check.min_second_difference = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < K; ++i) {
        std::vector<double> xp = uniform, xm = uniform;
        xp[i] += h;
        xm[i] -= h;
        const double fp = fval(xp), fm = fval(xm);
        const double g = (fp - fm) / (2.0 * h);
        grad2 += g * g;
        check.min_second_difference =
            std::min(check.min_second_difference, (fp - 2.0 * f0 + fm) / (h * h));
    }
    check.gradient_norm = std::sqrt(grad2);

    const RxDecisionProbs probs = rx_decision_probs(model, problem.query.tx_prefix,
                                                    ev.histories.front(), problem.query.rx_thresholds);
    check.upsilon_value = upsilon(xis.front(), n, probs.nu_k.front(), probs.sigma_k.front(),
                                  probs.alpha_sym, probs.beta_sym, problem.query.p1);
    return check;
}

}  // namespace molcom
