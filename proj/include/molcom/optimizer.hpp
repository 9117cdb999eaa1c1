#pragma once
// Molecule-allocation search: minimize the smooth error surrogate over the
// simplex sum(S_k) = N (and jointly over the real-valued FC threshold), with
// multistart projected gradient descent. A lattice search over the true
// semi-analytical error is provided as a cross-check.

#include "molcom/analytics.hpp"
#include "molcom/system_config.hpp"

#include <cstdint>
#include <vector>

namespace molcom {

struct AllocationProblem {
    double n_total = 2000.0;   // molecules per interval across RXs
    ErrorQuery query;          // kind must be SD_ML
    std::uint32_t history_draws = 64;  // frozen histories shared by all evaluations
    std::uint64_t seed = 1;
    std::uint32_t starts = 0;  // 0 -> 20 + 2K
    std::uint32_t max_iters = 300;
};

struct AllocationResult {
    std::vector<double> allocation;  // S_k, sums to n_total
    double xi = 0.0;                 // real-valued threshold at the optimum
    double objective = 0.0;          // q_sharp (gamma form) at the optimum
    double kkt_residual = 0.0;       // projected-gradient norm
    std::uint32_t start_index = 0;   // which start won
    bool converged = false;
};

AllocationResult solve_allocation(const AllocationProblem& problem, const Model& model);

// Evaluate q_fc_sd on the lattice {allocations of n_total in steps of
// grid_step}; throws std::invalid_argument if the lattice would exceed
// 10^4 points. Returns the per-point values in lattice order along with the
// argmin.
struct GridPoint {
    std::vector<double> allocation;
    double value = 0.0;
    double std_err = 0.0;
};

struct GridResult {
    std::vector<GridPoint> points;
    std::size_t argmin = 0;
};

GridResult exhaustive_grid(const AllocationProblem& problem, const Model& model,
                           double grid_step);

// For geometrically symmetric placements: verify the uniform split is a
// stationary point and locally convex along each reduced coordinate, using
// central differences of q_sharp at the adaptive threshold. Throws
// std::invalid_argument when the geometry is not symmetric.
struct SymmetryCheck {
    double gradient_norm = 0.0;
    double min_second_difference = 0.0;  // > 0 means locally convex
    double upsilon_value = 0.0;
};

SymmetryCheck symmetric_local_min_check(const AllocationProblem& problem, const Model& model);

}  // namespace molcom
