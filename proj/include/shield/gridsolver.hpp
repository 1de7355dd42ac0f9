#pragma once

#include <array>

#include "shield/grid.hpp"
#include "shield/transition.hpp"

namespace shield {

struct SolveConfig {
    double gamma = 0.9999;  ///< discount in [0, 1], 1 meaning undiscounted
    double tol = 1e-6;
    int maxSweeps = 2000;
    int workers = 1;
};

void validate(const SolveConfig& sc);

/// OOD penalty parameters of the uncertainty-aware margin. kappa == 0 turns the
/// penalty off entirely, which gives the uncertainty-unaware baseline.
struct OodPenalty {
    double epsilon = 0.0;
    double kappa = 1.0;
    bool bboxExempt = true;
};

/// Discounted safety value iteration over the privileged dynamics,
/// V <- (1 - g) l + g min{l, max_a V(f(s, a))}, Jacobi sweeps, V0 = l.
/// meta.converged is false when maxSweeps ran out before residual < tol.
ValueGrid solve_ground_truth(const Grid3& grid, const WorldConfig& cfg, const SolveConfig& sc);

/// Same recursion over a learned transition model whose successors carry an
/// OOD penalty kappa * (epsilon - u_a):
///
///   V0(z) = (1 - g) l(z) + g min{ l(z), max_a min{ kappa (eps - u_a), V0(z'_a) } }.
///
/// V0 is the augmented value at an in-distribution u; the full augmented
/// value is V(z, u) = min{kappa (eps - u), V0(z)}. The penalty is dropped for
/// successors outside the bounding box when bboxExempt is set.
ValueGrid solve_uncertainty_aware(const Grid3& grid, const TransitionModel& model,
                                  const MarginFn& margin, const WorldConfig& cfg,
                                  const OodPenalty& penalty, const SolveConfig& sc);

/// min{kappa (eps - u), V0} with the same kappa == 0 convention.
double augmented_value(double v0, double u, const OodPenalty& penalty);

/// Lowest index wins ties.
ActionId argmax_action(const std::array<double, kNumActions>& values);

/// argmax_a V(f(s, a)) under the privileged dynamics.
ActionId greedy_action(const ValueGrid& vg, const DubinsState& s, const WorldConfig& cfg);
/// argmax_a V(z'_a) under a learned model's mean transition.
ActionId greedy_action(const ValueGrid& vg, const DubinsState& s, const TransitionModel& model);

}  // namespace shield
