#pragma once

#include <functional>
#include <span>

#include "shield/dynamics.hpp"

namespace shield {

/// Deterministic next-state source used by the grid solvers and the filter,
/// together with the epistemic uncertainty of each transition.
class TransitionModel {
public:
    virtual ~TransitionModel() = default;

    /// For each state, the predicted next state under action `a` and the
    /// transition's uncertainty u = D(z, a).
    virtual void predict(std::span<const DubinsState> states, ActionId a,
                         std::span<DubinsState> next, std::span<double> u) const = 0;

    DubinsState next(const DubinsState& s, ActionId a, double* u = nullptr) const;
};

/// Privileged dynamics; uncertainty is identically zero.
class TrueDynamics final : public TransitionModel {
public:
    explicit TrueDynamics(WorldConfig cfg) : cfg_(std::move(cfg)) {}

    void predict(std::span<const DubinsState> states, ActionId a, std::span<DubinsState> next,
                 std::span<double> u) const override;

private:
    WorldConfig cfg_;
};

/// Failure margin used as the known-failure term: analytic or learned.
using MarginFn = std::function<double(const DubinsState&)>;

}  // namespace shield
