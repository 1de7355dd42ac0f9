#pragma once

#include <functional>
#include <optional>
#include <variant>
#include <vector>

#include "shield/gridsolver.hpp"
#include "shield/safelearn.hpp"
#include "shield/transition.hpp"

namespace shield {

/// Uncertainty-aware grid value V0 with the penalty it was solved under.
struct GridSolution {
    ValueGrid values;
    OodPenalty penalty;
    WorldConfig world;
};

struct QSolution {
    QFunction q;
};

/// Monitor and fallback over either solver's output.
class SafetySolution {
public:
    SafetySolution(GridSolution g) : impl_(std::move(g)) {}
    SafetySolution(QSolution q) : impl_(std::move(q)) {}

    double monitor_value(const DubinsState& z) const;
    /// Grid: argmax_a min{kappa (eps - u_a), V0(z'_a)} under the model's mean
    /// transition. Q: argmax_a Q(z, a). Ties go to the lowest index.
    ActionId fallback_action(const DubinsState& z, const TransitionModel& model) const;
    std::vector<double> monitor_values(std::span<const DubinsState> z) const;

    bool is_grid() const { return std::holds_alternative<GridSolution>(impl_); }
    const GridSolution& grid() const { return std::get<GridSolution>(impl_); }
    const QSolution& q() const { return std::get<QSolution>(impl_); }

private:
    std::variant<GridSolution, QSolution> impl_;
};

struct FilterParams {
    double epsilon = 0.0;
    double delta = 0.1;
    /// Half-extent of the exemption box; > 0 lets transitions whose predicted
    /// successor leaves the box pass the uncertainty test.
    double exemptBox = 0.0;
};

/// Filter parameters with the box exemption of the solved penalty.
FilterParams filter_params(double epsilon, double delta, const OodPenalty& penalty, const WorldConfig& world);

struct FilterDecision {
    ActionId aTask;
    std::optional<ActionId> executed;  ///< empty on HALT
    bool intervened = false;
    bool halted = false;
    double valueNext = 0.0;  ///< monitor at the predicted successor under aTask
    double uTask = 0.0;
    std::optional<double> uFallback;
};

/// Pass aTask iff u(z, aTask) <= eps and V(z') > delta; otherwise run the
/// fallback if its own uncertainty is <= eps, else HALT. With an exemption box,
/// a successor outside it passes the uncertainty test; uTask and uFallback
/// stay the raw values. The model supplies the
/// predicted successor and the uncertainty of every action.
FilterDecision filter_step(const DubinsState& z, ActionId aTask, const SafetySolution& sol,
                           const TransitionModel& model, const FilterParams& p);

enum class Outcome { Safe, Failure, Halted };

std::string to_string(Outcome o);

struct RolloutRecord {
    int t = 0;
    DubinsState state;
    FilterDecision decision;
};

struct RolloutResult {
    std::vector<DubinsState> states;
    std::vector<RolloutRecord> records;
    Outcome outcome = Outcome::Safe;
    int interventions = 0;
};

using TaskPolicy = std::function<ActionId(const DubinsState&, Rng&)>;

TaskPolicy random_policy();
/// Replays a fixed action sequence, then goes straight.
TaskPolicy replay_policy(std::vector<ActionId> actions);

/// Steps the true dynamics with the executed action. Failure iff any visited
/// state has analytic margin < 0; Halted on the first HALT.
RolloutResult rollout_filtered(const DubinsState& start, const TaskPolicy& task, const SafetySolution& sol,
                               const TransitionModel& model, const FilterParams& p, int horizon,
                               const WorldConfig& world, std::uint64_t seed);

/// The same task policy without the filter.
RolloutResult rollout_unfiltered(const DubinsState& start, const TaskPolicy& task, int horizon,
                                 const WorldConfig& world, std::uint64_t seed);

}  // namespace shield
