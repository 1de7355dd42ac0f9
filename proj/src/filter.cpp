#include "shield/filter.hpp"

#include <cmath>
#include <memory>

#include "shield/errors.hpp"

namespace shield {

double SafetySolution::monitor_value(const DubinsState& z) const {
    if (const auto* g = std::get_if<GridSolution>(&impl_)) return interpolate(g->values, z);
    return shield::monitor_value(std::get<QSolution>(impl_).q, z);
}

std::vector<double> SafetySolution::monitor_values(std::span<const DubinsState> z) const {
    if (const auto* q = std::get_if<QSolution>(&impl_)) return shield::monitor_values(q->q, z);
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = monitor_value(z[i]);
    return out;
}

ActionId SafetySolution::fallback_action(const DubinsState& z, const TransitionModel& model) const {
    if (const auto* q = std::get_if<QSolution>(&impl_)) return shield::fallback_action(q->q, z);
    const auto& g = std::get<GridSolution>(impl_);
    std::array<double, kNumActions> values{};
    for (int a = 0; a < kNumActions; ++a) {
        double u = 0.0;
        const DubinsState next = model.next(z, ActionId(a), &u);
        const bool exempt = g.penalty.bboxExempt && !in_bbox(next, g.world);
        const double v = interpolate(g.values, next);
        values[static_cast<std::size_t>(a)] = exempt ? v : augmented_value(v, u, g.penalty);
    }
    return argmax_action(values);
}

FilterParams filter_params(double epsilon, double delta, const OodPenalty& penalty, const WorldConfig& world) {
    return FilterParams{epsilon, delta, penalty.bboxExempt ? world.bbox : 0.0};
}

namespace {

bool certain_enough(double u, const DubinsState& next, const FilterParams& p) {
    if (p.exemptBox > 0.0 && (std::abs(next.px) > p.exemptBox || std::abs(next.py) > p.exemptBox)) return true;
    return u <= p.epsilon;
}

}  // namespace

FilterDecision filter_step(const DubinsState& z, ActionId aTask, const SafetySolution& sol,
                           const TransitionModel& model, const FilterParams& p) {
    require(!std::isnan(p.epsilon), ErrorCode::UncalibratedThreshold, "epsilon is not calibrated");
    FilterDecision d;
    d.aTask = aTask;
    const DubinsState next = model.next(z, aTask, &d.uTask);
    d.valueNext = sol.monitor_value(next);
    if (certain_enough(d.uTask, next, p) && d.valueNext > p.delta) {
        d.executed = aTask;
        return d;
    }
    d.intervened = true;
    const ActionId fb = sol.fallback_action(z, model);
    double uFb = 0.0;
    const DubinsState nextFb = model.next(z, fb, &uFb);
    d.uFallback = uFb;
    if (certain_enough(uFb, nextFb, p)) {
        d.executed = fb;
    } else {
        d.halted = true;
    }
    return d;
}

std::string to_string(Outcome o) {
    switch (o) {
        case Outcome::Safe: return "safe";
        case Outcome::Failure: return "failure";
        case Outcome::Halted: return "halted";
    }
    return "unknown";
}

TaskPolicy random_policy() {
    return [](const DubinsState&, Rng& rng) { return ActionId(uniform_int(rng, 0, kNumActions - 1)); };
}

TaskPolicy replay_policy(std::vector<ActionId> actions) {
    auto t = std::make_shared<std::size_t>(0);
    return [actions = std::move(actions), t](const DubinsState&, Rng&) {
        const std::size_t i = (*t)++;
        return i < actions.size() ? actions[i] : ActionId::straight();
    };
}

RolloutResult rollout_filtered(const DubinsState& start, const TaskPolicy& task, const SafetySolution& sol,
                               const TransitionModel& model, const FilterParams& p, int horizon,
                               const WorldConfig& world, std::uint64_t seed) {
    require(horizon >= 0, ErrorCode::InvalidArgument, "horizon must be >= 0");
    Rng rng = make_rng(seed, 0);
    RolloutResult r;
    r.states.push_back(start);
    if (margin(start, world.failure) < 0.0) {
        r.outcome = Outcome::Failure;
        return r;
    }
    DubinsState s = start;
    for (int t = 0; t < horizon; ++t) {
        const FilterDecision d = filter_step(s, task(s, rng), sol, model, p);
        r.records.push_back({t, s, d});
        if (d.intervened) ++r.interventions;
        if (d.halted) {
            r.outcome = Outcome::Halted;
            return r;
        }
        s = step(s, *d.executed, world);
        r.states.push_back(s);
        if (margin(s, world.failure) < 0.0) {
            r.outcome = Outcome::Failure;
            return r;
        }
    }
    return r;
}

RolloutResult rollout_unfiltered(const DubinsState& start, const TaskPolicy& task, int horizon,
                                 const WorldConfig& world, std::uint64_t seed) {
    require(horizon >= 0, ErrorCode::InvalidArgument, "horizon must be >= 0");
    Rng rng = make_rng(seed, 0);
    RolloutResult r;
    r.states.push_back(start);
    DubinsState s = start;
    if (margin(s, world.failure) < 0.0) {
        r.outcome = Outcome::Failure;
        return r;
    }
    for (int t = 0; t < horizon; ++t) {
        const ActionId a = task(s, rng);
        FilterDecision d;
        d.aTask = a;
        d.executed = a;
        r.records.push_back({t, s, d});
        s = step(s, a, world);
        r.states.push_back(s);
        if (margin(s, world.failure) < 0.0) {
            r.outcome = Outcome::Failure;
            return r;
        }
    }
    return r;
}

}  // namespace shield
