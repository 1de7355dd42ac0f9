#include <cmath>
#include <limits>

#include "doctest.h"
#include "shield/errors.hpp"
#include "shield/eval.hpp"
#include "shield/filter.hpp"
#include "shield/gridsolver.hpp"

using namespace shield;

namespace {

const ValueGrid& circle_gt() {
    static const ValueGrid gt = [] {
        SolveConfig sc;
        return solve_ground_truth(Grid3{41, 41, 31, -1, 1, -1, 1}, WorldConfig{}, sc);
    }();
    return gt;
}

// True dynamics with a fixed uncertainty per action.
class FixedUncertainty final : public TransitionModel {
public:
    FixedUncertainty(WorldConfig w, std::array<double, kNumActions> u) : truth_(std::move(w)), u_(u) {}
    void predict(std::span<const DubinsState> states, ActionId a, std::span<DubinsState> next,
                 std::span<double> u) const override {
        truth_.predict(states, a, next, u);
        for (auto& x : u) x = u_[static_cast<std::size_t>(a.index())];
    }

private:
    TrueDynamics truth_;
    std::array<double, kNumActions> u_;
};

SafetySolution gt_solution() { return SafetySolution(GridSolution{circle_gt(), OodPenalty{0.0, 0.0, true}, {}}); }

// Nodes with comfortable value whose heading ray meets the obstacle.
std::vector<DubinsState> risky_starts() {
    std::vector<DubinsState> out;
    for (const auto& s : challenging_starts(circle_gt(), WorldConfig{}.failure, 300, 1)) {
        if (interpolate(circle_gt(), s) >= 0.1) out.push_back(s);
    }
    return out;
}

}  // namespace

TEST_CASE("the filter passes a safe, in-distribution task action unchanged") {
    const WorldConfig w;
    const TrueDynamics truth(w);
    const auto sol = gt_solution();
    const DubinsState z{-0.9, 0.9, 0.0};
    const FilterParams p{0.0, 0.1};
    const auto d = filter_step(z, ActionId(0), sol, truth, p);
    REQUIRE(d.executed.has_value());
    CHECK(*d.executed == ActionId(0));
    CHECK_FALSE(d.intervened);
    CHECK_FALSE(d.halted);
    CHECK(d.uTask == 0.0);
    CHECK_FALSE(d.uFallback.has_value());
    CHECK(d.valueNext == interpolate(circle_gt(), step(z, ActionId(0), w)));
}

TEST_CASE("an unsafe task action is replaced by the fallback") {
    const WorldConfig w;
    const TrueDynamics truth(w);
    const auto sol = gt_solution();
    const auto starts = risky_starts();
    REQUIRE(!starts.empty());
    int checked = 0;
    for (const auto& s : starts) {
        DubinsState z = s;
        // drive straight until the filter objects
        for (int t = 0; t < 60; ++t) {
            const auto d = filter_step(z, ActionId::straight(), sol, truth, {0.0, 0.1});
            if (d.intervened) {
                CHECK(d.valueNext <= 0.1);
                REQUIRE(d.executed.has_value());
                CHECK(*d.executed == sol.fallback_action(z, truth));
                CHECK(*d.executed == greedy_action(circle_gt(), z, w));
                ++checked;
                break;
            }
            z = step(z, ActionId::straight(), w);
        }
    }
    CHECK(checked == static_cast<int>(starts.size()));
}

TEST_CASE("uncertainty decides between pass, fallback and halt") {
    const WorldConfig w;
    const auto sol = gt_solution();
    const DubinsState z{-0.9, 0.9, 0.0};

    SUBCASE("task action too uncertain, fallback certain") {
        const FixedUncertainty m(w, {0.0, 1.0, 0.0});
        const auto d = filter_step(z, ActionId(1), sol, m, {0.5, 0.1});
        CHECK(d.intervened);
        CHECK_FALSE(d.halted);
        REQUIRE(d.executed.has_value());
        CHECK(*d.executed != ActionId(1));
        CHECK(d.uFallback == 0.0);
    }
    SUBCASE("everything uncertain halts") {
        const FixedUncertainty m(w, {1.0, 1.0, 1.0});
        const auto d = filter_step(z, ActionId(1), sol, m, {0.5, 0.1});
        CHECK(d.intervened);
        CHECK(d.halted);
        CHECK_FALSE(d.executed.has_value());
        CHECK(d.uTask == 1.0);
    }
    SUBCASE("the threshold is inclusive") {
        const FixedUncertainty m(w, {0.5, 0.5, 0.5});
        const auto d = filter_step(z, ActionId(1), sol, m, {0.5, 0.1});
        CHECK_FALSE(d.intervened);
    }
    SUBCASE("an uncalibrated threshold is refused") {
        const TrueDynamics truth(w);
        try {
            filter_step(z, ActionId(1), sol, truth, {std::numeric_limits<double>::quiet_NaN(), 0.1});
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::UncalibratedThreshold);
        }
    }
}

TEST_CASE("a larger delta never intervenes less") {
    const WorldConfig w;
    const TrueDynamics truth(w);
    const auto sol = gt_solution();
    const Grid3& g = circle_gt().grid;
    for (std::size_t n = 0; n < g.size(); n += 37) {
        const DubinsState z = g.node(n);
        for (int a = 0; a < kNumActions; ++a) {
            bool prev = false;
            for (double delta : {-0.2, 0.0, 0.05, 0.1, 0.3}) {
                const bool now = filter_step(z, ActionId(a), sol, truth, {0.0, delta}).intervened;
                REQUIRE((!prev || now));
                prev = now;
            }
        }
    }
}

TEST_CASE("rollouts") {
    const WorldConfig w;
    const TrueDynamics truth(w);
    const auto sol = gt_solution();

    SUBCASE("a start inside the failure set fails at t = 0") {
        const auto r = rollout_filtered({0.0, 0.0, 0.0}, random_policy(), sol, truth, {0.0, 0.1}, 50, w, 3);
        CHECK(r.outcome == Outcome::Failure);
        CHECK(r.states.size() == 1);
        CHECK(r.records.empty());
        CHECK(rollout_unfiltered({0.0, 0.0, 0.0}, random_policy(), 50, w, 3).outcome == Outcome::Failure);
    }
    SUBCASE("a halt ends the rollout") {
        const FixedUncertainty m(w, {1.0, 1.0, 1.0});
        const auto r = rollout_filtered({-0.9, 0.9, 0.0}, random_policy(), sol, m, {0.5, 0.1}, 50, w, 3);
        CHECK(r.outcome == Outcome::Halted);
        CHECK(r.records.size() == 1);
        CHECK(r.states.size() == 1);
    }
    SUBCASE("rollouts are deterministic and follow the executed actions") {
        const DubinsState s{-0.7, 0.7, -0.5};
        const auto a = rollout_filtered(s, random_policy(), sol, truth, {0.0, 0.1}, 100, w, 9);
        const auto b = rollout_filtered(s, random_policy(), sol, truth, {0.0, 0.1}, 100, w, 9);
        REQUIRE(a.states.size() == b.states.size());
        for (std::size_t i = 0; i < a.states.size(); ++i) CHECK(a.states[i] == b.states[i]);
        for (std::size_t t = 0; t < a.records.size(); ++t) {
            CHECK(a.states[t + 1] == step(a.states[t], *a.records[t].decision.executed, w));
        }
    }
    SUBCASE("replay straight at the obstacle") {
        const auto starts = risky_starts();
        int unfilteredFailures = 0, filteredFailures = 0, interventions = 0;
        for (const auto& s : starts) {
            const std::vector<ActionId> script(60, ActionId::straight());
            unfilteredFailures += rollout_unfiltered(s, replay_policy(script), 60, w, 1).outcome == Outcome::Failure;
            const auto r = rollout_filtered(s, replay_policy(script), sol, truth, {0.0, 0.1}, 60, w, 1);
            filteredFailures += r.outcome == Outcome::Failure;
            interventions += r.interventions > 0;
        }
        CHECK(unfilteredFailures == static_cast<int>(starts.size()));
        CHECK(filteredFailures == 0);
        CHECK(interventions == static_cast<int>(starts.size()));
    }
}

TEST_CASE("grid fallback respects the OOD penalty") {
    const WorldConfig w;
    // Only action 2 is in distribution.
    const FixedUncertainty m(w, {1.0, 1.0, 0.0});
    const SafetySolution sol(GridSolution{circle_gt(), OodPenalty{0.2, 1.0, false}, w});
    const DubinsState z{-0.9, 0.9, 0.0};
    CHECK(sol.fallback_action(z, m) == ActionId(2));
    const SafetySolution unaware(GridSolution{circle_gt(), OodPenalty{0.2, 0.0, false}, w});
    CHECK(unaware.fallback_action(z, m) == greedy_action(circle_gt(), z, w));
}

TEST_CASE("outcome names") {
    CHECK(to_string(Outcome::Safe) == "safe");
    CHECK(to_string(Outcome::Failure) == "failure");
    CHECK(to_string(Outcome::Halted) == "halted");
}

TEST_CASE("successors outside the exemption box pass the uncertainty test") {
    const WorldConfig w;
    const auto sol = gt_solution();
    const FixedUncertainty m(w, {1.0, 1.0, 1.0});
    const DubinsState leaving{0.99, 0.0, 0.0};
    const DubinsState inside{0.5, 0.9, 0.0};
    REQUIRE_FALSE(in_bbox(step(leaving, ActionId(1), w), w));
    REQUIRE(in_bbox(step(inside, ActionId(1), w), w));

    const FilterParams exempt = filter_params(0.5, 0.1, OodPenalty{0.5, 1.0, true}, w);
    CHECK(exempt.exemptBox == w.bbox);
    CHECK(filter_params(0.5, 0.1, OodPenalty{0.5, 1.0, false}, w).exemptBox == 0.0);

    const auto out = filter_step(leaving, ActionId(1), sol, m, exempt);
    CHECK_FALSE(out.intervened);
    CHECK(out.uTask == 1.0);
    CHECK(filter_step(leaving, ActionId(1), sol, m, {0.5, 0.1}).halted);
    CHECK(filter_step(inside, ActionId(1), sol, m, exempt).halted);
}
