#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include "../support/oracles.hpp"
#include "doctest.h"
#include "shield/errors.hpp"
#include "shield/gridsolver.hpp"
#include "shield/rng.hpp"

using namespace shield;

namespace {

Grid3 coarse() { return Grid3{21, 21, 15, -1, 1, -1, 1}; }

SolveConfig undiscounted(int maxSweeps = 2000) {
    SolveConfig sc;
    sc.gamma = 1.0;
    sc.maxSweeps = maxSweeps;
    return sc;
}

/// True dynamics with a user supplied uncertainty field.
class FieldModel final : public TransitionModel {
public:
    FieldModel(WorldConfig cfg, std::function<double(const DubinsState&, const DubinsState&)> field)
        : cfg_(std::move(cfg)), field_(std::move(field)) {}

    void predict(std::span<const DubinsState> states, ActionId a, std::span<DubinsState> next,
                 std::span<double> u) const override {
        for (std::size_t i = 0; i < states.size(); ++i) {
            next[i] = step(states[i], a, cfg_);
            u[i] = field_(states[i], next[i]);
        }
    }

private:
    WorldConfig cfg_;
    std::function<double(const DubinsState&, const DubinsState&)> field_;
};

}  // namespace

TEST_CASE("interpolation is exact at nodes, linear between, periodic in theta") {
    Grid3 g = coarse();
    ValueGrid vg{g, std::vector<double>(g.size()), {}};
    Rng rng(1);
    for (auto& v : vg.values) v = uniform01(rng);

    CHECK(interpolate(vg, g.node(g.index(4, 7, 3))) == vg.at(4, 7, 3));
    CHECK(interpolate(vg, g.node(g.index(20, 20, 14))) == vg.at(20, 20, 14));

    DubinsState mid = g.node(g.index(4, 7, 3));
    mid.px += 0.5 * g.dx();
    CHECK(interpolate(vg, mid) == doctest::Approx(0.5 * (vg.at(4, 7, 3) + vg.at(5, 7, 3))));

    DubinsState a{0.13, -0.41, -std::numbers::pi};
    DubinsState b{0.13, -0.41, std::numbers::pi};
    CHECK(interpolate(vg, a) == interpolate(vg, b));

    // out-of-bounds queries clamp to the boundary node
    CHECK(interpolate(vg, DubinsState{5.0, 7.0, g.theta(2)}) == vg.at(20, 20, 2));
}

TEST_CASE("ground truth: failure nodes stay negative; discount zero collapses to the margin") {
    Grid3 g = coarse();
    WorldConfig cfg;
    auto vg = solve_ground_truth(g, cfg, undiscounted());
    CHECK(vg.meta.converged);
    CHECK(vg.meta.residual >= 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (margin(g.node(i), cfg.failure) < 0.0) REQUIRE(vg.values[i] < 0.0);
        REQUIRE(std::isfinite(vg.values[i]));
    }

    SolveConfig sc;
    sc.gamma = 0.0;
    sc.maxSweeps = 1;
    auto v0 = solve_ground_truth(g, cfg, sc);
    for (std::size_t i = 0; i < g.size(); ++i) {
        REQUIRE(v0.values[i] == margin(g.node(i), cfg.failure));
    }
}

TEST_CASE("truncated DP matches the exhaustive 6-step action tree far from the obstacle") {
    Grid3 g{41, 41, 31, -1, 1, -1, 1};
    WorldConfig cfg;
    auto v6 = solve_ground_truth(g, cfg, undiscounted(6));
    // (-0.9, 0) heading away from the obstacle
    const std::size_t n = g.index(2, 20, 0);
    const DubinsState s = g.node(n);
    REQUIRE(s.theta == doctest::Approx(-std::numbers::pi));
    const double tree = oracle::action_tree_value(s, 6, cfg);
    CHECK(v6.values[n] > 0.0);
    CHECK(std::abs(v6.values[n] - tree) < g.cell());
}

TEST_CASE("undiscounted residuals are non-increasing from V0 = l") {
    auto vg = solve_ground_truth(coarse(), WorldConfig{}, undiscounted());
    const auto& r = vg.meta.residualHistory;
    REQUIRE(r.size() >= 2);
    for (std::size_t k = 1; k < r.size(); ++k) CHECK(r[k] <= r[k - 1] + 1e-15);
}

TEST_CASE("discounted solve converges on the default grid") {
    auto vg = solve_ground_truth(Grid3{}, WorldConfig{}, SolveConfig{});
    CHECK(vg.meta.converged);
    CHECK(vg.meta.residual < 1e-6);
    CHECK(vg.meta.iterations < 2000);
}

TEST_CASE("non-convergence is flagged, not thrown") {
    auto vg = solve_ground_truth(coarse(), WorldConfig{}, undiscounted(2));
    CHECK_FALSE(vg.meta.converged);
    CHECK(vg.meta.iterations == 2);
}

TEST_CASE("sign agreement with the 8-step action tree on a coarse grid") {
    Grid3 g = coarse();
    WorldConfig cfg;
    auto vg = solve_ground_truth(g, cfg, undiscounted());
    int considered = 0, agree = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (std::abs(vg.values[i]) <= g.cell()) continue;
        ++considered;
        const double tree = oracle::action_tree_value(g.node(i), 8, cfg);
        agree += ((vg.values[i] >= 0.0) == (tree >= 0.0)) ? 1 : 0;
    }
    MESSAGE("agreement " << agree << "/" << considered);
    CHECK(static_cast<double>(agree) / considered >= 0.95);
}

TEST_CASE("greedy fallback keeps the car safe from V >= 0.05 starts") {
    Grid3 g;
    WorldConfig cfg;
    auto vg = solve_ground_truth(g, cfg, undiscounted());
    Rng rng(17);
    int tried = 0;
    while (tried < 100) {
        DubinsState s{uniform01(rng) * 2 - 1, uniform01(rng) * 2 - 1,
                      wrap_angle(uniform01(rng) * 2 * std::numbers::pi)};
        if (interpolate(vg, s) < 0.05) continue;
        ++tried;
        for (int t = 0; t < 300; ++t) {
            s = step(s, greedy_action(vg, s, cfg), cfg);
            REQUIRE(margin(s, cfg.failure) >= 0.0);
        }
    }
}

TEST_CASE("greedy action turns away from an obstacle dead ahead") {
    Grid3 g;
    WorldConfig cfg;
    auto vg = solve_ground_truth(g, cfg, undiscounted());
    const DubinsState s{-0.62, 0.03, 0.0};
    const ActionId a = greedy_action(vg, s, cfg);
    CHECK(a.index() != 1);

    // the same choice from the exhaustive tree: the straight branch is worse
    std::array<double, 3> tree{};
    for (int k = 0; k < 3; ++k) tree[k] = oracle::action_tree_value(step(s, ActionId(k), cfg), 5, cfg);
    CHECK(tree[1] < std::max(tree[0], tree[2]));
}

TEST_CASE("ties resolve to the lowest action index") {
    CHECK(argmax_action({1.0, 0.0, 1.0}).index() == 0);
    CHECK(argmax_action({0.2, 0.2, 0.2}).index() == 0);
    CHECK(argmax_action({0.1, 0.3, 0.2}).index() == 1);

    Grid3 g = coarse();
    ValueGrid flat{g, std::vector<double>(g.size(), 0.7), {}};
    CHECK(greedy_action(flat, DubinsState{0.1, 0.2, 0.3}, WorldConfig{}).index() == 0);
}

TEST_CASE("uncertainty-aware solve with the penalty disabled reproduces ground truth") {
    Grid3 g = coarse();
    WorldConfig cfg;
    TrueDynamics truth(cfg);
    SolveConfig sc;
    auto gt = solve_ground_truth(g, cfg, sc);
    OodPenalty off{0.1, 0.0, true};
    auto ua = solve_uncertainty_aware(
        g, truth, [&](const DubinsState& s) { return margin(s, cfg.failure); }, cfg, off, sc);
    REQUIRE(ua.values.size() == gt.values.size());
    for (std::size_t i = 0; i < g.size(); ++i) REQUIRE(std::abs(ua.values[i] - gt.values[i]) <= sc.tol);
}

TEST_CASE("every action out of distribution forces a negative value") {
    Grid3 g = coarse();
    WorldConfig cfg;
    FieldModel model(cfg, [](const DubinsState&, const DubinsState&) { return 1.0; });
    OodPenalty pen{0.2, 1.0, false};
    auto vg = solve_uncertainty_aware(
        g, model, [](const DubinsState&) { return 5.0; }, cfg, pen, undiscounted());
    for (double v : vg.values) REQUIRE(v <= -pen.kappa * (1.0 - pen.epsilon) + 1e-12);
}

TEST_CASE("OOD-only band is recovered as unsafe") {
    Grid3 g{41, 41, 31, -1, 1, -1, 1};
    WorldConfig cfg;
    cfg.failure = FailureSpec::band(0.6);
    // transitions leaving a state the data never covered are uncertain
    FieldModel model(cfg, [](const DubinsState& z, const DubinsState&) {
        return std::abs(z.py) > 0.6 ? 1.0 : 0.0;
    });
    // the band continues past the box edge, so no exemption here
    OodPenalty pen{0.5, 1.0, false};
    auto vg = solve_uncertainty_aware(
        g, model, [](const DubinsState&) { return 1.0; }, cfg, pen, undiscounted());
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (std::abs(g.node(i).py) > 0.6) REQUIRE(vg.values[i] < 0.0);
    }
}

TEST_CASE("NaN threshold is rejected") {
    WorldConfig cfg;
    TrueDynamics truth(cfg);
    OodPenalty pen{std::numeric_limits<double>::quiet_NaN(), 1.0, true};
    CHECK_THROWS_AS(solve_uncertainty_aware(
                        coarse(), truth, [](const DubinsState&) { return 1.0; }, cfg, pen, SolveConfig{}),
                    Error);
}

TEST_CASE("worker count does not change the solution") {
    Grid3 g{41, 41, 21, -1, 1, -1, 1};
    SolveConfig one = undiscounted();
    SolveConfig many = one;
    many.workers = 4;
    auto a = solve_ground_truth(g, WorldConfig{}, one);
    auto b = solve_ground_truth(g, WorldConfig{}, many);
    CHECK(a.values == b.values);
    CHECK(a.meta.iterations == b.meta.iterations);
}

// Augmented-state reduction on a two-state chain: solving over (z, u) pairs
// explicitly gives V(z, u) = min{kappa (eps - u), V0(z)}.
TEST_CASE("augmented recursion reduces to a state-only recursion") {
    const std::array<double, 2> l{0.8, 0.3};
    const int next[2][3] = {{0, 1, 1}, {0, 1, 0}};
    const double unc[2][3] = {{0.1, 0.9, 0.4}, {0.7, 0.05, 0.2}};
    const double eps = 0.5, kappa = 2.0;

    std::vector<double> us{0.0};
    for (auto& row : unc)
        for (double u : row) us.push_back(u);

    // full recursion over the finite augmented state space
    std::map<std::pair<int, double>, double> full;
    for (int z = 0; z < 2; ++z)
        for (double u : us) full[{z, u}] = std::min(l[z], kappa * (eps - u));
    for (int it = 0; it < 100; ++it) {
        auto upd = full;
        for (int z = 0; z < 2; ++z) {
            for (double u : us) {
                double best = -1e300;
                for (int a = 0; a < 3; ++a) best = std::max(best, full[{next[z][a], unc[z][a]}]);
                upd[{z, u}] = std::min(std::min(l[z], kappa * (eps - u)), best);
            }
        }
        full = upd;
    }

    // reduced recursion
    std::array<double, 2> v0 = l;
    for (int it = 0; it < 100; ++it) {
        auto upd = v0;
        for (int z = 0; z < 2; ++z) {
            double best = -1e300;
            for (int a = 0; a < 3; ++a)
                best = std::max(best, std::min(kappa * (eps - unc[z][a]), v0[next[z][a]]));
            upd[z] = std::min(l[z], best);
        }
        v0 = upd;
    }

    for (int z = 0; z < 2; ++z) {
        for (double u : us) {
            CHECK(full[{z, u}] == doctest::Approx(augmented_value(v0[z], u, OodPenalty{eps, kappa, false})));
        }
    }
}
