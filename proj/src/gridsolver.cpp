#include "shield/gridsolver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>
#include <vector>

#include "shield/errors.hpp"

namespace shield {

void TrueDynamics::predict(std::span<const DubinsState> states, ActionId a,
                           std::span<DubinsState> next, std::span<double> u) const {
    for (std::size_t i = 0; i < states.size(); ++i) {
        next[i] = step(states[i], a, cfg_);
        u[i] = 0.0;
    }
}

DubinsState TransitionModel::next(const DubinsState& s, ActionId a, double* u) const {
    DubinsState out;
    double uu = 0.0;
    predict(std::span(&s, 1), a, std::span(&out, 1), std::span(&uu, 1));
    if (u) *u = uu;
    return out;
}

void validate(const SolveConfig& sc) {
    require(sc.gamma >= 0.0 && sc.gamma <= 1.0, ErrorCode::InvalidArgument,
            "gamma must lie in [0, 1]");
    require(sc.tol > 0.0 && sc.maxSweeps >= 1 && sc.workers >= 1, ErrorCode::InvalidArgument,
            "tol > 0, maxSweeps >= 1 and workers >= 1 required");
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Problem {
    std::vector<double> margin;      // l at each node
    std::vector<Stencil> stencils;   // node-major, kNumActions per node
    std::vector<double> penalty;     // same layout; +inf when inactive
};

template <typename F>
void parallel_for(std::size_t n, int workers, F&& body) {
    if (workers <= 1 || n < 4096) {
        body(std::size_t{0}, n);
        return;
    }
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&body, lo, hi] { body(lo, hi); });
    }
}

ValueGrid iterate(const Grid3& grid, const Problem& p, const SolveConfig& sc) {
    const std::size_t n = grid.size();
    std::vector<double> cur = p.margin;
    std::vector<double> nxt(n);
    std::vector<double> chunkResidual;
    const double g = sc.gamma;

    ValueGrid out;
    out.grid = grid;
    out.meta.gamma = g;

    for (int sweep = 1; sweep <= sc.maxSweeps; ++sweep) {
        const int workers = sc.workers;
        const std::size_t chunk = (n + workers - 1) / workers;
        chunkResidual.assign(static_cast<std::size_t>(workers), 0.0);
        parallel_for(n, workers, [&](std::size_t lo, std::size_t hi) {
            double r = 0.0;
            for (std::size_t i = lo; i < hi; ++i) {
                double best = -kInf;
                for (int a = 0; a < kNumActions; ++a) {
                    const std::size_t j = i * kNumActions + static_cast<std::size_t>(a);
                    const double v = std::min(p.penalty[j], interpolate(grid, cur, p.stencils[j]));
                    best = std::max(best, v);
                }
                const double l = p.margin[i];
                const double v = (1.0 - g) * l + g * std::min(l, best);
                r = std::max(r, std::abs(v - cur[i]));
                nxt[i] = v;
            }
            chunkResidual[lo / chunk] = std::max(chunkResidual[lo / chunk], r);
        });
        cur.swap(nxt);
        out.meta.iterations = sweep;
        out.meta.residual = *std::max_element(chunkResidual.begin(), chunkResidual.end());
        out.meta.residualHistory.push_back(out.meta.residual);
        if (out.meta.residual < sc.tol) {
            out.meta.converged = true;
            break;
        }
    }
    out.values = std::move(cur);
    return out;
}

}  // namespace

ValueGrid solve_ground_truth(const Grid3& grid, const WorldConfig& cfg, const SolveConfig& sc) {
    validate(grid);
    validate(cfg);
    validate(sc);
    const std::size_t n = grid.size();
    Problem p;
    p.margin.resize(n);
    p.stencils.resize(n * kNumActions);
    p.penalty.assign(n * kNumActions, kInf);
    for (std::size_t i = 0; i < n; ++i) {
        const DubinsState s = grid.node(i);
        p.margin[i] = margin(s, cfg.failure);
        for (int a = 0; a < kNumActions; ++a) {
            p.stencils[i * kNumActions + a] = make_stencil(grid, step(s, ActionId(a), cfg));
        }
    }
    return iterate(grid, p, sc);
}

double augmented_value(double v0, double u, const OodPenalty& penalty) {
    if (penalty.kappa == 0.0) return v0;
    return std::min(penalty.kappa * (penalty.epsilon - u), v0);
}

ValueGrid solve_uncertainty_aware(const Grid3& grid, const TransitionModel& model,
                                  const MarginFn& marginFn, const WorldConfig& cfg,
                                  const OodPenalty& penalty, const SolveConfig& sc) {
    validate(grid);
    validate(cfg);
    validate(sc);
    require(!std::isnan(penalty.epsilon), ErrorCode::UncalibratedThreshold,
            "epsilon is NaN; calibrate before solving");
    require(penalty.kappa >= 0.0, ErrorCode::InvalidArgument, "kappa must be >= 0");

    const std::size_t n = grid.size();
    Problem p;
    p.margin.resize(n);
    p.stencils.resize(n * kNumActions);
    p.penalty.resize(n * kNumActions);

    constexpr std::size_t kBatch = 8192;
    std::vector<DubinsState> states;
    std::vector<DubinsState> next(kBatch);
    std::vector<double> u(kBatch);
    for (std::size_t lo = 0; lo < n; lo += kBatch) {
        const std::size_t hi = std::min(n, lo + kBatch);
        states.clear();
        for (std::size_t i = lo; i < hi; ++i) {
            states.push_back(grid.node(i));
            p.margin[i] = marginFn(states.back());
        }
        for (int a = 0; a < kNumActions; ++a) {
            model.predict(states, ActionId(a), std::span(next).first(hi - lo),
                          std::span(u).first(hi - lo));
            for (std::size_t i = lo; i < hi; ++i) {
                const DubinsState& z = next[i - lo];
                const std::size_t j = i * kNumActions + static_cast<std::size_t>(a);
                p.stencils[j] = make_stencil(grid, z);
                const bool exempt = penalty.bboxExempt && !in_bbox(z, cfg);
                p.penalty[j] = (penalty.kappa == 0.0 || exempt)
                                   ? kInf
                                   : penalty.kappa * (penalty.epsilon - u[i - lo]);
            }
        }
    }
    return iterate(grid, p, sc);
}

ActionId argmax_action(const std::array<double, kNumActions>& values) {
    int best = 0;
    for (int a = 1; a < kNumActions; ++a) {
        if (values[static_cast<std::size_t>(a)] > values[static_cast<std::size_t>(best)]) best = a;
    }
    return ActionId(best);
}

ActionId greedy_action(const ValueGrid& vg, const DubinsState& s, const WorldConfig& cfg) {
    std::array<double, kNumActions> v{};
    for (int a = 0; a < kNumActions; ++a) {
        v[static_cast<std::size_t>(a)] = interpolate(vg, step(s, ActionId(a), cfg));
    }
    return argmax_action(v);
}

ActionId greedy_action(const ValueGrid& vg, const DubinsState& s, const TransitionModel& model) {
    std::array<double, kNumActions> v{};
    for (int a = 0; a < kNumActions; ++a) {
        v[static_cast<std::size_t>(a)] = interpolate(vg, model.next(s, ActionId(a)));
    }
    return argmax_action(v);
}

}  // namespace shield
