#include "shield/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "shield/errors.hpp"

namespace shield {

namespace {

double ratio(long num, long den) { return den > 0 ? static_cast<double>(num) / static_cast<double>(den) : 0.0; }

}  // namespace

ConfusionStats make_stats(long tp, long fp, long tn, long fn) {
    ConfusionStats s;
    s.tp = tp;
    s.fp = fp;
    s.tn = tn;
    s.fn = fn;
    s.tpr = ratio(tp, tp + fn);
    s.tnr = ratio(tn, tn + fp);
    s.fpr = ratio(fp, tn + fp);
    s.precision = ratio(tp, tp + fp);
    s.f1 = s.precision + s.tpr > 0.0 ? 2.0 * s.precision * s.tpr / (s.precision + s.tpr) : 0.0;
    s.bacc = 0.5 * (s.tpr + s.tnr);
    return s;
}

double one_cell_slack(const Grid3& g) { return g.cell(); }

ConfusionStats classify_vs_ground_truth(std::span<const double> monitor, const ValueGrid& gt,
                                        double threshold, double slack) {
    require(monitor.size() == gt.values.size(), ErrorCode::GridMismatch,
            "monitor values do not cover the ground-truth grid");
    long tp = 0, fp = 0, tn = 0, fn = 0, excluded = 0;
    for (std::size_t i = 0; i < monitor.size(); ++i) {
        const double v = gt.values[i];
        if (std::abs(v) < slack) {
            ++excluded;
            continue;
        }
        const bool actualSafe = v >= 0.0;
        const bool predictedSafe = monitor[i] > threshold;
        if (actualSafe) {
            ++(predictedSafe ? tp : fn);
        } else {
            ++(predictedSafe ? fp : tn);
        }
    }
    ConfusionStats s = make_stats(tp, fp, tn, fn);
    s.excluded = excluded;
    return s;
}

ConfusionStats classify_vs_ground_truth(const SafetySolution& sol, const ValueGrid& gt, const Grid3& grid,
                                        double threshold, double slack) {
    require(grid == gt.grid, ErrorCode::GridMismatch, "evaluation grid differs from the ground-truth grid");
    if (sol.is_grid()) {
        const auto& v = sol.grid().values;
        if (v.grid == grid) return classify_vs_ground_truth(v.values, gt, threshold, slack);
    }
    std::vector<DubinsState> nodes(grid.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) nodes[i] = grid.node(i);
    const auto m = sol.monitor_values(nodes);
    return classify_vs_ground_truth(m, gt, threshold, slack);
}

SafetySummary summarize(std::span<const RolloutResult> results) {
    SafetySummary s;
    s.total = static_cast<int>(results.size());
    for (const auto& r : results) {
        switch (r.outcome) {
            case Outcome::Safe: ++s.safe; break;
            case Outcome::Failure: ++s.failures; break;
            case Outcome::Halted: ++s.halted; break;
        }
    }
    s.failureRate = ratio(s.failures, s.total);
    s.safetyRate = s.total > 0 ? 1.0 - s.failureRate : 0.0;
    return s;
}

SafetySummary safety_rate(std::span<const DubinsState> starts, const TaskPolicy& task,
                          const SafetySolution* sol, const TransitionModel* model, const FilterParams& p,
                          int horizon, const WorldConfig& world, std::uint64_t seed,
                          std::vector<RolloutResult>* keep) {
    require(!starts.empty(), ErrorCode::EmptyDataset, "no rollout starts");
    require((sol == nullptr) == (model == nullptr), ErrorCode::InvalidArgument,
            "a filtered rollout needs both a solution and a model");
    std::vector<RolloutResult> results;
    results.reserve(starts.size());
    for (std::size_t i = 0; i < starts.size(); ++i) {
        const std::uint64_t s = mix_seed(seed, i);
        results.push_back(sol ? rollout_filtered(starts[i], task, *sol, *model, p, horizon, world, s)
                              : rollout_unfiltered(starts[i], task, horizon, world, s));
    }
    const SafetySummary summary = summarize(results);
    if (keep) *keep = std::move(results);
    return summary;
}

bool heading_hits_failure(const DubinsState& s, const FailureSpec& f, double range) {
    constexpr double kStep = 0.005;
    const double c = std::cos(s.theta), sn = std::sin(s.theta);
    for (double r = 0.0; r <= range + 1e-12; r += kStep) {
        if (in_failure({s.px + r * c, s.py + r * sn, s.theta}, f)) return true;
    }
    return false;
}

std::vector<DubinsState> challenging_starts(const ValueGrid& gt, const FailureSpec& f, int count,
                                            std::uint64_t seed) {
    require(count >= 0, ErrorCode::InvalidArgument, "count must be >= 0");
    std::vector<DubinsState> pool;
    for (std::size_t i = 0; i < gt.values.size(); ++i) {
        if (gt.values[i] <= 0.0) continue;
        const DubinsState s = gt.grid.node(i);
        if (heading_hits_failure(s, f)) pool.push_back(s);
    }
    require(static_cast<std::size_t>(count) <= pool.size(), ErrorCode::SamplingExhausted,
            "only " + std::to_string(pool.size()) + " challenging states available");
    Rng rng = make_rng(seed, 0);
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(count));
    std::sort(idx.begin(), idx.end());
    std::vector<DubinsState> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(pool[i]);
    return out;
}

}  // namespace shield
