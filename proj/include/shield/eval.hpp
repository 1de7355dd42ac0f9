#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "shield/filter.hpp"
#include "shield/grid.hpp"

namespace shield {

/// Positive class is SAFE (V_gt >= 0).
struct ConfusionStats {
    long tp = 0, fp = 0, tn = 0, fn = 0;
    double tpr = 0.0, tnr = 0.0, fpr = 0.0, precision = 0.0, f1 = 0.0, bacc = 0.0;
    long excluded = 0;  ///< nodes skipped for |V_gt| below the slack
};

/// Fills the rates from the counts; a rate with an empty denominator is 0.
ConfusionStats make_stats(long tp, long fp, long tn, long fn);

/// Predicted safe iff monitor > threshold, against V_gt >= 0, skipping nodes
/// with |V_gt| < slack. monitor has one entry per grid node.
ConfusionStats classify_vs_ground_truth(std::span<const double> monitor, const ValueGrid& gt,
                                        double threshold, double slack);

/// Evaluates the solution's monitor at every node of gt's grid.
ConfusionStats classify_vs_ground_truth(const SafetySolution& sol, const ValueGrid& gt, const Grid3& grid,
                                        double threshold, double slack);

/// One grid cell, the default exclusion slack.
double one_cell_slack(const Grid3& g);

struct SafetySummary {
    int total = 0;
    int safe = 0;
    int failures = 0;
    int halted = 0;
    double safetyRate = 0.0;  ///< fraction with outcome != Failure
    double failureRate = 0.0;
};

SafetySummary summarize(std::span<const RolloutResult> results);

/// Rolls out every start and summarises; filtered when sol is given.
SafetySummary safety_rate(std::span<const DubinsState> starts, const TaskPolicy& task,
                          const SafetySolution* sol, const TransitionModel* model, const FilterParams& p,
                          int horizon, const WorldConfig& world, std::uint64_t seed,
                          std::vector<RolloutResult>* keep = nullptr);

/// True when the ray from (px, py) along theta enters the failure set within range.
bool heading_hits_failure(const DubinsState& s, const FailureSpec& f, double range = 1.5);

/// Uniform sample without replacement of grid nodes with V_gt > 0 whose
/// heading ray meets the failure set within 1.5 m.
std::vector<DubinsState> challenging_starts(const ValueGrid& gt, const FailureSpec& f, int count,
                                            std::uint64_t seed);

}  // namespace shield
