#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "shield/dynamics.hpp"
#include "shield/grid.hpp"

namespace shield {

enum class TrajectorySource { Expert, Random };

/// states has T+1 entries, actions T, labels T+1 (+1 safe, -1 failure).
struct Trajectory {
    TrajectorySource source = TrajectorySource::Random;
    std::vector<DubinsState> states;
    std::vector<ActionId> actions;
    std::vector<int> labels;

    std::size_t length() const { return actions.size(); }
    bool operator==(const Trajectory&) const = default;
};

struct Provenance {
    int nExpert = 0;
    int nRandom = 0;
    int horizon = 0;

    bool operator==(const Provenance&) const = default;
};

struct Dataset {
    std::vector<Trajectory> trajectories;
    std::uint64_t seed = 0;
    Provenance provenance;

    std::size_t transitions() const;
};

int failure_label(const DubinsState& s, const FailureSpec& f);

/// Replays the actions through `step` and recomputes labels; throws
/// Format on any mismatch.
void verify(const Trajectory& tr, const WorldConfig& cfg);

/// Expert data from the ground-truth value: greedy fallback whenever the
/// interpolated value drops below `boundary`, uniform random actions
/// otherwise. Starts are drawn uniformly from grid nodes with V > boundary.
std::vector<Trajectory> gen_expert(const ValueGrid& gt, int n, int horizon, double boundary,
                                   const WorldConfig& cfg, std::uint64_t seed);

/// Uniform starts in the box, uniform actions, truncated at the first failure.
std::vector<Trajectory> gen_random(int n, int horizon, const WorldConfig& cfg, std::uint64_t seed);

Dataset make_dataset(const ValueGrid& gt, int nExpert, int nRandom, int horizon, double boundary,
                     const WorldConfig& cfg, std::uint64_t seed);

/// Uniform selection of whole trajectories into the calibration set; both
/// outputs keep the original relative order.
std::pair<Dataset, Dataset> split(const Dataset& d, int nCalib, std::uint64_t seed);

}  // namespace shield
