#pragma once

#include <span>
#include <utility>
#include <vector>

#include "shield/datagen.hpp"
#include "shield/ensemble.hpp"
#include "shield/uncertainty.hpp"

namespace shield {

struct CalibrationConfig {
    double alphaCal = 0.05;
    double alphaTrans = 0.05;
};

void validate(const CalibrationConfig& cfg);

struct CalibrationResult {
    double epsilonHat = 0.0;  ///< +inf when the rank exceeds N
    bool degenerate = false;
    std::vector<double> trajScores;
    int N = 0;
    CalibrationConfig config;
};

/// The ceil((1 - alphaTrans) * T)-th smallest value; alphaTrans = 0 gives the max.
double traj_score(std::span<const double> us, double alphaTrans);

/// epsilonHat is the ceil((1 - alphaCal)(N + 1))-th smallest score.
CalibrationResult calibrate(std::vector<double> trajScores, const CalibrationConfig& cfg);

/// One score per trajectory from the uncertainty of each of its transitions.
/// Trajectories without transitions (random starts inside the failure set)
/// carry no score and are skipped.
std::vector<double> score_dataset(const Ensemble& ens, UncertaintyMethod method, const Dataset& calib,
                                  double alphaTrans);

/// Which alpha enters C in the Beta(N + 1 - C, C) coverage law.
enum class BetaAlpha { Trans, Cal };

struct CoverageReport {
    double empirical = 0.0;
    double betaA = 0.0;
    double betaB = 0.0;
};

CoverageReport coverage_check(const CalibrationResult& result, std::span<const double> testScores,
                              BetaAlpha which = BetaAlpha::Trans);

}  // namespace shield
