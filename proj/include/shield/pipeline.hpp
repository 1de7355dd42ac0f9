#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "shield/config.hpp"
#include "shield/conformal.hpp"
#include "shield/eval.hpp"
#include "shield/filter.hpp"
#include "shield/uncertainty.hpp"

namespace shield {

/// Pipeline stages shared by the command line and the acceptance run. Each
/// stage is a pure function of the config and its inputs.

ValueGrid stage_solve_gt(const ExperimentConfig& cfg);

struct DataSplit {
    Dataset train;
    Dataset calib;
};

DataSplit stage_gen_data(const ExperimentConfig& cfg, const ValueGrid& gt);

struct WorldModel {
    Ensemble ensemble;
    std::optional<MarginModel> margin;  ///< present for the learned margin source
};

WorldModel stage_train_ensemble(const ExperimentConfig& cfg, const Dataset& train);

/// Known-failure margin of the config's source.
MarginFn margin_fn(const ExperimentConfig& cfg, const WorldModel& wm);

CalibrationResult stage_calibrate(const ExperimentConfig& cfg, const Ensemble& ens, const Dataset& calib);

/// epsilonHat plus the configured offset; throws UncalibratedThreshold when
/// the calibrated threshold is infinite.
double filter_epsilon(const ExperimentConfig& cfg, const CalibrationResult& cal);

OodPenalty penalty_of(const ExperimentConfig& cfg, double epsilon);

ValueGrid stage_solve_filter(const ExperimentConfig& cfg, const WorldModel& wm, double epsilon);

QTrainResult stage_train_q(const ExperimentConfig& cfg, const WorldModel& wm, const Dataset& train, double epsilon);

struct EvalReport {
    ConfusionStats monitor;
    SafetySummary filtered;
    SafetySummary unfiltered;
    int interventions = 0;
    /// Filtered replays of recorded task-action logs, when given.
    std::optional<SafetySummary> replayFiltered;
    std::optional<SafetySummary> replayUnfiltered;
    /// Rollout logs of the unfiltered failures, usable as replay input.
    std::vector<std::string> failureLogs;
};

/// Monitor classification against ground truth on the config grid and
/// random-policy rollouts from challenging starts, filtered and unfiltered.
EvalReport stage_evaluate(const ExperimentConfig& cfg, const SafetySolution& sol, const TransitionModel& model,
                          double epsilon, const ValueGrid& gt, const std::vector<std::string>& replayLogs = {});

nlohmann::json to_json(const EvalReport& r);

}  // namespace shield
