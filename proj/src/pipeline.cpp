#include "shield/pipeline.hpp"

#include <cmath>

#include "shield/datagen.hpp"
#include "shield/errors.hpp"
#include "shield/gridsolver.hpp"
#include "shield/io.hpp"
#include "shield/rng.hpp"

namespace shield {

using nlohmann::json;

namespace {

// Grids are persisted as float32; rounding here makes in-process runs match
// runs that reload the artifacts.
ValueGrid as_persisted(ValueGrid vg) {
    for (double& v : vg.values) v = static_cast<float>(v);
    return vg;
}

}  // namespace

ValueGrid stage_solve_gt(const ExperimentConfig& cfg) {
    return as_persisted(solve_ground_truth(cfg.grid, cfg.world, cfg.solver));
}

DataSplit stage_gen_data(const ExperimentConfig& cfg, const ValueGrid& gt) {
    require(gt.grid == cfg.grid, ErrorCode::GridMismatch, "ground truth was solved on a different grid");
    const auto& d = cfg.datagen;
    const Dataset all = make_dataset(gt, d.nExpert, d.nRandom, d.horizon, d.boundary, cfg.world, d.seed);
    auto [train, calib] = split(all, d.nCalib, d.splitSeed);
    return {std::move(train), std::move(calib)};
}

WorldModel stage_train_ensemble(const ExperimentConfig& cfg, const Dataset& train) {
    WorldModel wm{shield::train(train, cfg.ensemble), std::nullopt};
    if (cfg.margin.source == MarginSource::Learned) wm.margin = train_margin_classifier(train, cfg.margin.classifier);
    return wm;
}

MarginFn margin_fn(const ExperimentConfig& cfg, const WorldModel& wm) {
    if (cfg.margin.source == MarginSource::Analytic) {
        return [f = cfg.world.failure](const DubinsState& s) { return margin(s, f); };
    }
    require(wm.margin.has_value(), ErrorCode::InvalidArgument, "config asks for a learned margin the model lacks");
    const MarginModel* m = &*wm.margin;
    return [m](const DubinsState& s) { return m->margin_of(s); };
}

CalibrationResult stage_calibrate(const ExperimentConfig& cfg, const Ensemble& ens, const Dataset& calib) {
    return calibrate(score_dataset(ens, cfg.method, calib, cfg.calibration.alphaTrans), cfg.calibration);
}

double filter_epsilon(const ExperimentConfig& cfg, const CalibrationResult& cal) {
    require(std::isfinite(cal.epsilonHat), ErrorCode::UncalibratedThreshold,
            "calibrated threshold is infinite; more calibration trajectories are needed");
    return cal.epsilonHat + cfg.penalty.epsilonOffset;
}

OodPenalty penalty_of(const ExperimentConfig& cfg, double epsilon) {
    return OodPenalty{epsilon, cfg.penalty.kappa, cfg.penalty.bboxExempt};
}

ValueGrid stage_solve_filter(const ExperimentConfig& cfg, const WorldModel& wm, double epsilon) {
    const EnsembleDynamics dyn(wm.ensemble, cfg.method);
    return as_persisted(solve_uncertainty_aware(cfg.grid, dyn, margin_fn(cfg, wm), cfg.world,
                                                penalty_of(cfg, epsilon), cfg.solver));
}

QTrainResult stage_train_q(const ExperimentConfig& cfg, const WorldModel& wm, const Dataset& train, double epsilon) {
    TrainRunConfig q = cfg.qtrain;
    q.kappa = cfg.penalty.kappa;
    q.bboxExempt = cfg.penalty.bboxExempt;
    q.epsilonHat = epsilon;
    q.delta = cfg.delta;
    return train_q(train, wm.ensemble, margin_fn(cfg, wm), cfg.world, q);
}

EvalReport stage_evaluate(const ExperimentConfig& cfg, const SafetySolution& sol, const TransitionModel& model,
                          double epsilon, const ValueGrid& gt, const std::vector<std::string>& replayLogs) {
    require(gt.grid == cfg.grid, ErrorCode::GridMismatch, "ground truth was solved on a different grid");
    EvalReport r;
    r.monitor = classify_vs_ground_truth(sol, gt, gt.grid, 0.0, one_cell_slack(gt.grid));

    const FilterParams fp = filter_params(epsilon, cfg.delta, penalty_of(cfg, epsilon), cfg.world);
    const auto starts = challenging_starts(gt, cfg.world.failure, cfg.eval.challengingStarts, cfg.eval.startSeed);
    const auto task = random_policy();
    std::vector<RolloutResult> kept;
    r.filtered = safety_rate(starts, task, &sol, &model, fp, cfg.eval.horizon, cfg.world, cfg.eval.rolloutSeed, &kept);
    for (const auto& k : kept) r.interventions += k.interventions;
    r.unfiltered =
        safety_rate(starts, task, nullptr, nullptr, fp, cfg.eval.horizon, cfg.world, cfg.eval.rolloutSeed, &kept);
    for (const auto& k : kept) {
        if (k.outcome == Outcome::Failure && !k.records.empty()) r.failureLogs.push_back(encode_rollout_log(k));
    }

    if (!replayLogs.empty()) {
        std::vector<RolloutResult> filtered, unfiltered;
        for (std::size_t i = 0; i < replayLogs.size(); ++i) {
            const auto& log = replayLogs[i];
            const auto actions = decode_task_actions(log);
            const auto start = decode_log_start(log);
            const auto replay = replay_policy(actions);
            const int horizon = static_cast<int>(actions.size());
            const std::uint64_t seed = mix_seed(cfg.eval.rolloutSeed, i);
            filtered.push_back(rollout_filtered(start, replay, sol, model, fp, horizon, cfg.world, seed));
            unfiltered.push_back(rollout_unfiltered(start, replay, horizon, cfg.world, seed));
        }
        r.replayFiltered = summarize(filtered);
        r.replayUnfiltered = summarize(unfiltered);
    }
    return r;
}

json to_json(const EvalReport& r) {
    json j = {{"monitor", to_json(r.monitor)},
              {"filtered", to_json(r.filtered)},
              {"unfiltered", to_json(r.unfiltered)},
              {"interventions", r.interventions}};
    if (r.replayFiltered) {
        j["replay"] = {{"filtered", to_json(*r.replayFiltered)}, {"unfiltered", to_json(*r.replayUnfiltered)}};
    }
    return j;
}

}  // namespace shield
