#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "shield/conformal.hpp"
#include "shield/dynamics.hpp"
#include "shield/ensemble.hpp"
#include "shield/grid.hpp"
#include "shield/gridsolver.hpp"
#include "shield/safelearn.hpp"
#include "shield/uncertainty.hpp"

namespace shield {

struct DatagenConfig {
    int nExpert = 1500;
    int nRandom = 75;
    int horizon = 100;
    double boundary = 0.1;
    int nCalib = 500;
    std::uint64_t seed = 11;
    std::uint64_t splitSeed = 12;
};

enum class MarginSource { Analytic, Learned };

struct MarginConfig {
    MarginSource source = MarginSource::Analytic;
    MarginTrainConfig classifier;
};

struct PenaltyConfig {
    double kappa = 1.0;
    bool bboxExempt = true;
    /// Added to the calibrated threshold; nonzero only for ablations.
    double epsilonOffset = 0.0;
};

struct EvalConfig {
    int challengingStarts = 181;
    int horizon = 200;
    std::uint64_t startSeed = 21;
    std::uint64_t rolloutSeed = 22;
};

struct ServeConfig {
    int port = 8765;
    std::uint64_t seed = 31;
    /// Minimum V_gt of teleop start states.
    double startMargin = 0.2;
};

struct ExperimentConfig {
    WorldConfig world;
    Grid3 grid;
    DatagenConfig datagen;
    EnsembleConfig ensemble;
    UncertaintyMethod method = UncertaintyMethod::JRD;
    MarginConfig margin;
    CalibrationConfig calibration;
    SolveConfig solver;
    PenaltyConfig penalty;
    TrainRunConfig qtrain;
    double delta = 0.1;
    EvalConfig eval;
    ServeConfig serve;
};

void validate(const ExperimentConfig& cfg);

nlohmann::json to_json(const FailureSpec& f);
FailureSpec failure_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);

ExperimentConfig load_config(const std::string& path);

/// Canonical serialisation: sorted keys, no whitespace.
std::string canonical_dump(const ExperimentConfig& cfg);
/// Lowercase hex SHA-256 of canonical_dump.
std::string config_hash(const ExperimentConfig& cfg);

/// Configuration presets of the two Dubins scenarios.
ExperimentConfig circle_preset();
ExperimentConfig band_preset();

}  // namespace shield
