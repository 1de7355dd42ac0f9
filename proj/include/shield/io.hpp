#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "shield/conformal.hpp"
#include "shield/datagen.hpp"
#include "shield/ensemble.hpp"
#include "shield/eval.hpp"
#include "shield/filter.hpp"
#include "shield/grid.hpp"
#include "shield/safelearn.hpp"

namespace shield {

/// Writes to a sibling temp file, flushes, then renames over `path`.
void write_atomic(const std::string& path, std::string_view bytes);
std::string read_file(const std::string& path);

/// Binary artifacts start with one text line "<magic> <version> <json header>"
/// followed by raw little-endian payload.
inline constexpr int kFormatVersion = 1;
inline constexpr std::string_view kValueGridMagic = "SHIELD-VALUEGRID";
inline constexpr std::string_view kEnsembleMagic = "SHIELD-ENSEMBLE";
inline constexpr std::string_view kQFunctionMagic = "SHIELD-QFUNCTION";

/// Value payload is 32-bit floats in grid order.
std::string encode_value_grid(const ValueGrid& vg, const std::string& configHash);
ValueGrid decode_value_grid(std::string_view bytes, std::string* configHash = nullptr);

/// Optional margin classifier travels with the ensemble.
std::string encode_ensemble(const Ensemble& ens, const MarginModel* margin, const std::string& configHash);
Ensemble decode_ensemble(std::string_view bytes, MarginModel* margin = nullptr, bool* hasMargin = nullptr,
                         std::string* configHash = nullptr);

std::string encode_qfunction(const QFunction& q, const std::vector<int>& hidden, const std::string& configHash);
QFunction decode_qfunction(std::string_view bytes, std::string* configHash = nullptr);

/// First line is metadata {seed, provenance, configHash}; then one trajectory per line.
std::string encode_dataset(const Dataset& d, const std::string& configHash);
/// Every trajectory is replayed through the dynamics and rejected on mismatch.
Dataset decode_dataset(std::string_view text, const WorldConfig& world, std::string* configHash = nullptr);

nlohmann::json to_json(const CalibrationResult& r, const std::string& configHash);
CalibrationResult calibration_from_json(const nlohmann::json& j, std::string* configHash = nullptr);

nlohmann::json to_json(const ConfusionStats& s);
nlohmann::json to_json(const SafetySummary& s);

/// One JSON object per tick.
std::string encode_rollout_log(const RolloutResult& r);
/// Reads the task actions back from a rollout log.
std::vector<ActionId> decode_task_actions(std::string_view text);
/// First recorded state of a rollout log.
DubinsState decode_log_start(std::string_view text);

/// Refuses artifacts produced under a different configuration.
void require_config(const std::string& expected, const std::string& found, const std::string& what);

}  // namespace shield
