#include "shield/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "shield/errors.hpp"

namespace shield {

namespace {

// ceil with a guard so that e.g. 0.95 * 20 = 19.000000000000004 ranks 19.
std::size_t ceil_rank(double x) {
    return static_cast<std::size_t>(std::ceil(x - 1e-9));
}

}  // namespace

void validate(const CalibrationConfig& cfg) {
    require(cfg.alphaCal > 0.0 && cfg.alphaCal < 1.0, ErrorCode::InvalidArgument,
            "alphaCal must lie in (0,1)");
    require(cfg.alphaTrans >= 0.0 && cfg.alphaTrans < 1.0, ErrorCode::InvalidArgument,
            "alphaTrans must lie in [0,1)");
}

double traj_score(std::span<const double> us, double alphaTrans) {
    require(!us.empty(), ErrorCode::EmptySequence, "trajectory has no uncertainty values");
    require(alphaTrans >= 0.0 && alphaTrans < 1.0, ErrorCode::InvalidArgument,
            "alphaTrans must lie in [0,1)");
    std::vector<double> v(us.begin(), us.end());
    const std::size_t r = std::clamp<std::size_t>(ceil_rank((1.0 - alphaTrans) * static_cast<double>(v.size())),
                                                  1, v.size());
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(r - 1), v.end());
    return v[r - 1];
}

CalibrationResult calibrate(std::vector<double> trajScores, const CalibrationConfig& cfg) {
    validate(cfg);
    require(!trajScores.empty(), ErrorCode::EmptyDataset, "no calibration scores");
    CalibrationResult res;
    res.config = cfg;
    res.N = static_cast<int>(trajScores.size());
    const std::size_t r = ceil_rank((1.0 - cfg.alphaCal) * static_cast<double>(res.N + 1));
    std::vector<double> sorted = trajScores;
    std::sort(sorted.begin(), sorted.end());
    if (r > sorted.size()) {
        res.epsilonHat = std::numeric_limits<double>::infinity();
        res.degenerate = true;
    } else {
        res.epsilonHat = sorted[std::max<std::size_t>(r, 1) - 1];
    }
    res.trajScores = std::move(trajScores);
    return res;
}

std::vector<double> score_dataset(const Ensemble& ens, UncertaintyMethod method, const Dataset& calib,
                                  double alphaTrans) {
    require(!calib.trajectories.empty(), ErrorCode::EmptyDataset, "calibration set is empty");
    std::vector<double> scores;
    scores.reserve(calib.trajectories.size());
    std::vector<DubinsState> zs;
    std::vector<double> us, buf;
    for (const auto& tr : calib.trajectories) {
        if (tr.length() == 0) continue;
        us.assign(tr.length(), 0.0);
        // Group transitions by action so each member runs one batched pass per action.
        for (int ai = 0; ai < kNumActions; ++ai) {
            zs.clear();
            std::vector<std::size_t> where;
            for (std::size_t t = 0; t < tr.length(); ++t) {
                if (tr.actions[t].index() == ai) {
                    zs.push_back(tr.states[t]);
                    where.push_back(t);
                }
            }
            if (zs.empty()) continue;
            buf.assign(zs.size(), 0.0);
            measure_batch(ens, zs, ActionId(ai), method, buf);
            for (std::size_t i = 0; i < where.size(); ++i) us[where[i]] = buf[i];
        }
        scores.push_back(traj_score(us, alphaTrans));
    }
    require(!scores.empty(), ErrorCode::EmptySequence, "no calibration trajectory has a transition");
    return scores;
}

CoverageReport coverage_check(const CalibrationResult& result, std::span<const double> testScores,
                              BetaAlpha which) {
    require(!testScores.empty(), ErrorCode::EmptyDataset, "no test scores");
    CoverageReport rep;
    std::size_t covered = 0;
    for (double s : testScores) covered += s <= result.epsilonHat ? 1 : 0;
    rep.empirical = static_cast<double>(covered) / static_cast<double>(testScores.size());
    const double alpha = which == BetaAlpha::Trans ? result.config.alphaTrans : result.config.alphaCal;
    const double C = std::floor(static_cast<double>(result.N + 1) * alpha);
    rep.betaA = static_cast<double>(result.N + 1) - C;
    rep.betaB = C;
    return rep;
}

}  // namespace shield
