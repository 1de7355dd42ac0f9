#include "shield/datagen.hpp"

#include <algorithm>
#include <numbers>
#include <numeric>
#include <string>

#include "shield/errors.hpp"
#include "shield/gridsolver.hpp"
#include "shield/rng.hpp"

namespace shield {

std::size_t Dataset::transitions() const {
    std::size_t n = 0;
    for (const auto& t : trajectories) n += t.length();
    return n;
}

int failure_label(const DubinsState& s, const FailureSpec& f) {
    return margin(s, f) < 0.0 ? -1 : 1;
}

void verify(const Trajectory& tr, const WorldConfig& cfg) {
    require(tr.states.size() == tr.actions.size() + 1 && tr.labels.size() == tr.states.size(),
            ErrorCode::Format, "trajectory field lengths are inconsistent");
    for (std::size_t t = 0; t < tr.states.size(); ++t) {
        require(tr.labels[t] == failure_label(tr.states[t], cfg.failure), ErrorCode::Format,
                "label mismatch at t=" + std::to_string(t));
        if (t + 1 < tr.states.size()) {
            require(step(tr.states[t], tr.actions[t], cfg) == tr.states[t + 1], ErrorCode::Format,
                    "state replay mismatch at t=" + std::to_string(t));
        }
    }
}

namespace {

constexpr int kMaxExpertAttempts = 100;

Trajectory start_at(const DubinsState& s, const FailureSpec& f) {
    Trajectory tr;
    tr.states.push_back(s);
    tr.labels.push_back(failure_label(s, f));
    return tr;
}

void push(Trajectory& tr, ActionId a, const WorldConfig& cfg) {
    const DubinsState next = step(tr.states.back(), a, cfg);
    tr.actions.push_back(a);
    tr.states.push_back(next);
    tr.labels.push_back(failure_label(next, cfg.failure));
}

}  // namespace

std::vector<Trajectory> gen_expert(const ValueGrid& gt, int n, int horizon, double boundary,
                                   const WorldConfig& cfg, std::uint64_t seed) {
    require(n >= 0 && horizon >= 0, ErrorCode::InvalidArgument, "n and horizon must be >= 0");
    require(boundary > 0.0, ErrorCode::InvalidArgument, "expert boundary must be > 0");
    std::vector<Trajectory> out;
    if (n == 0) return out;

    std::vector<std::size_t> safeNodes;
    for (std::size_t i = 0; i < gt.values.size(); ++i) {
        if (gt.values[i] > boundary) safeNodes.push_back(i);
    }
    require(!safeNodes.empty(), ErrorCode::SamplingExhausted,
            "no grid node has a ground-truth value above the expert boundary");

    out.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        Rng rng = make_rng(seed, static_cast<std::uint64_t>(k));
        bool accepted = false;
        for (int attempt = 0; attempt < kMaxExpertAttempts && !accepted; ++attempt) {
            const auto pick = static_cast<std::size_t>(
                uniform_int(rng, 0, static_cast<int>(safeNodes.size()) - 1));
            Trajectory tr = start_at(gt.grid.node(safeNodes[pick]), cfg.failure);
            tr.source = TrajectorySource::Expert;
            bool ok = true;
            for (int t = 0; t < horizon; ++t) {
                const DubinsState& s = tr.states.back();
                const ActionId a = interpolate(gt, s) < boundary ? greedy_action(gt, s, cfg)
                                                                 : ActionId(uniform_int(rng, 0, 2));
                push(tr, a, cfg);
                if (tr.labels.back() < 0) {
                    ok = false;
                    break;
                }
            }
            if (ok) {
                out.push_back(std::move(tr));
                accepted = true;
            }
        }
        require(accepted, ErrorCode::SamplingExhausted,
                "could not generate a failure-free expert trajectory");
    }
    return out;
}

std::vector<Trajectory> gen_random(int n, int horizon, const WorldConfig& cfg, std::uint64_t seed) {
    require(n >= 0 && horizon >= 0, ErrorCode::InvalidArgument, "n and horizon must be >= 0");
    std::vector<Trajectory> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        Rng rng = make_rng(seed, static_cast<std::uint64_t>(k));
        const DubinsState s0{(2.0 * uniform01(rng) - 1.0) * cfg.bbox,
                             (2.0 * uniform01(rng) - 1.0) * cfg.bbox,
                             wrap_angle(2.0 * std::numbers::pi * uniform01(rng) - std::numbers::pi)};
        Trajectory tr = start_at(s0, cfg.failure);
        for (int t = 0; t < horizon && tr.labels.back() > 0; ++t) {
            push(tr, ActionId(uniform_int(rng, 0, 2)), cfg);
        }
        out.push_back(std::move(tr));
    }
    return out;
}

Dataset make_dataset(const ValueGrid& gt, int nExpert, int nRandom, int horizon, double boundary,
                     const WorldConfig& cfg, std::uint64_t seed) {
    Dataset d;
    d.seed = seed;
    d.provenance = Provenance{nExpert, nRandom, horizon};
    d.trajectories = gen_expert(gt, nExpert, horizon, boundary, cfg, mix_seed(seed, 1));
    auto random = gen_random(nRandom, horizon, cfg, mix_seed(seed, 2));
    d.trajectories.insert(d.trajectories.end(), std::make_move_iterator(random.begin()),
                          std::make_move_iterator(random.end()));
    return d;
}

std::pair<Dataset, Dataset> split(const Dataset& d, int nCalib, std::uint64_t seed) {
    const auto total = d.trajectories.size();
    require(nCalib >= 0 && static_cast<std::size_t>(nCalib) < total, ErrorCode::InsufficientData,
            "calibration count " + std::to_string(nCalib) + " must be below " +
                std::to_string(total) + " trajectories");
    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng = make_rng(seed, 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<bool> toCalib(total, false);
    for (int i = 0; i < nCalib; ++i) toCalib[idx[static_cast<std::size_t>(i)]] = true;

    Dataset train, calib;
    train.seed = calib.seed = d.seed;
    train.provenance.horizon = calib.provenance.horizon = d.provenance.horizon;
    for (std::size_t i = 0; i < total; ++i) {
        Dataset& dst = toCalib[i] ? calib : train;
        const Trajectory& tr = d.trajectories[i];
        dst.trajectories.push_back(tr);
        ++(tr.source == TrajectorySource::Expert ? dst.provenance.nExpert : dst.provenance.nRandom);
    }
    return {std::move(train), std::move(calib)};
}

}  // namespace shield
