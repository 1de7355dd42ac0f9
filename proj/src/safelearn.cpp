#include "shield/safelearn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "shield/errors.hpp"
#include "shield/gridsolver.hpp"

namespace shield {

double augmented_margin(double lz, double u, double eps, double kappa, bool exempt) {
    if (exempt || kappa == 0.0) return lz;
    return std::min(lz, kappa * (eps - u));
}

double bellman_target(double ltilde, double gamma, double maxQnext) {
    return (1.0 - gamma) * ltilde + gamma * std::min(ltilde, maxQnext);
}

void validate(const TrainRunConfig& cfg) {
    require(cfg.gamma >= 0.0 && cfg.gamma < 1.0, ErrorCode::InvalidArgument, "gamma must lie in [0,1)");
    require(cfg.kappa >= 0.0, ErrorCode::InvalidArgument, "kappa must be >= 0");
    require(cfg.iterations >= 0 && cfg.bufferSize >= 1 && cfg.batchSize >= 1 && cfg.maxImagineSteps >= 1 &&
                cfg.targetSyncPeriod >= 1 && cfg.lanes >= 1 && cfg.learningRate > 0.0,
            ErrorCode::InvalidArgument, "invalid fitted-Q run configuration");
    require(!cfg.hidden.empty(), ErrorCode::InvalidArgument, "Q network needs a hidden layer");
    require(!std::isnan(cfg.epsilonHat), ErrorCode::UncalibratedThreshold, "epsilon is not calibrated");
}

QFunction::QFunction(int inDim, const std::vector<int>& hidden, Rng& rng, double initialValue) {
    std::vector<nn::LayerSpec> layers;
    int prev = inDim;
    for (int h : hidden) {
        layers.push_back({prev, h, false, nn::Activation::SiLU});
        prev = h;
    }
    layers.push_back({prev, kNumActions, false, nn::Activation::Identity});
    net_ = nn::Mlp(std::move(layers));
    net_.initialize(rng);
    net_.set_output_bias(initialValue);
}

std::array<double, kNumActions> QFunction::values(const Eigen::VectorXd& x) const {
    const Eigen::MatrixXd out = net_.forward(x);
    return {out(0, 0), out(1, 0), out(2, 0)};
}

Eigen::MatrixXd QFunction::values_batch(const Eigen::MatrixXd& x) const { return net_.forward(x); }

std::array<double, kNumActions> QFunction::values(const DubinsState& z) const {
    return values(Eigen::VectorXd(state_features(z)));
}

double monitor_value(const std::array<double, kNumActions>& values) {
    return *std::max_element(values.begin(), values.end());
}

double monitor_value(const QFunction& q, const DubinsState& z) { return monitor_value(q.values(z)); }

ActionId fallback_action(const QFunction& q, const DubinsState& z) { return argmax_action(q.values(z)); }

std::vector<double> monitor_values(const QFunction& q, std::span<const DubinsState> z) {
    std::vector<double> out(z.size());
    constexpr std::size_t kChunk = 8192;
    for (std::size_t lo = 0; lo < z.size(); lo += kChunk) {
        const std::size_t n = std::min(kChunk, z.size() - lo);
        Eigen::MatrixXd x(kStateFeatureDim, static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) x.col(static_cast<Eigen::Index>(i)) = state_features(z[lo + i]);
        const Eigen::MatrixXd v = q.values_batch(x);
        for (std::size_t i = 0; i < n; ++i) out[lo + i] = v.col(static_cast<Eigen::Index>(i)).maxCoeff();
    }
    return out;
}

namespace {

int greedy_index(const Eigen::MatrixXd& q, Eigen::Index col) {
    int best = 0;
    for (int a = 1; a < kNumActions; ++a) {
        if (q(a, col) > q(best, col)) best = a;
    }
    return best;
}

}  // namespace

QTrainResult train_q(ImaginationEnv& env, const TrainRunConfig& cfg) {
    validate(cfg);
    const int d = env.feature_dim();
    const int L = env.lanes();
    Rng rng = make_rng(cfg.seed, 0);
    Rng envRng = make_rng(cfg.seed, 1);

    QFunction online(d, cfg.hidden, rng, cfg.initialValue);
    QFunction target = online;
    nn::Adam opt(online.net().parameter_count(), cfg.learningRate);

    const auto cap = static_cast<Eigen::Index>(cfg.bufferSize);
    Eigen::MatrixXd bufX(d, cap), bufNext(d, cap);
    std::vector<int> bufA(static_cast<std::size_t>(cap));
    std::vector<double> bufL(static_cast<std::size_t>(cap));
    Eigen::Index head = 0, count = 0;

    std::vector<int> laneSteps(static_cast<std::size_t>(L), 0);
    for (int l = 0; l < L; ++l) env.reset_lane(l, envRng);

    const int B = cfg.batchSize;
    Eigen::MatrixXd x(d, B), xn(d, B), laneX(d, L);
    std::vector<int> actions(static_cast<std::size_t>(L));
    std::vector<double> ltilde(static_cast<std::size_t>(L));
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(B));
    Eigen::VectorXd grad(online.net().parameter_count());
    nn::Mlp::Tape tape;

    QTrainResult result;
    double windowLoss = 0.0;
    int windowCount = 0;
    const double annealSteps = std::max(1.0, 0.5 * cfg.iterations);

    for (int it = 0; it < cfg.iterations; ++it) {
        const double explore =
            cfg.exploreStart + (cfg.exploreEnd - cfg.exploreStart) * std::min(1.0, it / annealSteps);
        for (int l = 0; l < L; ++l) laneX.col(l) = env.features(l);
        const Eigen::MatrixXd laneQ = online.values_batch(laneX);
        for (int l = 0; l < L; ++l) {
            actions[static_cast<std::size_t>(l)] =
                uniform01(rng) < explore ? uniform_int(rng, 0, kNumActions - 1) : greedy_index(laneQ, l);
        }
        env.step(actions, envRng, ltilde);
        for (int l = 0; l < L; ++l) {
            bufX.col(head) = laneX.col(l);
            bufNext.col(head) = env.features(l);
            bufA[static_cast<std::size_t>(head)] = actions[static_cast<std::size_t>(l)];
            bufL[static_cast<std::size_t>(head)] = ltilde[static_cast<std::size_t>(l)];
            head = (head + 1) % cap;
            count = std::min(count + 1, cap);
            if (++laneSteps[static_cast<std::size_t>(l)] >= cfg.maxImagineSteps) {
                laneSteps[static_cast<std::size_t>(l)] = 0;
                env.reset_lane(l, envRng);
            }
        }
        if (count < B) continue;

        for (int i = 0; i < B; ++i) {
            idx[static_cast<std::size_t>(i)] = static_cast<Eigen::Index>(uniform_int(rng, 0, static_cast<int>(count) - 1));
            x.col(i) = bufX.col(idx[static_cast<std::size_t>(i)]);
            xn.col(i) = bufNext.col(idx[static_cast<std::size_t>(i)]);
        }
        const Eigen::MatrixXd qNextOnline = online.values_batch(xn);
        const Eigen::MatrixXd qNextTarget = target.values_batch(xn);
        const Eigen::MatrixXd q = online.net().forward(x, tape);
        Eigen::MatrixXd dOut = Eigen::MatrixXd::Zero(kNumActions, B);
        double loss = 0.0;
        for (int i = 0; i < B; ++i) {
            const auto j = static_cast<std::size_t>(idx[static_cast<std::size_t>(i)]);
            const double y = bellman_target(bufL[j], cfg.gamma, qNextTarget(greedy_index(qNextOnline, i), i));
            const double r = q(bufA[j], i) - y;
            loss += r * r;
            dOut(bufA[j], i) = 2.0 * r / B;
        }
        loss /= B;
        grad.setZero();
        online.net().backward(tape, dOut, grad);
        opt.step(online.net().parameters(), grad);
        ++result.gradientSteps;

        windowLoss += loss;
        ++windowCount;
        if ((it + 1) % cfg.targetSyncPeriod == 0) {
            target = online;
            result.finalLoss = windowLoss / windowCount;
            windowLoss = 0.0;
            windowCount = 0;
        }
    }
    if (windowCount > 0) result.finalLoss = windowLoss / windowCount;
    result.q = std::move(online);
    return result;
}

EnsembleImagination::EnsembleImagination(const Ensemble& ens, MarginFn margin, const WorldConfig& world,
                                         std::vector<DubinsState> starts, const TrainRunConfig& cfg,
                                         UncertaintyMethod method)
    : ens_(ens),
      margin_(std::move(margin)),
      world_(world),
      starts_(std::move(starts)),
      eps_(cfg.epsilonHat),
      kappa_(cfg.kappa),
      bboxExempt_(cfg.bboxExempt),
      method_(method),
      lanes_(static_cast<std::size_t>(cfg.lanes)) {
    require(!starts_.empty(), ErrorCode::EmptyDataset, "no imagination start states");
    require(!std::isnan(eps_), ErrorCode::UncalibratedThreshold, "epsilon is not calibrated");
    require(ens.size() >= 1, ErrorCode::TooFewMembers, "imagination needs an ensemble");
}

void EnsembleImagination::reset_lane(int lane, Rng& rng) {
    const int pick = uniform_int(rng, 0, static_cast<int>(starts_.size()) - 1);
    lanes_[static_cast<std::size_t>(lane)] = {starts_[static_cast<std::size_t>(pick)], 0.0};
}

Eigen::VectorXd EnsembleImagination::features(int lane) const {
    return state_features(lanes_[static_cast<std::size_t>(lane)].z);
}

void EnsembleImagination::step(std::span<const int> actions, Rng& rng, std::span<double> ltilde) {
    require(actions.size() == lanes_.size() && ltilde.size() == lanes_.size(), ErrorCode::DimensionMismatch,
            "one action and margin per lane");
    std::normal_distribution<double> normal(0.0, 1.0);
    const int K = ens_.size();
    std::vector<Eigen::MatrixXd> means(static_cast<std::size_t>(K)), vars(static_cast<std::size_t>(K));
    for (int a = 0; a < kNumActions; ++a) {
        std::vector<std::size_t> who;
        std::vector<DubinsState> zs;
        for (std::size_t l = 0; l < lanes_.size(); ++l) {
            if (actions[l] == a) {
                who.push_back(l);
                zs.push_back(lanes_[l].z);
            }
        }
        if (who.empty()) continue;
        for (int k = 0; k < K; ++k) {
            ens_.predict_member_batch(k, zs, ActionId(a), means[static_cast<std::size_t>(k)],
                                      vars[static_cast<std::size_t>(k)]);
        }
        std::vector<double> u(zs.size());
        scalarize_batch(means, vars, method_, u);
        for (std::size_t i = 0; i < who.size(); ++i) {
            const auto col = static_cast<Eigen::Index>(i);
            const auto k = static_cast<std::size_t>(uniform_int(rng, 0, K - 1));
            const auto& m = means[k];
            const auto& v = vars[k];
            DubinsState next{m(0, col) + std::sqrt(v(0, col)) * normal(rng),
                             m(1, col) + std::sqrt(v(1, col)) * normal(rng),
                             wrap_angle(m(2, col) + std::sqrt(v(2, col)) * normal(rng))};
            const bool exempt = bboxExempt_ && !in_bbox(next, world_);
            ltilde[who[i]] = augmented_margin(margin_(next), u[i], eps_, kappa_, exempt);
            lanes_[who[i]] = {next, u[i]};
        }
    }
}

std::vector<ImaginedStep> imagine_rollout(const Ensemble& ens, const DubinsState& start,
                                          const std::function<ActionId(const DubinsState&)>& policy,
                                          int steps, const MarginFn& margin, const WorldConfig& world,
                                          double eps, double kappa, bool bboxExempt, std::uint64_t seed) {
    require(steps >= 0, ErrorCode::InvalidArgument, "steps must be >= 0");
    TrainRunConfig cfg;
    cfg.lanes = 1;
    cfg.epsilonHat = eps;
    cfg.kappa = kappa;
    cfg.bboxExempt = bboxExempt;
    EnsembleImagination env(ens, margin, world, {start}, cfg);
    Rng rng = make_rng(seed, 0);
    env.reset_lane(0, rng);
    std::vector<ImaginedStep> out;
    out.reserve(static_cast<std::size_t>(steps));
    for (int t = 0; t < steps; ++t) {
        const AugmentedState from = env.lane_state(0);
        const ActionId a = policy(from.z);
        const int ai = a.index();
        double lt = 0.0;
        env.step(std::span(&ai, 1), rng, std::span(&lt, 1));
        out.push_back({from, a, lt, env.lane_state(0)});
    }
    return out;
}

std::vector<DubinsState> dataset_states(const Dataset& d) {
    std::vector<DubinsState> out;
    for (const auto& tr : d.trajectories) out.insert(out.end(), tr.states.begin(), tr.states.end());
    return out;
}

QTrainResult train_q(const Dataset& trainSet, const Ensemble& ens, const MarginFn& margin,
                     const WorldConfig& world, const TrainRunConfig& cfg) {
    validate(cfg);
    auto starts = dataset_states(trainSet);
    require(!starts.empty(), ErrorCode::EmptyDataset, "training set has no states");
    EnsembleImagination env(ens, margin, world, std::move(starts), cfg);
    return train_q(env, cfg);
}

}  // namespace shield
