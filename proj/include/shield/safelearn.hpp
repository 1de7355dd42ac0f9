#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "shield/datagen.hpp"
#include "shield/ensemble.hpp"
#include "shield/mlp.hpp"
#include "shield/transition.hpp"
#include "shield/uncertainty.hpp"

namespace shield {

/// min(lz, kappa (eps - u)), or lz when exempt.
double augmented_margin(double lz, double u, double eps, double kappa, bool exempt);

/// (1 - gamma) l + gamma min(l, maxQnext).
double bellman_target(double ltilde, double gamma, double maxQnext);

struct AugmentedState {
    DubinsState z;
    double u = 0.0;
};

struct TrainRunConfig {
    double gamma = 0.9999;
    int iterations = 60000;  ///< gradient steps
    int bufferSize = 20000;
    int batchSize = 256;
    int maxImagineSteps = 20;
    int targetSyncPeriod = 500;
    int lanes = 16;  ///< parallel imagined rollouts advanced per iteration
    double kappa = 1.0;
    double epsilonHat = 0.0;
    double delta = 0.1;
    bool bboxExempt = true;
    std::vector<int> hidden{100, 100};
    double learningRate = 1e-3;
    double exploreStart = 1.0;
    double exploreEnd = 0.1;
    /// Initial output bias; starting above every reachable target lets the
    /// iteration approach the fixed point from above.
    double initialValue = 1.0;
    std::uint64_t seed = 3;
};

void validate(const TrainRunConfig& cfg);

/// State-action values Q(x, .) over a feature vector x.
class QFunction {
public:
    QFunction() = default;
    QFunction(int inDim, const std::vector<int>& hidden, Rng& rng, double initialValue);
    explicit QFunction(nn::Mlp net) : net_(std::move(net)) {}

    int input_dim() const { return net_.input_dim(); }
    nn::Mlp& net() { return net_; }
    const nn::Mlp& net() const { return net_; }

    std::array<double, kNumActions> values(const Eigen::VectorXd& x) const;
    /// Action values for a batch of feature columns (3 x B).
    Eigen::MatrixXd values_batch(const Eigen::MatrixXd& x) const;

    /// Dubins convenience: features are (px, py, cos theta, sin theta).
    std::array<double, kNumActions> values(const DubinsState& z) const;

private:
    nn::Mlp net_;
};

/// max_a Q(z, a) and its argmax; ties go to the lowest index.
double monitor_value(const QFunction& q, const DubinsState& z);
ActionId fallback_action(const QFunction& q, const DubinsState& z);
double monitor_value(const std::array<double, kNumActions>& values);

/// Vectorised monitor over many states.
std::vector<double> monitor_values(const QFunction& q, std::span<const DubinsState> z);

/// Source of imagined transitions for fitted Q-iteration. Each lane is an
/// independent rollout; step advances every lane once.
class ImaginationEnv {
public:
    virtual ~ImaginationEnv() = default;
    virtual int feature_dim() const = 0;
    virtual int lanes() const = 0;
    virtual void reset_lane(int lane, Rng& rng) = 0;
    virtual Eigen::VectorXd features(int lane) const = 0;
    /// Advances every lane with actions[lane] and writes the augmented margin
    /// of each successor to ltilde.
    virtual void step(std::span<const int> actions, Rng& rng, std::span<double> ltilde) = 0;
};

struct QTrainResult {
    QFunction q;
    double finalLoss = 0.0;  ///< mean TD loss over the last sync period
    int gradientSteps = 0;
};

/// Double DQN on imagined transitions: the online net picks argmax a' at the
/// successor, the target net evaluates it, and the target net is synced every
/// targetSyncPeriod steps.
QTrainResult train_q(ImaginationEnv& env, const TrainRunConfig& cfg);

/// One imagined transition of the ensemble world model.
struct ImaginedStep {
    AugmentedState from;
    ActionId a;
    double ltilde = 0.0;  ///< augmented margin at the successor
    AugmentedState to;
};

/// Successor drawn from a uniformly chosen member's Gaussian; u' = D(z, a).
class EnsembleImagination final : public ImaginationEnv {
public:
    EnsembleImagination(const Ensemble& ens, MarginFn margin, const WorldConfig& world,
                        std::vector<DubinsState> starts, const TrainRunConfig& cfg,
                        UncertaintyMethod method = UncertaintyMethod::JRD);

    int feature_dim() const override { return kStateFeatureDim; }
    int lanes() const override { return static_cast<int>(lanes_.size()); }
    void reset_lane(int lane, Rng& rng) override;
    Eigen::VectorXd features(int lane) const override;
    void step(std::span<const int> actions, Rng& rng, std::span<double> ltilde) override;

    const AugmentedState& lane_state(int lane) const { return lanes_[static_cast<std::size_t>(lane)]; }
    void set_lane_state(int lane, const AugmentedState& s) { lanes_[static_cast<std::size_t>(lane)] = s; }

private:
    const Ensemble& ens_;
    MarginFn margin_;
    WorldConfig world_;
    std::vector<DubinsState> starts_;
    double eps_, kappa_;
    bool bboxExempt_;
    UncertaintyMethod method_;
    std::vector<AugmentedState> lanes_;
};

/// Imagined rollout from a fixed start under a behaviour policy.
std::vector<ImaginedStep> imagine_rollout(const Ensemble& ens, const DubinsState& start,
                                          const std::function<ActionId(const DubinsState&)>& policy,
                                          int steps, const MarginFn& margin, const WorldConfig& world,
                                          double eps, double kappa, bool bboxExempt, std::uint64_t seed);

/// All states of a dataset, used as imagination starts.
std::vector<DubinsState> dataset_states(const Dataset& d);

/// Fitted Q on the Dubins ensemble with dataset starts.
QTrainResult train_q(const Dataset& trainSet, const Ensemble& ens, const MarginFn& margin,
                     const WorldConfig& world, const TrainRunConfig& cfg);

}  // namespace shield
