#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cstdint>
#include <span>
#include <vector>

#include "shield/datagen.hpp"
#include "shield/dynamics.hpp"
#include "shield/mlp.hpp"

namespace shield {

/// Diagonal Gaussian over the next state.
struct GaussianPrediction {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;
};

inline constexpr int kStateDim = 3;
/// (px, py, cos theta, sin theta) followed by a one-hot action.
inline constexpr int kStateFeatureDim = 4;
inline constexpr int kFeatureDim = kStateFeatureDim + kNumActions;

Eigen::Vector4d state_features(const DubinsState& s);
Eigen::Matrix<double, kFeatureDim, 1> transition_features(const DubinsState& s, ActionId a);

/// Five linear layers in -> w -> 2w -> 3w -> w -> 2*out with LayerNorm and an
/// activation on every hidden layer. width = 0 means w = in.
std::vector<nn::LayerSpec> member_architecture(int inDim, int outDim, int width = 0);

struct StateTransition {
    DubinsState z;
    ActionId a;
    DubinsState next;
};

std::vector<StateTransition> transitions_of(const Dataset& d);

/// Target minus prediction, with the heading component wrapped.
Eigen::Vector3d state_residual(const Eigen::Vector3d& target, const Eigen::Vector3d& mean);

/// (mu - z')^T Sigma^-1 (mu - z') + log det Sigma for a diagonal Sigma.
double nll_loss(const GaussianPrediction& pred, const Eigen::VectorXd& target);

struct EnsembleConfig {
    int K = 10;
    int width = 16;  ///< hidden base width, 0 for the input width
    int epochs = 30;
    int batchSize = 256;
    double learningRate = 1e-3;
    double varFloor = 3e-4;
    std::uint64_t seed = 2;
    /// Predict px, py directly instead of as increments. The heading is
    /// always predicted as an increment.
    bool absolutePosition = true;
    /// Leading epochs trained on the beta = 1 surrogate, which fits the means
    /// before the variances can absorb the error.
    int warmupEpochs = 5;
    /// Cosine decay of the learning rate down to this fraction by the last epoch.
    double finalLearningRateFraction = 0.05;
};

void validate(const EnsembleConfig& cfg);

/// K independently initialised next-state predictors. Per dimension,
/// mean = anchor * z + scale * raw_mu and variance = scale^2 * softplus(raw_var)
/// + varFloor, with anchor 1 for increment outputs and 0 for direct outputs.
class Ensemble {
public:
    Ensemble() = default;
    Ensemble(int K, std::uint64_t seed, double varFloor, int width = 0);
    Ensemble(const Ensemble& other);
    Ensemble& operator=(const Ensemble& other);

    int size() const { return static_cast<int>(members_.size()); }
    int width() const { return width_; }
    std::uint64_t seed() const { return seed_; }
    double var_floor() const { return varFloor_; }

    nn::Mlp& member(int k) { return members_[static_cast<std::size_t>(k)]; }
    const nn::Mlp& member(int k) const { return members_[static_cast<std::size_t>(k)]; }

    const Eigen::Vector3d& output_scale() const { return scale_; }
    void set_output_scale(const Eigen::Vector3d& scale) { scale_ = scale; }
    const Eigen::Vector3d& output_anchor() const { return anchor_; }
    void set_output_anchor(const Eigen::Vector3d& anchor) { anchor_ = anchor; }

    const std::vector<double>& final_losses() const { return finalLoss_; }
    std::vector<double>& final_losses() { return finalLoss_; }

    GaussianPrediction predict_member(int k, const DubinsState& z, ActionId a) const;
    std::vector<GaussianPrediction> predict_all(const DubinsState& z, ActionId a) const;

    /// Batched prediction of member k; means and variances are 3 x B.
    void predict_member_batch(int k, std::span<const DubinsState> z, ActionId a,
                              Eigen::MatrixXd& means, Eigen::MatrixXd& variances) const;

    /// Mean NLL of member k over a batch and its exact gradient w.r.t. the
    /// member's parameters. beta > 0 instead returns the gradient of the
    /// beta-NLL surrogate, each term weighted by variance^beta held constant;
    /// the returned loss is always the plain NLL.
    double loss_and_gradient(int k, std::span<const StateTransition> batch, Eigen::VectorXd& grad,
                             double beta = 0.0) const;
    double loss(int k, std::span<const StateTransition> batch) const;

    /// Number of member forward passes issued so far.
    std::uint64_t forward_count() const { return forwards_.load(std::memory_order_relaxed); }

    /// Reorders members (and their losses) by the given permutation.
    Ensemble permuted(const std::vector<int>& order) const;

private:
    void decode(const Eigen::MatrixXd& raw, std::span<const DubinsState> z, Eigen::MatrixXd& means,
                Eigen::MatrixXd& variances) const;

    std::vector<nn::Mlp> members_;
    std::vector<double> finalLoss_;
    Eigen::Vector3d mean_of(const DubinsState& z, const Eigen::MatrixXd& raw, Eigen::Index col) const;

    Eigen::Vector3d scale_ = Eigen::Vector3d::Ones();
    Eigen::Vector3d anchor_ = Eigen::Vector3d::Ones();
    double varFloor_ = 1e-6;
    int width_ = 0;
    std::uint64_t seed_ = 0;
    mutable std::atomic<std::uint64_t> forwards_{0};
};

/// Gradient of the mean batch loss for member k (allocating wrapper).
Eigen::VectorXd loss_gradient(const Ensemble& ens, int k, std::span<const StateTransition> batch);

/// Per-dimension spread of the observed increments, used as the output scale.
Eigen::Vector3d increment_scale(std::span<const StateTransition> data);
/// Root-mean-square of the next state per dimension, floored at 1e-3.
Eigen::Vector3d target_scale(std::span<const StateTransition> data);

/// Trains every member independently by Adam on the mean Gaussian NLL.
Ensemble train(const Dataset& trainSet, const EnsembleConfig& cfg);

/// Learned failure classifier; margin_of(z) = 1 - 2 p_fail(z).
struct MarginModel {
    nn::Mlp net;
    bool degenerate = false;  ///< trained on a single class
    double trainAccuracy = 0.0;

    double failure_probability(const DubinsState& z) const;
    double margin_of(const DubinsState& z) const;
    /// Vectorised margins for many states.
    std::vector<double> margins(std::span<const DubinsState> z) const;
};

struct MarginTrainConfig {
    int hidden = 32;
    int epochs = 20;
    int batchSize = 256;
    double learningRate = 3e-3;
    std::uint64_t seed = 5;
};

/// Class-balanced binary cross-entropy on (state -> failure label).
MarginModel train_margin_classifier(const Dataset& trainSet, const MarginTrainConfig& cfg);

double classifier_accuracy(const MarginModel& m, const Dataset& d);

}  // namespace shield
