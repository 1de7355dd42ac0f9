#pragma once

#include <Eigen/Dense>
#include <vector>

#include "shield/rng.hpp"

namespace shield::nn {

enum class Activation { Identity, SiLU };

struct LayerSpec {
    int in = 0;
    int out = 0;
    bool layerNorm = false;
    Activation activation = Activation::Identity;

    bool operator==(const LayerSpec&) const = default;
};

/// Feed-forward network over column batches (features x batch) with an
/// explicit reverse pass. Parameters live in one flat vector, layer by layer:
/// W (out x in, column-major), b, then LayerNorm gain and shift when enabled.
class Mlp {
public:
    Mlp() = default;
    explicit Mlp(std::vector<LayerSpec> layers);

    const std::vector<LayerSpec>& layers() const { return layers_; }
    int input_dim() const { return layers_.front().in; }
    int output_dim() const { return layers_.back().out; }
    Eigen::Index parameter_count() const { return params_.size(); }

    Eigen::VectorXd& parameters() { return params_; }
    const Eigen::VectorXd& parameters() const { return params_; }

    /// Uniform(-1/sqrt(in), 1/sqrt(in)) weights and biases; unit gain, zero shift.
    void initialize(Rng& rng);

    /// Intermediate values kept for the reverse pass.
    struct Tape {
        std::vector<Eigen::MatrixXd> inputs;
        std::vector<Eigen::MatrixXd> preActivation;
        std::vector<Eigen::MatrixXd> normalized;
        std::vector<Eigen::RowVectorXd> invStd;
    };

    Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
    Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Tape& tape) const;

    /// Accumulates d(loss)/d(params) into grad given d(loss)/d(output).
    void backward(const Tape& tape, const Eigen::MatrixXd& gradOut, Eigen::VectorXd& grad) const;

    /// Sets the output-layer bias, e.g. to start a value network above its targets.
    void set_output_bias(double value);

private:
    struct Offsets {
        Eigen::Index weight = 0, bias = 0, gain = 0, shift = 0;
    };

    std::vector<LayerSpec> layers_;
    std::vector<Offsets> offsets_;
    Eigen::VectorXd params_;
};

class Adam {
public:
    Adam() = default;
    Adam(Eigen::Index n, double learningRate, double beta1 = 0.9, double beta2 = 0.999,
         double epsilon = 1e-8);

    void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
    void set_learning_rate(double lr) { lr_ = lr; }
    double learning_rate() const { return lr_; }

private:
    Eigen::VectorXd m_, v_;
    double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    long t_ = 0;
};

double softplus(double x);
double sigmoid(double x);

}  // namespace shield::nn
