#include "shield/mlp.hpp"

#include <cmath>

#include "shield/errors.hpp"

namespace shield::nn {

namespace {

constexpr double kLayerNormEps = 1e-5;

void apply_activation(Activation act, Eigen::MatrixXd& m) {
    if (act == Activation::SiLU) {
        m = m.unaryExpr([](double x) { return x * sigmoid(x); });
    }
}

Eigen::MatrixXd activation_grad(Activation act, const Eigen::MatrixXd& pre) {
    if (act == Activation::SiLU) {
        return pre.unaryExpr([](double x) {
            const double s = sigmoid(x);
            return s + x * s * (1.0 - s);
        });
    }
    return Eigen::MatrixXd::Ones(pre.rows(), pre.cols());
}

}  // namespace

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double x) {
    if (x > 30.0) return x;
    return std::log1p(std::exp(x));
}

Mlp::Mlp(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
    require(!layers_.empty(), ErrorCode::InvalidArgument, "network needs at least one layer");
    Eigen::Index off = 0;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& spec = layers_[l];
        require(spec.in > 0 && spec.out > 0, ErrorCode::InvalidArgument, "layer sizes must be > 0");
        if (l > 0) {
            require(layers_[l - 1].out == spec.in, ErrorCode::DimensionMismatch,
                    "consecutive layer sizes do not chain");
        }
        Offsets o;
        o.weight = off;
        off += static_cast<Eigen::Index>(spec.in) * spec.out;
        o.bias = off;
        off += spec.out;
        if (spec.layerNorm) {
            o.gain = off;
            off += spec.out;
            o.shift = off;
            off += spec.out;
        }
        offsets_.push_back(o);
    }
    params_ = Eigen::VectorXd::Zero(off);
}

void Mlp::initialize(Rng& rng) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& spec = layers_[l];
        const auto& o = offsets_[l];
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.in));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(spec.in) * spec.out; ++i) {
            params_[o.weight + i] = u(rng);
        }
        for (int i = 0; i < spec.out; ++i) params_[o.bias + i] = u(rng);
        if (spec.layerNorm) {
            params_.segment(o.gain, spec.out).setOnes();
            params_.segment(o.shift, spec.out).setZero();
        }
    }
}

void Mlp::set_output_bias(double value) {
    params_.segment(offsets_.back().bias, layers_.back().out).setConstant(value);
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
    Tape scratch;
    return forward(x, scratch);
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Tape& tape) const {
    require(x.rows() == input_dim(), ErrorCode::DimensionMismatch, "input width mismatch");
    const auto n = layers_.size();
    tape.inputs.resize(n);
    tape.preActivation.resize(n);
    tape.normalized.resize(n);
    tape.invStd.resize(n);

    Eigen::MatrixXd a = x;
    for (std::size_t l = 0; l < n; ++l) {
        const auto& spec = layers_[l];
        const auto& o = offsets_[l];
        Eigen::Map<const Eigen::MatrixXd> W(params_.data() + o.weight, spec.out, spec.in);
        Eigen::Map<const Eigen::VectorXd> b(params_.data() + o.bias, spec.out);
        Eigen::MatrixXd h = W * a;
        h.colwise() += b;
        if (spec.layerNorm) {
            const Eigen::RowVectorXd mean = h.colwise().mean();
            h.rowwise() -= mean;
            const Eigen::RowVectorXd var = h.array().square().colwise().mean();
            tape.invStd[l] = (var.array() + kLayerNormEps).rsqrt();
            h.array().rowwise() *= tape.invStd[l].array();
            tape.normalized[l] = h;
            Eigen::Map<const Eigen::VectorXd> gain(params_.data() + o.gain, spec.out);
            Eigen::Map<const Eigen::VectorXd> shift(params_.data() + o.shift, spec.out);
            h.array().colwise() *= gain.array();
            h.colwise() += shift;
        }
        tape.inputs[l] = std::move(a);
        tape.preActivation[l] = h;
        apply_activation(spec.activation, h);
        a = std::move(h);
    }
    return a;
}

void Mlp::backward(const Tape& tape, const Eigen::MatrixXd& gradOut, Eigen::VectorXd& grad) const {
    require(grad.size() == params_.size(), ErrorCode::DimensionMismatch, "gradient size mismatch");
    Eigen::MatrixXd g = gradOut;
    for (std::size_t li = layers_.size(); li-- > 0;) {
        const auto& spec = layers_[li];
        const auto& o = offsets_[li];
        if (spec.activation != Activation::Identity) {
            g.array() *= activation_grad(spec.activation, tape.preActivation[li]).array();
        }
        if (spec.layerNorm) {
            const Eigen::MatrixXd& nrm = tape.normalized[li];
            Eigen::Map<const Eigen::VectorXd> gain(params_.data() + o.gain, spec.out);
            grad.segment(o.gain, spec.out) += (g.array() * nrm.array()).rowwise().sum().matrix();
            grad.segment(o.shift, spec.out) += g.rowwise().sum();
            Eigen::MatrixXd dn = g;
            dn.array().colwise() *= gain.array();
            const Eigen::RowVectorXd meanDn = dn.colwise().mean();
            const Eigen::RowVectorXd meanDnN = (dn.array() * nrm.array()).colwise().mean();
            g = dn;
            g.rowwise() -= meanDn;
            g.array() -= nrm.array().rowwise() * meanDnN.array();
            g.array().rowwise() *= tape.invStd[li].array();
        }
        Eigen::Map<Eigen::MatrixXd> dW(grad.data() + o.weight, spec.out, spec.in);
        dW.noalias() += g * tape.inputs[li].transpose();
        grad.segment(o.bias, spec.out) += g.rowwise().sum();
        if (li > 0) {
            Eigen::Map<const Eigen::MatrixXd> W(params_.data() + o.weight, spec.out, spec.in);
            g = W.transpose() * g;
        }
    }
}

Adam::Adam(Eigen::Index n, double learningRate, double beta1, double beta2, double epsilon)
    : m_(Eigen::VectorXd::Zero(n)),
      v_(Eigen::VectorXd::Zero(n)),
      lr_(learningRate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(epsilon) {}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

}  // namespace shield::nn
