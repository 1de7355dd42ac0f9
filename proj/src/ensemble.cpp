#include "shield/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "shield/errors.hpp"

namespace shield {

Eigen::Vector4d state_features(const DubinsState& s) {
    return {s.px, s.py, std::cos(s.theta), std::sin(s.theta)};
}

Eigen::Matrix<double, kFeatureDim, 1> transition_features(const DubinsState& s, ActionId a) {
    Eigen::Matrix<double, kFeatureDim, 1> f = Eigen::Matrix<double, kFeatureDim, 1>::Zero();
    f.head<kStateFeatureDim>() = state_features(s);
    f[kStateFeatureDim + a.index()] = 1.0;
    return f;
}

std::vector<nn::LayerSpec> member_architecture(int inDim, int outDim, int width) {
    using nn::Activation;
    require(inDim > 0 && outDim > 0 && width >= 0, ErrorCode::InvalidArgument, "invalid layer sizes");
    const int w = width == 0 ? inDim : width;
    return {
        {inDim, w, true, Activation::SiLU},
        {w, 2 * w, true, Activation::SiLU},
        {2 * w, 3 * w, true, Activation::SiLU},
        {3 * w, w, true, Activation::SiLU},
        {w, 2 * outDim, false, Activation::Identity},
    };
}

std::vector<StateTransition> transitions_of(const Dataset& d) {
    std::vector<StateTransition> out;
    out.reserve(d.transitions());
    for (const auto& tr : d.trajectories) {
        for (std::size_t t = 0; t < tr.actions.size(); ++t) {
            out.push_back({tr.states[t], tr.actions[t], tr.states[t + 1]});
        }
    }
    return out;
}

Eigen::Vector3d state_residual(const Eigen::Vector3d& target, const Eigen::Vector3d& mean) {
    Eigen::Vector3d r = target - mean;
    r[2] = wrap_angle(r[2]);
    return r;
}

double nll_loss(const GaussianPrediction& pred, const Eigen::VectorXd& target) {
    require(pred.mean.size() == target.size() && pred.variance.size() == target.size(),
            ErrorCode::DimensionMismatch, "prediction and target dimensions differ");
    const Eigen::ArrayXd r = (pred.mean - target).array();
    return (r.square() / pred.variance.array()).sum() + pred.variance.array().log().sum();
}

void validate(const EnsembleConfig& cfg) {
    require(cfg.K >= 1 && cfg.width >= 0 && cfg.epochs >= 0 && cfg.warmupEpochs >= 0 && cfg.batchSize >= 1 && cfg.learningRate > 0.0 &&
                cfg.finalLearningRateFraction > 0.0 && cfg.finalLearningRateFraction <= 1.0 &&
                cfg.varFloor > 0.0,
            ErrorCode::InvalidArgument, "invalid ensemble training configuration");
}

Ensemble::Ensemble(int K, std::uint64_t seed, double varFloor, int width)
    : varFloor_(varFloor), width_(width), seed_(seed) {
    require(K >= 1, ErrorCode::InvalidArgument, "ensemble needs at least one member");
    require(varFloor > 0.0, ErrorCode::InvalidArgument, "variance floor must be > 0");
    for (int k = 0; k < K; ++k) {
        nn::Mlp m(member_architecture(kFeatureDim, kStateDim, width));
        Rng rng = make_rng(seed, static_cast<std::uint64_t>(k));
        m.initialize(rng);
        members_.push_back(std::move(m));
    }
    finalLoss_.assign(static_cast<std::size_t>(K), std::numeric_limits<double>::quiet_NaN());
}

Ensemble::Ensemble(const Ensemble& o)
    : members_(o.members_), finalLoss_(o.finalLoss_), scale_(o.scale_), anchor_(o.anchor_),
      varFloor_(o.varFloor_), width_(o.width_), seed_(o.seed_) {}

Ensemble& Ensemble::operator=(const Ensemble& o) {
    if (this != &o) {
        members_ = o.members_;
        finalLoss_ = o.finalLoss_;
        scale_ = o.scale_;
        anchor_ = o.anchor_;
        varFloor_ = o.varFloor_;
        width_ = o.width_;
        seed_ = o.seed_;
        forwards_.store(0);
    }
    return *this;
}

Ensemble Ensemble::permuted(const std::vector<int>& order) const {
    require(order.size() == members_.size(), ErrorCode::DimensionMismatch, "permutation size");
    Ensemble out(*this);
    for (std::size_t i = 0; i < order.size(); ++i) {
        out.members_[i] = members_[static_cast<std::size_t>(order[i])];
        out.finalLoss_[i] = finalLoss_[static_cast<std::size_t>(order[i])];
    }
    return out;
}

namespace {

Eigen::MatrixXd feature_batch(std::span<const DubinsState> z, ActionId a) {
    Eigen::MatrixXd x(kFeatureDim, static_cast<Eigen::Index>(z.size()));
    for (std::size_t i = 0; i < z.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = transition_features(z[i], a);
    return x;
}

Eigen::MatrixXd feature_batch(std::span<const StateTransition> batch) {
    Eigen::MatrixXd x(kFeatureDim, static_cast<Eigen::Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        x.col(static_cast<Eigen::Index>(i)) = transition_features(batch[i].z, batch[i].a);
    }
    return x;
}

Eigen::Vector3d as_vec(const DubinsState& s) { return {s.px, s.py, s.theta}; }

}  // namespace

Eigen::Vector3d Ensemble::mean_of(const DubinsState& z, const Eigen::MatrixXd& raw,
                                  Eigen::Index col) const {
    const Eigen::Vector3d base = as_vec(z);
    Eigen::Vector3d m;
    for (int d = 0; d < kStateDim; ++d) m[d] = anchor_[d] * base[d] + scale_[d] * raw(d, col);
    return m;
}

void Ensemble::decode(const Eigen::MatrixXd& raw, std::span<const DubinsState> z,
                      Eigen::MatrixXd& means, Eigen::MatrixXd& variances) const {
    const auto B = raw.cols();
    means.resize(kStateDim, B);
    variances.resize(kStateDim, B);
    for (Eigen::Index i = 0; i < B; ++i) {
        means.col(i) = mean_of(z[static_cast<std::size_t>(i)], raw, i);
        for (int d = 0; d < kStateDim; ++d) {
            variances(d, i) = scale_[d] * scale_[d] * nn::softplus(raw(kStateDim + d, i)) + varFloor_;
        }
        means(2, i) = wrap_angle(means(2, i));
    }
}

void Ensemble::predict_member_batch(int k, std::span<const DubinsState> z, ActionId a,
                                    Eigen::MatrixXd& means, Eigen::MatrixXd& variances) const {
    require(k >= 0 && k < size(), ErrorCode::DimensionMismatch, "member index out of range");
    forwards_.fetch_add(1, std::memory_order_relaxed);
    decode(member(k).forward(feature_batch(z, a)), z, means, variances);
}

GaussianPrediction Ensemble::predict_member(int k, const DubinsState& z, ActionId a) const {
    Eigen::MatrixXd m, v;
    predict_member_batch(k, std::span(&z, 1), a, m, v);
    return {m.col(0), v.col(0)};
}

std::vector<GaussianPrediction> Ensemble::predict_all(const DubinsState& z, ActionId a) const {
    std::vector<GaussianPrediction> out;
    out.reserve(members_.size());
    for (int k = 0; k < size(); ++k) out.push_back(predict_member(k, z, a));
    return out;
}

double Ensemble::loss_and_gradient(int k, std::span<const StateTransition> batch,
                                   Eigen::VectorXd& grad, double beta) const {
    require(!batch.empty(), ErrorCode::EmptyDataset, "loss over an empty batch");
    const nn::Mlp& net = member(k);
    nn::Mlp::Tape tape;
    const Eigen::MatrixXd raw = net.forward(feature_batch(batch), tape);
    const auto B = static_cast<Eigen::Index>(batch.size());
    const double invB = 1.0 / static_cast<double>(B);

    Eigen::MatrixXd dRaw(2 * kStateDim, B);
    double total = 0.0;
    for (Eigen::Index i = 0; i < B; ++i) {
        const auto& tr = batch[static_cast<std::size_t>(i)];
        const Eigen::Vector3d r = state_residual(as_vec(tr.next), mean_of(tr.z, raw, i));
        for (int d = 0; d < kStateDim; ++d) {
            const double rv = raw(kStateDim + d, i);
            const double s2 = scale_[d] * scale_[d];
            const double var = s2 * nn::softplus(rv) + varFloor_;
            total += r[d] * r[d] / var + std::log(var);
            const double w = beta == 0.0 ? invB : std::pow(var, beta) * invB;
            // r = target - mean, so d(r^2/var)/d(mean) = -2 r / var
            dRaw(d, i) = -2.0 * r[d] / var * scale_[d] * w;
            dRaw(kStateDim + d, i) = (1.0 / var - r[d] * r[d] / (var * var)) * s2 * nn::sigmoid(rv) * w;
        }
    }
    grad = Eigen::VectorXd::Zero(net.parameter_count());
    net.backward(tape, dRaw, grad);
    forwards_.fetch_add(1, std::memory_order_relaxed);
    return total * invB;
}

double Ensemble::loss(int k, std::span<const StateTransition> batch) const {
    require(!batch.empty(), ErrorCode::EmptyDataset, "loss over an empty batch");
    double total = 0.0;
    constexpr std::size_t kChunk = 4096;
    for (std::size_t lo = 0; lo < batch.size(); lo += kChunk) {
        const auto part = batch.subspan(lo, std::min(kChunk, batch.size() - lo));
        const Eigen::MatrixXd raw = member(k).forward(feature_batch(part));
        for (std::size_t i = 0; i < part.size(); ++i) {
            const auto col = static_cast<Eigen::Index>(i);
            const Eigen::Vector3d r = state_residual(as_vec(part[i].next), mean_of(part[i].z, raw, col));
            for (int d = 0; d < kStateDim; ++d) {
                const double var =
                    scale_[d] * scale_[d] * nn::softplus(raw(kStateDim + d, col)) + varFloor_;
                total += r[d] * r[d] / var + std::log(var);
            }
        }
    }
    return total / static_cast<double>(batch.size());
}

Eigen::VectorXd loss_gradient(const Ensemble& ens, int k, std::span<const StateTransition> batch) {
    Eigen::VectorXd g;
    ens.loss_and_gradient(k, batch, g);
    return g;
}

Eigen::Vector3d increment_scale(std::span<const StateTransition> data) {
    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    for (const auto& tr : data) {
        const Eigen::Vector3d inc = state_residual(as_vec(tr.next), as_vec(tr.z));
        acc += inc.cwiseAbs2();
    }
    if (!data.empty()) acc /= static_cast<double>(data.size());
    return acc.cwiseSqrt().cwiseMax(1e-3);
}

Eigen::Vector3d target_scale(std::span<const StateTransition> data) {
    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    for (const auto& tr : data) acc += as_vec(tr.next).cwiseAbs2();
    if (!data.empty()) acc /= static_cast<double>(data.size());
    return acc.cwiseSqrt().cwiseMax(1e-3);
}

namespace {

double cosine_rate(const EnsembleConfig& cfg, int epoch) {
    if (cfg.epochs <= 1) return cfg.learningRate;
    const double t = static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1);
    const double lo = cfg.finalLearningRateFraction;
    return cfg.learningRate * (lo + (1.0 - lo) * 0.5 * (1.0 + std::cos(std::numbers::pi * t)));
}

}  // namespace

Ensemble train(const Dataset& trainSet, const EnsembleConfig& cfg) {
    validate(cfg);
    const std::vector<StateTransition> data = transitions_of(trainSet);
    require(!data.empty(), ErrorCode::EmptyDataset, "training set has no transitions");

    Ensemble ens(cfg.K, cfg.seed, cfg.varFloor, cfg.width);
    Eigen::Vector3d scale = increment_scale(data);
    Eigen::Vector3d anchor = Eigen::Vector3d::Ones();
    if (cfg.absolutePosition) {
        const Eigen::Vector3d direct = target_scale(data);
        scale.head<2>() = direct.head<2>();
        anchor.head<2>().setZero();
    }
    ens.set_output_scale(scale);
    ens.set_output_anchor(anchor);

    std::vector<std::size_t> order(data.size());
    std::vector<StateTransition> batch;
    Eigen::VectorXd grad;
    for (int k = 0; k < cfg.K; ++k) {
        Rng rng = make_rng(cfg.seed, 1000 + static_cast<std::uint64_t>(k));
        nn::Mlp& net = ens.member(k);
        nn::Adam opt(net.parameter_count(), cfg.learningRate);
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            opt.set_learning_rate(cosine_rate(cfg, epoch));
            std::shuffle(order.begin(), order.end(), rng);
            for (std::size_t lo = 0; lo < order.size(); lo += static_cast<std::size_t>(cfg.batchSize)) {
                const std::size_t hi = std::min(order.size(), lo + static_cast<std::size_t>(cfg.batchSize));
                batch.clear();
                for (std::size_t i = lo; i < hi; ++i) batch.push_back(data[order[i]]);
                ens.loss_and_gradient(k, batch, grad, epoch < cfg.warmupEpochs ? 1.0 : 0.0);
                opt.step(net.parameters(), grad);
            }
        }
        ens.final_losses()[static_cast<std::size_t>(k)] = ens.loss(k, data);
    }
    return ens;
}

double MarginModel::failure_probability(const DubinsState& z) const {
    const Eigen::MatrixXd out = net.forward(state_features(z));
    return nn::sigmoid(out(0, 0));
}

double MarginModel::margin_of(const DubinsState& z) const { return 1.0 - 2.0 * failure_probability(z); }

std::vector<double> MarginModel::margins(std::span<const DubinsState> z) const {
    Eigen::MatrixXd x(kStateFeatureDim, static_cast<Eigen::Index>(z.size()));
    for (std::size_t i = 0; i < z.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = state_features(z[i]);
    const Eigen::MatrixXd out = net.forward(x);
    std::vector<double> m(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        m[i] = 1.0 - 2.0 * nn::sigmoid(out(0, static_cast<Eigen::Index>(i)));
    }
    return m;
}

MarginModel train_margin_classifier(const Dataset& trainSet, const MarginTrainConfig& cfg) {
    std::vector<DubinsState> states;
    std::vector<double> fail;
    for (const auto& tr : trainSet.trajectories) {
        for (std::size_t t = 0; t < tr.states.size(); ++t) {
            states.push_back(tr.states[t]);
            fail.push_back(tr.labels[t] < 0 ? 1.0 : 0.0);
        }
    }
    require(!states.empty(), ErrorCode::EmptyDataset, "no states to train the margin classifier");
    const double nFail = std::accumulate(fail.begin(), fail.end(), 0.0);
    const double n = static_cast<double>(states.size());

    using nn::Activation;
    MarginModel model;
    model.net = nn::Mlp({{kStateFeatureDim, cfg.hidden, false, Activation::SiLU},
                         {cfg.hidden, cfg.hidden, false, Activation::SiLU},
                         {cfg.hidden, 1, false, Activation::Identity}});
    Rng rng = make_rng(cfg.seed, 0);
    model.net.initialize(rng);
    model.degenerate = nFail == 0.0 || nFail == n;

    const double wFail = nFail > 0.0 ? n / (2.0 * nFail) : 1.0;
    const double wSafe = nFail < n ? n / (2.0 * (n - nFail)) : 1.0;

    nn::Adam opt(model.net.parameter_count(), cfg.learningRate);
    std::vector<std::size_t> order(states.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Eigen::VectorXd grad(model.net.parameter_count());
    nn::Mlp::Tape tape;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t lo = 0; lo < order.size(); lo += static_cast<std::size_t>(cfg.batchSize)) {
            const std::size_t hi = std::min(order.size(), lo + static_cast<std::size_t>(cfg.batchSize));
            const auto B = static_cast<Eigen::Index>(hi - lo);
            Eigen::MatrixXd x(kStateFeatureDim, B);
            for (Eigen::Index i = 0; i < B; ++i) x.col(i) = state_features(states[order[lo + static_cast<std::size_t>(i)]]);
            const Eigen::MatrixXd logits = model.net.forward(x, tape);
            Eigen::MatrixXd dOut(1, B);
            for (Eigen::Index i = 0; i < B; ++i) {
                const double y = fail[order[lo + static_cast<std::size_t>(i)]];
                const double w = y > 0.5 ? wFail : wSafe;
                dOut(0, i) = w * (nn::sigmoid(logits(0, i)) - y) / static_cast<double>(B);
            }
            grad.setZero();
            model.net.backward(tape, dOut, grad);
            opt.step(model.net.parameters(), grad);
        }
    }
    model.trainAccuracy = classifier_accuracy(model, trainSet);
    return model;
}

double classifier_accuracy(const MarginModel& m, const Dataset& d) {
    std::vector<DubinsState> states;
    std::vector<int> labels;
    for (const auto& tr : d.trajectories) {
        states.insert(states.end(), tr.states.begin(), tr.states.end());
        labels.insert(labels.end(), tr.labels.begin(), tr.labels.end());
    }
    if (states.empty()) return 0.0;
    const auto mg = m.margins(states);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < mg.size(); ++i) correct += ((mg[i] < 0.0 ? -1 : 1) == labels[i]) ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(mg.size());
}

}  // namespace shield
