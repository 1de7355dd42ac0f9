#include "shield/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "shield/errors.hpp"

namespace shield {

std::string to_string(UncertaintyMethod m) {
    switch (m) {
        case UncertaintyMethod::JRD: return "jrd";
        case UncertaintyMethod::TotalUncertainty: return "total_uncertainty";
        case UncertaintyMethod::MaxAleatoric: return "max_aleatoric";
    }
    return "unknown";
}

UncertaintyMethod parse_uncertainty_method(const std::string& s) {
    if (s == "jrd") return UncertaintyMethod::JRD;
    if (s == "total_uncertainty") return UncertaintyMethod::TotalUncertainty;
    if (s == "max_aleatoric") return UncertaintyMethod::MaxAleatoric;
    throw Error(ErrorCode::InvalidArgument, "unknown uncertainty method '" + s + "'");
}

namespace {

template <class Mean, class Var>
double jrd_core(int K, int d, Mean mean, Var var) {
    require(K >= 1, ErrorCode::TooFewMembers, "JRD needs at least one member");
    for (int k = 0; k < K; ++k) {
        for (int j = 0; j < d; ++j) {
            const double v = var(k, j);
            require(v > 0.0 && std::isfinite(v), ErrorCode::NonPositiveVariance,
                    "predicted variances must be positive and finite");
        }
    }
    if (K == 1) return 0.0;
    // log D_ij = -1/2 sum log(phi) - 1/2 sum delta^2 / phi; the (2 pi) factors cancel.
    double maxLog = -std::numeric_limits<double>::infinity();
    double selfSum = 0.0;
    thread_local std::vector<double> logD;
    logD.resize(static_cast<std::size_t>(K) * static_cast<std::size_t>(K));
    for (int i = 0; i < K; ++i) {
        for (int j = i; j < K; ++j) {
            double acc = 0.0;
            for (int t = 0; t < d; ++t) {
                const double phi = var(i, t) + var(j, t);
                const double delta = mean(i, t) - mean(j, t);
                acc += std::log(phi) + delta * delta / phi;
            }
            const double v = -0.5 * acc;
            logD[static_cast<std::size_t>(i * K + j)] = v;
            logD[static_cast<std::size_t>(j * K + i)] = v;
            maxLog = std::max(maxLog, v);
            if (i == j) selfSum += v;
        }
    }
    double s = 0.0;
    for (double v : logD) s += std::exp(v - maxLog);
    const double logK = std::log(static_cast<double>(K));
    double out = -(maxLog + std::log(s)) + 2.0 * logK + selfSum / K;
    if (out < 0.0 && out > -1e-12) out = 0.0;
    return out;
}

template <class Mean>
double total_core(int K, int d, Mean mean) {
    require(K >= 2, ErrorCode::TooFewMembers, "total uncertainty needs at least two members");
    double total = 0.0;
    for (int t = 0; t < d; ++t) {
        double m = 0.0;
        for (int k = 0; k < K; ++k) m += mean(k, t);
        m /= K;
        double v = 0.0;
        for (int k = 0; k < K; ++k) v += (mean(k, t) - m) * (mean(k, t) - m);
        total += v / K;
    }
    return total;
}

template <class Var>
double aleatoric_core(int K, int d, Var var) {
    require(K >= 1, ErrorCode::TooFewMembers, "max aleatoric needs at least one member");
    double best = 0.0;
    for (int k = 0; k < K; ++k) {
        double s = 0.0;
        for (int t = 0; t < d; ++t) s += var(k, t) * var(k, t);
        best = std::max(best, std::sqrt(s));
    }
    return best;
}

template <class Mean, class Var>
double dispatch(int K, int d, Mean mean, Var var, UncertaintyMethod method) {
    switch (method) {
        case UncertaintyMethod::JRD: return jrd_core(K, d, mean, var);
        case UncertaintyMethod::TotalUncertainty: return total_core(K, d, mean);
        case UncertaintyMethod::MaxAleatoric: return aleatoric_core(K, d, var);
    }
    throw Error(ErrorCode::InvalidArgument, "unknown uncertainty method");
}

int common_dim(std::span<const GaussianPrediction> preds) {
    if (preds.empty()) return 0;
    const auto d = preds.front().mean.size();
    for (const auto& p : preds) {
        require(p.mean.size() == d && p.variance.size() == d, ErrorCode::DimensionMismatch,
                "ensemble predictions have inconsistent dimensions");
    }
    return static_cast<int>(d);
}

}  // namespace

double scalarize(std::span<const GaussianPrediction> preds, UncertaintyMethod method) {
    const int d = common_dim(preds);
    const int K = static_cast<int>(preds.size());
    auto mean = [&](int k, int t) { return preds[static_cast<std::size_t>(k)].mean[t]; };
    auto var = [&](int k, int t) { return preds[static_cast<std::size_t>(k)].variance[t]; };
    return dispatch(K, d, mean, var, method);
}

double jrd(std::span<const GaussianPrediction> preds) { return scalarize(preds, UncertaintyMethod::JRD); }

double total_uncertainty(std::span<const GaussianPrediction> preds) {
    return scalarize(preds, UncertaintyMethod::TotalUncertainty);
}

double max_aleatoric(std::span<const GaussianPrediction> preds) {
    return scalarize(preds, UncertaintyMethod::MaxAleatoric);
}

void scalarize_batch(const std::vector<Eigen::MatrixXd>& means, const std::vector<Eigen::MatrixXd>& vars,
                     UncertaintyMethod method, std::span<double> out) {
    require(means.size() == vars.size(), ErrorCode::DimensionMismatch, "means/vars member count");
    const int K = static_cast<int>(means.size());
    require(K >= 1, ErrorCode::TooFewMembers, "no ensemble members");
    const int d = static_cast<int>(means.front().rows());
    for (int k = 0; k < K; ++k) {
        require(means[static_cast<std::size_t>(k)].rows() == d &&
                    vars[static_cast<std::size_t>(k)].rows() == d &&
                    means[static_cast<std::size_t>(k)].cols() == static_cast<Eigen::Index>(out.size()) &&
                    vars[static_cast<std::size_t>(k)].cols() == static_cast<Eigen::Index>(out.size()),
                ErrorCode::DimensionMismatch, "batched prediction shapes differ");
    }
    for (std::size_t b = 0; b < out.size(); ++b) {
        const auto col = static_cast<Eigen::Index>(b);
        auto mean = [&](int k, int t) { return means[static_cast<std::size_t>(k)](t, col); };
        auto var = [&](int k, int t) { return vars[static_cast<std::size_t>(k)](t, col); };
        out[b] = dispatch(K, d, mean, var, method);
    }
}

double measure(const Ensemble& ens, const DubinsState& z, ActionId a, UncertaintyMethod method) {
    const auto preds = ens.predict_all(z, a);
    return scalarize(preds, method);
}

void measure_batch(const Ensemble& ens, std::span<const DubinsState> z, ActionId a,
                   UncertaintyMethod method, std::span<double> out) {
    require(z.size() == out.size(), ErrorCode::DimensionMismatch, "measure_batch output size");
    std::vector<Eigen::MatrixXd> means(static_cast<std::size_t>(ens.size()));
    std::vector<Eigen::MatrixXd> vars(means.size());
    for (int k = 0; k < ens.size(); ++k) {
        ens.predict_member_batch(k, z, a, means[static_cast<std::size_t>(k)], vars[static_cast<std::size_t>(k)]);
    }
    scalarize_batch(means, vars, method, out);
}

DubinsState ensemble_mean(std::span<const GaussianPrediction> preds) {
    require(!preds.empty(), ErrorCode::TooFewMembers, "mean of an empty ensemble");
    double px = 0.0, py = 0.0, c = 0.0, s = 0.0;
    for (const auto& p : preds) {
        require(p.mean.size() == kStateDim, ErrorCode::DimensionMismatch, "expected a 3-D state");
        px += p.mean[0];
        py += p.mean[1];
        c += std::cos(p.mean[2]);
        s += std::sin(p.mean[2]);
    }
    const double K = static_cast<double>(preds.size());
    return {px / K, py / K, wrap_angle(std::atan2(s, c))};
}

void EnsembleDynamics::predict(std::span<const DubinsState> z, ActionId a, std::span<DubinsState> next,
                               std::span<double> u) const {
    require(z.size() == next.size() && z.size() == u.size(), ErrorCode::DimensionMismatch,
            "predict output sizes");
    const int K = ens_.size();
    std::vector<Eigen::MatrixXd> means(static_cast<std::size_t>(K));
    std::vector<Eigen::MatrixXd> vars(means.size());
    for (int k = 0; k < K; ++k) {
        ens_.predict_member_batch(k, z, a, means[static_cast<std::size_t>(k)], vars[static_cast<std::size_t>(k)]);
    }
    for (std::size_t b = 0; b < z.size(); ++b) {
        const auto col = static_cast<Eigen::Index>(b);
        double px = 0.0, py = 0.0, c = 0.0, s = 0.0;
        for (const auto& m : means) {
            px += m(0, col);
            py += m(1, col);
            c += std::cos(m(2, col));
            s += std::sin(m(2, col));
        }
        next[b] = {px / K, py / K, wrap_angle(std::atan2(s, c))};
    }
    scalarize_batch(means, vars, method_, u);
}

}  // namespace shield
