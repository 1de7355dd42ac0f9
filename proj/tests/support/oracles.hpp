#pragma once

// Independent reference computations used only by tests.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "shield/dynamics.hpp"

namespace shield::oracle {

/// Exhaustive action-tree search: max over all 3^H action sequences of the
/// running-min analytic margin along the rollout (including the start state).
inline double action_tree_value(const DubinsState& s, int horizon, const WorldConfig& cfg) {
    const double here = margin(s, cfg.failure);
    if (horizon == 0) return here;
    double best = -1e300;
    for (int a = 0; a < kNumActions; ++a) {
        best = std::max(best, action_tree_value(step(s, ActionId(a), cfg), horizon - 1, cfg));
        if (best >= here) break;  // running min cannot exceed the current margin
    }
    return std::min(here, best);
}

/// Quadratic Renyi entropy -log E_p[p(x)] of a diagonal Gaussian mixture
/// with uniform weights, estimated by sampling.
struct DiagGaussian {
    std::vector<double> mean;
    std::vector<double> var;
};

inline double diag_density(const DiagGaussian& g, const std::vector<double>& x) {
    double logp = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
        const double r = x[d] - g.mean[d];
        logp += -0.5 * std::log(2.0 * M_PI * g.var[d]) - 0.5 * r * r / g.var[d];
    }
    return std::exp(logp);
}

inline double mixture_density(const std::vector<DiagGaussian>& mix, const std::vector<double>& x) {
    double p = 0.0;
    for (const auto& g : mix) p += diag_density(g, x);
    return p / static_cast<double>(mix.size());
}

/// Stratified sampling: samples/K draws from every component.
inline double mc_quadratic_renyi(const std::vector<DiagGaussian>& mix, long samples,
                                 std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const long per = samples / static_cast<long>(mix.size());
    const std::size_t dim = mix.front().mean.size();
    std::vector<double> x(dim);
    double acc = 0.0;
    for (const auto& g : mix) {
        for (long i = 0; i < per; ++i) {
            for (std::size_t d = 0; d < dim; ++d) x[d] = g.mean[d] + std::sqrt(g.var[d]) * normal(rng);
            acc += mixture_density(mix, x);
        }
    }
    return -std::log(acc / static_cast<double>(per * static_cast<long>(mix.size())));
}

/// Monte-Carlo Jensen-Renyi divergence of order 2. Each member draws
/// `samples` points scored under both its own density and the mixture, so the
/// sampling noise of the two entropy terms is shared.
inline double mc_jrd(const std::vector<DiagGaussian>& members, long samples, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t dim = members.front().mean.size();
    std::vector<double> x(dim);
    double mixAcc = 0.0;
    double memberEntropy = 0.0;
    for (const auto& g : members) {
        double own = 0.0;
        for (long i = 0; i < samples; ++i) {
            for (std::size_t d = 0; d < dim; ++d) x[d] = g.mean[d] + std::sqrt(g.var[d]) * normal(rng);
            own += diag_density(g, x);
            mixAcc += mixture_density(members, x);
        }
        memberEntropy += -std::log(own / static_cast<double>(samples));
    }
    const double mixEntropy = -std::log(mixAcc / static_cast<double>(samples * static_cast<long>(members.size())));
    return mixEntropy - memberEntropy / static_cast<double>(members.size());
}

/// Kolmogorov limiting distribution survival function; p-value of sqrt(n) D.
inline double kolmogorov_pvalue(double lambda) {
    if (lambda < 1e-3) return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 200; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 == 1 ? 2.0 : -2.0) * term;
        if (term < 1e-16) break;
    }
    return std::clamp(sum, 0.0, 1.0);
}

}  // namespace shield::oracle
