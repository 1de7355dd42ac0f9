#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "shield/ensemble.hpp"
#include "shield/transition.hpp"

namespace shield {

enum class UncertaintyMethod { JRD, TotalUncertainty, MaxAleatoric };

std::string to_string(UncertaintyMethod m);
UncertaintyMethod parse_uncertainty_method(const std::string& s);

/// Closed-form order-2 Jensen-Renyi divergence of an equal-weight mixture of
/// diagonal Gaussians. Values within -1e-12 of zero are clamped to 0.
double jrd(std::span<const GaussianPrediction> preds);

/// Population variance of member means per dimension, summed over dimensions.
double total_uncertainty(std::span<const GaussianPrediction> preds);

/// max_k sqrt(sum_d var_kd^2).
double max_aleatoric(std::span<const GaussianPrediction> preds);

double scalarize(std::span<const GaussianPrediction> preds, UncertaintyMethod method);

/// Same three measures over column-major K-stacked predictions: means[k] and
/// vars[k] are d x B, output has B entries.
void scalarize_batch(const std::vector<Eigen::MatrixXd>& means,
                     const std::vector<Eigen::MatrixXd>& vars, UncertaintyMethod method,
                     std::span<double> out);

double measure(const Ensemble& ens, const DubinsState& z, ActionId a, UncertaintyMethod method);

/// Batched measure over many states with a fixed action.
void measure_batch(const Ensemble& ens, std::span<const DubinsState> z, ActionId a,
                   UncertaintyMethod method, std::span<double> out);

/// Ensemble mean of member means. The heading is averaged on the circle.
DubinsState ensemble_mean(std::span<const GaussianPrediction> preds);

/// Ensemble-backed transition: next state is the mean prediction and u the
/// selected uncertainty measure.
class EnsembleDynamics final : public TransitionModel {
public:
    EnsembleDynamics(const Ensemble& ens, UncertaintyMethod method) : ens_(ens), method_(method) {}

    void predict(std::span<const DubinsState> z, ActionId a, std::span<DubinsState> next,
                 std::span<double> u) const override;

    const Ensemble& ensemble() const { return ens_; }
    UncertaintyMethod method() const { return method_; }

private:
    const Ensemble& ens_;
    UncertaintyMethod method_;
};

}  // namespace shield
