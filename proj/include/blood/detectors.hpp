#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "blood/model.hpp"

namespace blood {

// Every score follows one convention: higher means more likely OOD.

double msp(const Tensor& probabilities);
/// Entropy in nats with 0 log 0 = 0.
double ent(const Tensor& probabilities);
/// -log sum exp(logits), shifted by the max logit for stability.
double egy(const Tensor& logits);

/// Entropy of the mean predictive distribution over `passes` dropout forwards.
/// Pass k uses stream (seed, Dropout, instance, k).
double mc_dropout(const Model& model, const Tensor& x, std::size_t passes, double rate, std::uint64_t seed,
                  std::uint32_t instance = 0);

enum class GradTarget {
    /// Weights of the head's final projection (the classic GRAD quantity).
    ProjectionWeights,
    /// Every head parameter.
    HeadParameters,
    /// The penultimate representation h_{L-1}.
    Representation,
};

/// "projection", "head", "representation".
std::string_view to_string(GradTarget target);
GradTarget parse_grad_target(std::string_view name);

/// Norm of the gradient of the cross-entropy at the predicted label.
double grad_norm(const Model& model, const Tensor& x, GradTarget target = GradTarget::ProjectionWeights);

/// Input of the head (h_{L-1}).
Tensor penultimate(const Model& model, const Tensor& x);

/// ASH-S: prune all but the largest (1 - fraction) activations of the pooled
/// penultimate row, rescale survivors by exp(s1 / s2), then score with energy
/// (or MSP) of the head output.
Tensor ash_s_shape(const Tensor& representation, double prune_fraction);
double ash_s(const Model& model, const Tensor& x, double prune_fraction = 0.9, bool use_energy = true);

/// Percentile with linear interpolation between order statistics.
double percentile(std::vector<double> values, double pct);

/// ReAct clamp threshold(s) from training penultimate rows: one pooled scalar,
/// or one per unit.
std::vector<double> react_thresholds(std::span<const Tensor> train_penultimate, double pct = 90.0,
                                     bool per_unit = false);
double react(const Model& model, const Tensor& x, std::span<const double> thresholds, bool use_energy = true);

/// Entropy of the average of the members' predictive distributions.
double ensemble_score(std::span<const Model> members, const Tensor& x);

struct TemperatureFit {
    double temperature = 1.0;
    /// The minimizer sits at an end of the search interval.
    bool at_boundary = false;
};

/// Golden-section search of log T in [-4, 4] for the validation NLL of
/// softmax(logits / T).
TemperatureFit temp_fit(std::span<const Tensor> logits, std::span<const int> labels);
double temperature_nll(std::span<const Tensor> logits, std::span<const int> labels, double temperature);
double temp_score(const Tensor& logits, double temperature);

struct MahalanobisFit {
    std::vector<Eigen::VectorXd> means;
    /// Regularized tied covariance.
    Eigen::MatrixXd covariance;
    Eigen::LLT<Eigen::MatrixXd> factor;
};

/// Class means and the tied within-class covariance (divided by N), plus
/// 1e-6 * trace / dim on the diagonal.
MahalanobisFit mahalanobis_fit(std::span<const Tensor> representations, std::span<const int> labels,
                               std::size_t num_classes);
/// min over classes of the squared Mahalanobis distance.
double mahalanobis_score(const MahalanobisFit& fit, const Tensor& z);

enum class DetectorId { Msp, Ent, Egy, McDropout, Grad, AshS, React, Ensemble, Temp, Mahalanobis };

std::string_view to_string(DetectorId id);
DetectorId parse_detector(std::string_view name);
std::vector<DetectorId> all_detectors();
/// Needs training resources (fit context) beyond the model itself.
bool is_open_box(DetectorId id);

struct DetectorOptions {
    std::size_t mc_passes = 30;
    double mc_rate = 0.1;
    std::uint64_t mc_seed = 0;
    double ash_fraction = 0.9;
    double react_percentile = 90.0;
    bool react_per_unit = false;
    /// ASH and ReAct finish with energy; false switches them to MSP.
    bool shaped_energy = true;
    GradTarget grad_target = GradTarget::ProjectionWeights;
};

/// Everything the open-box detectors need, built once and shared read-only.
struct FitContext {
    std::vector<double> react_thresholds;
    std::optional<MahalanobisFit> mahalanobis;
    std::optional<TemperatureFit> temperature;
    std::vector<Model> ensemble;
};

/// Builds the parts of the context the requested detectors need from training
/// data (ReAct, MD) and ID validation data (TEMP). Ensemble members are
/// supplied by the caller.
FitContext build_fit_context(const Model& model, std::span<const DetectorId> detectors,
                             std::span<const Tensor> train_x, std::span<const int> train_y,
                             std::span<const Tensor> val_x, std::span<const int> val_y,
                             const DetectorOptions& options = {});

double detector_score(DetectorId id, const Model& model, const Tensor& x, const FitContext& ctx,
                      const DetectorOptions& options = {}, std::uint32_t instance = 0);

}  // namespace blood
