#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "blood/model.hpp"

namespace blood {

enum class VectorDistribution { Gaussian, Rademacher };

/// Which single-sample quantity is averaged.
enum class EstimatorForm {
    /// (w^T J v)^2 with independent v and w.
    Bilinear,
    /// ||J v||^2, the lower-variance one-sided form.
    Pushforward,
};

/// For token-matrix representations: restrict v and w to the pooled row
/// (the sub-Jacobian between pooled slots) or use the whole layer Jacobian.
enum class JacobianScope { PooledSlot, Full };

std::string_view to_string(VectorDistribution d);
std::string_view to_string(EstimatorForm f);
std::string_view to_string(JacobianScope s);
VectorDistribution parse_vector_distribution(std::string_view name);
EstimatorForm parse_estimator_form(std::string_view name);
JacobianScope parse_jacobian_scope(std::string_view name);

struct BloodConfig {
    std::size_t m_samples = 50;
    VectorDistribution distribution = VectorDistribution::Gaussian;
    EstimatorForm form = EstimatorForm::Bilinear;
    JacobianScope scope = JacobianScope::PooledSlot;
    std::uint64_t seed = 0;
    /// Inclusive layer range; 0 selects the default bound (1 and L-1).
    std::size_t first_layer = 0;
    std::size_t last_layer = 0;

    struct Range {
        std::size_t first, last;
    };
    /// Resolved range, checked against the model depth.
    Range layer_range(const Model& model) const;
    void validate(const Model& model) const;
};

/// phi_l for l in the configured range, in increasing l.
struct LayerScores {
    std::size_t first_layer = 1;
    std::vector<double> values;
};

/// Parameters of a probe through one layer function at one point.
struct ProbeSpec {
    VectorDistribution distribution = VectorDistribution::Gaussian;
    EstimatorForm form = EstimatorForm::Bilinear;
    JacobianScope scope = JacobianScope::Full;
    std::size_t pooled_slot = 0;
};

/// One single-sample estimate of ||J_f(h)||_F^2 using one forward-mode pass.
double phi_sample(const Layer& f, const Tensor& h, const ProbeSpec& probe, CounterRng& rng);

/// n independent single-sample estimates, sample i drawn from stream
/// (seed, Estimator, stream, 0, i).
std::vector<double> phi_samples(const Layer& f, const Tensor& h, const ProbeSpec& probe, std::size_t n,
                                std::uint64_t seed, std::uint32_t stream = 0);

/// ||J_f(h)||_F^2 (restricted to the scope) from assembled Jacobian columns.
/// Oracle only: subject to the exact_jacobian column cap.
double exact_layer_phi(const Layer& f, const Tensor& h, JacobianScope scope = JacobianScope::Full,
                       std::size_t pooled_slot = 0);

/// Estimate of phi_l(x) for the transition f_{l+1} at h_l, 1 <= l <= L-1.
/// Sample i uses stream (seed, Estimator, instance, l, i).
double estimate_phi(const Model& model, const Tensor& x, std::size_t l, const BloodConfig& cfg,
                    std::uint32_t instance = 0);
double exact_phi(const Model& model, const Tensor& x, std::size_t l, JacobianScope scope = JacobianScope::PooledSlot);

LayerScores layer_scores(const Model& model, const Tensor& x, const BloodConfig& cfg, std::uint32_t instance = 0);

/// Scores every input; instance ids are the positions in `inputs`. With
/// jobs > 1 the work is split across threads; output does not depend on jobs.
std::vector<LayerScores> score_all(const Model& model, std::span<const Tensor> inputs, const BloodConfig& cfg,
                                   std::size_t jobs = 1);

double blood_m(const LayerScores& scores);
double blood_l(const LayerScores& scores);
/// Mean of per-layer scores divided by per-layer reference scales (for
/// instance the ID training means), so no single layer dominates.
double blood_m_normalized(const LayerScores& scores, std::span<const double> layer_scales);

/// Per-layer ID means, usable as scales for blood_m_normalized.
std::vector<double> layer_means(std::span<const LayerScores> scores);

/// Logistic model over per-layer scores. Features are optionally log
/// transformed, then standardized with the validation statistics.
struct OpenBoxWeights {
    std::vector<double> weights;
    double bias = 0.0;
    bool log_features = true;
    std::vector<double> feature_mean;
    std::vector<double> feature_scale;
    std::size_t iterations = 0;
    bool converged = false;
};

struct OpenBoxOptions {
    bool log_features = true;
    double ridge = 1e-8;
    double tolerance = 1e-8;
    std::size_t max_iterations = 10000;
};

/// Maximizes the (ridge-penalized) log-likelihood of is_ood given the
/// per-layer scores.
OpenBoxWeights openbox_fit(std::span<const LayerScores> scores, const std::vector<bool>& is_ood,
                           const OpenBoxOptions& options = {});
/// Fitted probability of being OOD.
double openbox_score(const OpenBoxWeights& weights, const LayerScores& scores);
/// The affine predictor inside openbox_score. Same ranking, but it does not
/// saturate, so use it when ranking instances.
double openbox_logit(const OpenBoxWeights& weights, const LayerScores& scores);

}  // namespace blood
