#include "blood/blood.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "blood/errors.hpp"
#include "blood/parallel.hpp"

namespace blood {

std::string_view to_string(VectorDistribution d) { return d == VectorDistribution::Gaussian ? "gaussian" : "rademacher"; }
std::string_view to_string(EstimatorForm f) { return f == EstimatorForm::Bilinear ? "bilinear" : "pushforward"; }
std::string_view to_string(JacobianScope s) { return s == JacobianScope::PooledSlot ? "pooled-slot" : "full"; }

VectorDistribution parse_vector_distribution(std::string_view name)
{
    if (name == "gaussian") return VectorDistribution::Gaussian;
    if (name == "rademacher") return VectorDistribution::Rademacher;
    throw InvalidArgument("unknown vector distribution '" + std::string(name) + "'");
}

EstimatorForm parse_estimator_form(std::string_view name)
{
    if (name == "bilinear") return EstimatorForm::Bilinear;
    if (name == "pushforward") return EstimatorForm::Pushforward;
    throw InvalidArgument("unknown estimator form '" + std::string(name) + "'");
}

JacobianScope parse_jacobian_scope(std::string_view name)
{
    if (name == "pooled-slot") return JacobianScope::PooledSlot;
    if (name == "full") return JacobianScope::Full;
    throw InvalidArgument("unknown jacobian scope '" + std::string(name) + "'");
}

BloodConfig::Range BloodConfig::layer_range(const Model& model) const
{
    if (model.depth() < 2) throw InvalidArgument("model has no between-layer transitions");
    const std::size_t top = model.depth() - 1;
    const Range r{first_layer == 0 ? 1 : first_layer, last_layer == 0 ? top : last_layer};
    if (r.first > r.last || r.last > top) {
        throw InvalidArgument("layer range [" + std::to_string(r.first) + ", " + std::to_string(r.last) +
                              "] is outside [1, " + std::to_string(top) + "]");
    }
    return r;
}

void BloodConfig::validate(const Model& model) const
{
    if (m_samples == 0) throw InvalidArgument("m_samples must be at least 1");
    (void)layer_range(model);
}

namespace {

double draw(VectorDistribution d, CounterRng& rng)
{
    return d == VectorDistribution::Gaussian ? rng.normal() : rng.rademacher();
}

// Flat index range of the entries a probe touches.
struct Window {
    std::size_t begin, end;
};

Window scope_window(const Shape& shape, JacobianScope scope, std::size_t pooled_slot)
{
    std::size_t total = 1;
    for (std::size_t d : shape) total *= d;
    if (scope == JacobianScope::Full || shape.size() < 2) return {0, total};
    const std::size_t width = shape.back();
    return {pooled_slot * width, (pooled_slot + 1) * width};
}

ProbeSpec probe_for(const Model& model, const BloodConfig& cfg)
{
    return {cfg.distribution, cfg.form, cfg.scope, model.pooled_slot};
}

void check_layer_index(const Model& model, std::size_t l)
{
    if (l < 1 || l + 1 > model.depth()) {
        throw InvalidArgument("layer index " + std::to_string(l) + " is outside [1, " +
                              std::to_string(model.depth() - 1) + "]");
    }
}

// h_l, the representation entering f_{l+1}.
Tensor representation(const Model& model, const Tensor& x, std::size_t l)
{
    Tensor h = x;
    for (std::size_t k = 1; k <= l; ++k) h = eval(model.layer(k), h);
    return h;
}

double estimate_at(const Layer& f, const Tensor& h, const ProbeSpec& probe, std::size_t m, std::uint64_t seed,
                   std::uint32_t stream, std::uint32_t layer_stream)
{
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        CounterRng rng(seed, RngPurpose::Estimator, stream, layer_stream, static_cast<std::uint32_t>(i));
        sum += phi_sample(f, h, probe, rng);
    }
    return sum / static_cast<double>(m);
}

}  // namespace

double phi_sample(const Layer& f, const Tensor& h, const ProbeSpec& probe, CounterRng& rng)
{
    const Window in = scope_window(f.input_shape(), probe.scope, probe.pooled_slot);
    Tensor v(f.input_shape());
    for (std::size_t k = in.begin; k < in.end; ++k) v[k] = draw(probe.distribution, rng);
    const Tensor jv = jvp(f, h, v).tangent;
    const Window out = scope_window(f.output_shape(), probe.scope, probe.pooled_slot);
    double acc = 0.0;
    if (probe.form == EstimatorForm::Pushforward) {
        for (std::size_t k = out.begin; k < out.end; ++k) acc += jv[k] * jv[k];
        return acc;
    }
    for (std::size_t k = out.begin; k < out.end; ++k) acc += draw(probe.distribution, rng) * jv[k];
    return acc * acc;
}

std::vector<double> phi_samples(const Layer& f, const Tensor& h, const ProbeSpec& probe, std::size_t n,
                                std::uint64_t seed, std::uint32_t stream)
{
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        CounterRng rng(seed, RngPurpose::Estimator, stream, 0, static_cast<std::uint32_t>(i));
        out[i] = phi_sample(f, h, probe, rng);
    }
    return out;
}

double exact_layer_phi(const Layer& f, const Tensor& h, JacobianScope scope, std::size_t pooled_slot)
{
    const Window in = scope_window(f.input_shape(), scope, pooled_slot);
    const Window out = scope_window(f.output_shape(), scope, pooled_slot);
    if (in.begin == 0 && in.end == h.size() && out.begin == 0 && out.end == f.output_size()) {
        const Tensor jac = exact_jacobian(f, h);
        return squared_norm(jac.flat());
    }
    // Sub-Jacobian: columns for the scoped inputs, rows for the scoped outputs.
    if (in.end - in.begin > 4096) throw OracleOnlyError("sub-Jacobian assembly exceeds the oracle-only column cap");
    double acc = 0.0;
    for (std::size_t k = in.begin; k < in.end; ++k) {
        const Tensor col = jvp(f, h, Tensor::basis(f.input_shape(), k)).tangent;
        for (std::size_t r = out.begin; r < out.end; ++r) acc += col[r] * col[r];
    }
    return acc;
}

double estimate_phi(const Model& model, const Tensor& x, std::size_t l, const BloodConfig& cfg, std::uint32_t instance)
{
    check_layer_index(model, l);
    if (cfg.m_samples == 0) throw InvalidArgument("m_samples must be at least 1");
    return estimate_at(model.layer(l + 1), representation(model, x, l), probe_for(model, cfg), cfg.m_samples, cfg.seed,
                       instance, static_cast<std::uint32_t>(l));
}

double exact_phi(const Model& model, const Tensor& x, std::size_t l, JacobianScope scope)
{
    check_layer_index(model, l);
    return exact_layer_phi(model.layer(l + 1), representation(model, x, l), scope, model.pooled_slot);
}

LayerScores layer_scores(const Model& model, const Tensor& x, const BloodConfig& cfg, std::uint32_t instance)
{
    cfg.validate(model);
    const auto range = cfg.layer_range(model);
    const ProbeSpec probe = probe_for(model, cfg);
    LayerScores s;
    s.first_layer = range.first;
    Tensor h = representation(model, x, range.first);
    for (std::size_t l = range.first; l <= range.last; ++l) {
        const Layer& f = model.layer(l + 1);
        s.values.push_back(estimate_at(f, h, probe, cfg.m_samples, cfg.seed, instance, static_cast<std::uint32_t>(l)));
        if (l < range.last) h = eval(f, h);
    }
    return s;
}

std::vector<LayerScores> score_all(const Model& model, std::span<const Tensor> inputs, const BloodConfig& cfg,
                                   std::size_t jobs)
{
    cfg.validate(model);
    std::vector<LayerScores> out(inputs.size());
    parallel_for(inputs.size(), jobs,
                 [&](std::size_t i) { out[i] = layer_scores(model, inputs[i], cfg, static_cast<std::uint32_t>(i)); });
    return out;
}

double blood_m(const LayerScores& scores)
{
    if (scores.values.empty()) throw InvalidArgument("blood_m of empty layer scores");
    double s = 0.0;
    for (double v : scores.values) s += v;
    return s / static_cast<double>(scores.values.size());
}

double blood_l(const LayerScores& scores)
{
    if (scores.values.empty()) throw InvalidArgument("blood_l of empty layer scores");
    return scores.values.back();
}

double blood_m_normalized(const LayerScores& scores, std::span<const double> layer_scales)
{
    if (scores.values.empty()) throw InvalidArgument("blood_m of empty layer scores");
    if (layer_scales.size() != scores.values.size()) throw DimensionError("one scale per layer score is required");
    double s = 0.0;
    for (std::size_t i = 0; i < scores.values.size(); ++i) {
        if (!(layer_scales[i] > 0.0)) throw NumericalError("layer scale must be positive");
        s += scores.values[i] / layer_scales[i];
    }
    return s / static_cast<double>(scores.values.size());
}

std::vector<double> layer_means(std::span<const LayerScores> scores)
{
    if (scores.empty()) throw InvalidArgument("no layer scores to average");
    std::vector<double> mean(scores.front().values.size(), 0.0);
    for (const auto& s : scores) {
        if (s.values.size() != mean.size()) throw DimensionError("layer score vectors differ in length");
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += s.values[i];
    }
    for (double& m : mean) m /= static_cast<double>(scores.size());
    return mean;
}

namespace {

double feature(double value, bool log_features)
{
    return log_features ? std::log(std::max(value, 1e-300)) : value;
}

double log1pexp(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

}  // namespace

OpenBoxWeights openbox_fit(std::span<const LayerScores> scores, const std::vector<bool>& is_ood,
                           const OpenBoxOptions& options)
{
    if (scores.empty() || scores.size() != is_ood.size()) throw InvalidArgument("scores and labels must align");
    const auto n_ood = static_cast<std::size_t>(std::count(is_ood.begin(), is_ood.end(), true));
    if (n_ood == 0 || n_ood == scores.size()) throw InvalidArgument("open-box fit needs both ID and OOD instances");

    const std::size_t n = scores.size();
    const std::size_t k = scores.front().values.size();
    OpenBoxWeights out;
    out.log_features = options.log_features;
    out.feature_mean.assign(k, 0.0);
    out.feature_scale.assign(k, 1.0);

    Eigen::MatrixXd x(n, k + 1);
    Eigen::VectorXd y(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (scores[i].values.size() != k) throw DimensionError("layer score vectors differ in length");
        for (std::size_t j = 0; j < k; ++j) x(i, j) = feature(scores[i].values[j], options.log_features);
        x(i, k) = 1.0;
        y(i) = is_ood[i] ? 1.0 : 0.0;
    }
    for (std::size_t j = 0; j < k; ++j) {
        const double mean = x.col(j).mean();
        const double var = (x.col(j).array() - mean).square().mean();
        out.feature_mean[j] = mean;
        out.feature_scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
        x.col(j) = (x.col(j).array() - mean) / out.feature_scale[j];
    }

    // Penalized mean log-likelihood; the bias is not penalized.
    Eigen::VectorXd penalty = Eigen::VectorXd::Constant(k + 1, options.ridge);
    penalty(k) = 0.0;
    auto objective = [&](const Eigen::VectorXd& beta) {
        const Eigen::VectorXd eta = x * beta;
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) ll += y(i) * eta(i) - log1pexp(eta(i));
        return ll / static_cast<double>(n) - 0.5 * (penalty.array() * beta.array().square()).sum();
    };

    // Damped Newton ascent with backtracking.
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(k + 1);
    double value = objective(beta);
    for (out.iterations = 0; out.iterations < options.max_iterations; ++out.iterations) {
        const Eigen::VectorXd eta = x * beta;
        Eigen::VectorXd p(n), s(n);
        for (std::size_t i = 0; i < n; ++i) {
            p(i) = 1.0 / (1.0 + std::exp(-eta(i)));
            s(i) = p(i) * (1.0 - p(i));
        }
        const Eigen::VectorXd grad =
            x.transpose() * (y - p) / static_cast<double>(n) - (penalty.array() * beta.array()).matrix();
        if (grad.lpNorm<Eigen::Infinity>() <= options.tolerance) {
            out.converged = true;
            break;
        }
        Eigen::MatrixXd info = x.transpose() * s.asDiagonal() * x / static_cast<double>(n);
        info.diagonal() += penalty;
        info.diagonal().array() += 1e-12;
        Eigen::VectorXd step = info.ldlt().solve(grad);
        if (!step.allFinite() || grad.dot(step) <= 0.0) step = grad;
        double t = 1.0;
        bool improved = false;
        for (int halving = 0; halving < 60; ++halving, t *= 0.5) {
            const Eigen::VectorXd trial = beta + t * step;
            const double v = objective(trial);
            if (std::isfinite(v) && v >= value + 1e-4 * t * grad.dot(step)) {
                beta = trial;
                value = v;
                improved = true;
                break;
            }
        }
        if (!improved) {
            out.converged = grad.lpNorm<Eigen::Infinity>() <= std::sqrt(options.tolerance);
            break;
        }
    }
    if (!beta.allFinite()) throw NumericalError("open-box fit produced non-finite weights");
    out.weights.assign(beta.data(), beta.data() + k);
    out.bias = beta(k);
    return out;
}

double openbox_logit(const OpenBoxWeights& weights, const LayerScores& scores)
{
    if (weights.weights.size() != scores.values.size()) {
        throw DimensionError("open-box weights cover " + std::to_string(weights.weights.size()) + " layers, scores " +
                             std::to_string(scores.values.size()));
    }
    double eta = weights.bias;
    for (std::size_t j = 0; j < weights.weights.size(); ++j) {
        double z = feature(scores.values[j], weights.log_features);
        if (!weights.feature_mean.empty()) z = (z - weights.feature_mean[j]) / weights.feature_scale[j];
        eta += weights.weights[j] * z;
    }
    return eta;
}

double openbox_score(const OpenBoxWeights& weights, const LayerScores& scores)
{
    return 1.0 / (1.0 + std::exp(-openbox_logit(weights, scores)));
}

}  // namespace blood
