#include "blood/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "blood/errors.hpp"

namespace blood {

double msp(const Tensor& probabilities) { return -*std::max_element(probabilities.flat().begin(), probabilities.flat().end()); }

double ent(const Tensor& probabilities)
{
    double h = 0.0;
    for (double p : probabilities.flat())
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

double egy(const Tensor& logits)
{
    const double mx = *std::max_element(logits.flat().begin(), logits.flat().end());
    double s = 0.0;
    for (double z : logits.flat()) s += std::exp(z - mx);
    return -(mx + std::log(s));
}

double mc_dropout(const Model& model, const Tensor& x, std::size_t passes, double rate, std::uint64_t seed,
                  std::uint32_t instance)
{
    if (passes == 0) throw InvalidArgument("mc dropout needs at least one pass");
    Tensor mean(Shape{model.num_classes});
    for (std::size_t k = 0; k < passes; ++k) {
        CounterRng rng(seed, RngPurpose::Dropout, instance, static_cast<std::uint32_t>(k), 1);
        mean += dropout_forward(model, x, rate, rng);
    }
    mean *= 1.0 / static_cast<double>(passes);
    return ent(mean);
}

Tensor penultimate(const Model& model, const Tensor& x)
{
    Tensor h = x;
    for (std::size_t l = 1; l < model.depth(); ++l) h = eval(model.layer(l), h);
    return h;
}

std::string_view to_string(GradTarget target)
{
    switch (target) {
    case GradTarget::ProjectionWeights: return "projection";
    case GradTarget::HeadParameters: return "head";
    case GradTarget::Representation: return "representation";
    }
    return "?";
}

GradTarget parse_grad_target(std::string_view name)
{
    for (GradTarget t : {GradTarget::ProjectionWeights, GradTarget::HeadParameters, GradTarget::Representation})
        if (to_string(t) == name) return t;
    throw InvalidArgument("unknown grad target '" + std::string(name) + "' (expected projection, head or representation)");
}

double grad_norm(const Model& model, const Tensor& x, GradTarget target)
{
    const Tensor h = penultimate(model, x);
    const Layer& head = model.head();
    Tensor residual = softmax(eval(head, h));
    residual[argmax(residual.flat())] -= 1.0;
    std::vector<Tensor> grads = zero_gradients(head);
    const Tensor dh = backward(head, h, residual, &grads);
    if (target == GradTarget::Representation) return norm(dh.flat());
    double sq = 0.0;
    const auto& params = head.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (target == GradTarget::ProjectionWeights && params[i].name != "out.weight") continue;
        sq += squared_norm(grads[i].flat());
    }
    return std::sqrt(sq);
}

namespace {

// The head's view of a penultimate representation: the pooled row for token
// matrices, the vector itself otherwise.
struct PooledView {
    Tensor row;
    Tensor full;
    bool matrix;
};

PooledView pooled_view(const Model& model, const Tensor& h)
{
    return {pooled_representation(model, h), h, h.rank() >= 2};
}

Tensor reassemble(const Model& model, const PooledView& view, const Tensor& row)
{
    if (!view.matrix) return row;
    Tensor full = view.full;
    const std::size_t width = row.size();
    for (std::size_t j = 0; j < width; ++j) full[model.pooled_slot * width + j] = row[j];
    return full;
}

double shaped_score(const Model& model, const Tensor& h, bool use_energy)
{
    const Tensor logits = eval(model.head(), h);
    return use_energy ? egy(logits) : msp(softmax(logits));
}

}  // namespace

Tensor ash_s_shape(const Tensor& representation, double prune_fraction)
{
    if (!(prune_fraction >= 0.0 && prune_fraction < 1.0)) throw InvalidArgument("prune fraction must lie in [0, 1)");
    const std::size_t n = representation.size();
    const auto pruned = static_cast<std::size_t>(std::llround(static_cast<double>(n) * prune_fraction));
    const std::size_t keep = std::max<std::size_t>(1, n - std::min(pruned, n));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(representation[a]) > std::abs(representation[b]);
    });
    double s1 = 0.0, s2 = 0.0;
    for (double v : representation.flat()) s1 += v;
    Tensor shaped = Tensor::zeros_like(representation);
    for (std::size_t k = 0; k < keep; ++k) {
        shaped[order[k]] = representation[order[k]];
        s2 += representation[order[k]];
    }
    // s2 can vanish when activations take both signs; survivors then stay
    // unscaled. The cap keeps exp finite.
    const double ratio = s1 / s2;
    if (s2 != 0.0 && std::isfinite(ratio)) shaped *= std::exp(std::min(ratio, 50.0));
    return shaped;
}

double ash_s(const Model& model, const Tensor& x, double prune_fraction, bool use_energy)
{
    const PooledView view = pooled_view(model, penultimate(model, x));
    return shaped_score(model, reassemble(model, view, ash_s_shape(view.row, prune_fraction)), use_energy);
}

double percentile(std::vector<double> values, double pct)
{
    if (values.empty()) throw InvalidArgument("percentile of an empty sample");
    if (!(pct >= 0.0 && pct <= 100.0)) throw InvalidArgument("percentile must lie in [0, 100]");
    std::sort(values.begin(), values.end());
    const double pos = pct / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<double> react_thresholds(std::span<const Tensor> train_penultimate, double pct, bool per_unit)
{
    if (train_penultimate.empty()) throw InvalidArgument("ReAct needs training activations");
    const std::size_t width = train_penultimate.front().size();
    if (!per_unit) {
        std::vector<double> pool;
        pool.reserve(width * train_penultimate.size());
        for (const Tensor& z : train_penultimate) pool.insert(pool.end(), z.flat().begin(), z.flat().end());
        return {percentile(std::move(pool), pct)};
    }
    std::vector<double> out(width);
    for (std::size_t j = 0; j < width; ++j) {
        std::vector<double> col;
        for (const Tensor& z : train_penultimate) col.push_back(z[j]);
        out[j] = percentile(std::move(col), pct);
    }
    return out;
}

double react(const Model& model, const Tensor& x, std::span<const double> thresholds, bool use_energy)
{
    if (thresholds.empty()) throw InvalidArgument("ReAct thresholds are missing from the fit context");
    const PooledView view = pooled_view(model, penultimate(model, x));
    Tensor clamped = view.row;
    for (std::size_t j = 0; j < clamped.size(); ++j) {
        const double c = thresholds.size() == 1 ? thresholds[0] : thresholds[j];
        clamped[j] = std::min(clamped[j], c);
    }
    return shaped_score(model, reassemble(model, view, clamped), use_energy);
}

double ensemble_score(std::span<const Model> members, const Tensor& x)
{
    if (members.empty()) throw InvalidArgument("ensemble has no members");
    Tensor mean(Shape{members.front().num_classes});
    for (const Model& m : members) mean += predict_proba(m, x);
    mean *= 1.0 / static_cast<double>(members.size());
    return ent(mean);
}

double temperature_nll(std::span<const Tensor> logits, std::span<const int> labels, double temperature)
{
    double nll = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        Tensor scaled = logits[i];
        scaled *= 1.0 / temperature;
        // -log softmax(z)_y = logsumexp(z) - z_y = -egy(z) - z_y
        nll += -egy(scaled) - scaled[static_cast<std::size_t>(labels[i])];
    }
    return nll / static_cast<double>(logits.size());
}

TemperatureFit temp_fit(std::span<const Tensor> logits, std::span<const int> labels)
{
    if (logits.empty() || logits.size() != labels.size()) throw InvalidArgument("temperature fit needs validation logits");
    auto f = [&](double log_t) { return temperature_nll(logits, labels, std::exp(log_t)); };
    const double lo_bound = -4.0, hi_bound = 4.0, tol = 1e-6;
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo_bound, b = hi_bound;
    double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    double best = 0.5 * (a + b);
    double f_best = f(best);
    TemperatureFit out;
    // With separable data the NLL flattens out below rounding near an end and
    // the search can stall inside the plateau; an end at least as good wins.
    for (double end : {lo_bound, hi_bound}) {
        const double f_end = f(end);
        if (f_end <= f_best) {
            best = end;
            f_best = f_end;
            out.at_boundary = true;
        }
    }
    if (std::abs(best - lo_bound) < 10 * tol || std::abs(hi_bound - best) < 10 * tol) out.at_boundary = true;
    // Keep T = 1 if the search did no better.
    if (f_best > f(0.0)) {
        best = 0.0;
        out.at_boundary = false;
    }
    out.temperature = std::exp(best);
    return out;
}

double temp_score(const Tensor& logits, double temperature)
{
    if (!(temperature > 0.0)) throw InvalidArgument("temperature must be positive");
    Tensor scaled = logits;
    scaled *= 1.0 / temperature;
    return msp(softmax(scaled));
}

MahalanobisFit mahalanobis_fit(std::span<const Tensor> reps, std::span<const int> labels, std::size_t num_classes)
{
    if (reps.empty() || reps.size() != labels.size()) throw InvalidArgument("mahalanobis fit needs labeled representations");
    const auto dim = static_cast<Eigen::Index>(reps.front().size());
    MahalanobisFit fit;
    fit.means.assign(num_classes, Eigen::VectorXd::Zero(dim));
    std::vector<std::size_t> counts(num_classes, 0);
    for (std::size_t i = 0; i < reps.size(); ++i) {
        const auto c = static_cast<std::size_t>(labels[i]);
        fit.means.at(c) += Eigen::Map<const Eigen::VectorXd>(reps[i].data(), dim);
        ++counts[c];
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (counts[c] < 2) {
            throw InvalidArgument("class " + std::to_string(c) + " has " + std::to_string(counts[c]) +
                                  " training instances; mahalanobis fit needs at least 2");
        }
        fit.means[c] /= static_cast<double>(counts[c]);
    }
    fit.covariance = Eigen::MatrixXd::Zero(dim, dim);
    for (std::size_t i = 0; i < reps.size(); ++i) {
        const Eigen::VectorXd d =
            Eigen::Map<const Eigen::VectorXd>(reps[i].data(), dim) - fit.means[static_cast<std::size_t>(labels[i])];
        fit.covariance.noalias() += d * d.transpose();
    }
    fit.covariance /= static_cast<double>(reps.size());
    const double ridge = 1e-6 * fit.covariance.trace() / static_cast<double>(dim);
    fit.covariance.diagonal().array() += ridge > 0.0 ? ridge : 1e-12;
    fit.factor.compute(fit.covariance);
    if (fit.factor.info() != Eigen::Success) throw NumericalError("tied covariance is not positive definite");
    return fit;
}

double mahalanobis_score(const MahalanobisFit& fit, const Tensor& z)
{
    const auto dim = static_cast<Eigen::Index>(z.size());
    if (fit.means.empty() || fit.means.front().size() != dim) throw DimensionError("representation width mismatch");
    const Eigen::Map<const Eigen::VectorXd> v(z.data(), dim);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& mu : fit.means) {
        const Eigen::VectorXd w = fit.factor.matrixL().solve(v - mu);
        best = std::min(best, w.squaredNorm());
    }
    return best;
}

std::string_view to_string(DetectorId id)
{
    switch (id) {
    case DetectorId::Msp: return "msp";
    case DetectorId::Ent: return "ent";
    case DetectorId::Egy: return "egy";
    case DetectorId::McDropout: return "mc";
    case DetectorId::Grad: return "grad";
    case DetectorId::AshS: return "ash";
    case DetectorId::React: return "react";
    case DetectorId::Ensemble: return "ensm";
    case DetectorId::Temp: return "temp";
    case DetectorId::Mahalanobis: return "md";
    }
    return "?";
}

DetectorId parse_detector(std::string_view name)
{
    for (DetectorId id : all_detectors())
        if (to_string(id) == name) return id;
    throw InvalidArgument("unknown detector '" + std::string(name) + "'");
}

std::vector<DetectorId> all_detectors()
{
    return {DetectorId::Msp,   DetectorId::Ent,   DetectorId::Egy,      DetectorId::McDropout, DetectorId::Grad,
            DetectorId::AshS,  DetectorId::React, DetectorId::Ensemble, DetectorId::Temp,      DetectorId::Mahalanobis};
}

bool is_open_box(DetectorId id)
{
    return id == DetectorId::React || id == DetectorId::Ensemble || id == DetectorId::Temp ||
           id == DetectorId::Mahalanobis;
}

FitContext build_fit_context(const Model& model, std::span<const DetectorId> detectors,
                             std::span<const Tensor> train_x, std::span<const int> train_y,
                             std::span<const Tensor> val_x, std::span<const int> val_y,
                             const DetectorOptions& options)
{
    FitContext ctx;
    auto wants = [&](DetectorId id) { return std::find(detectors.begin(), detectors.end(), id) != detectors.end(); };
    if (wants(DetectorId::React) || wants(DetectorId::Mahalanobis)) {
        std::vector<Tensor> reps;
        reps.reserve(train_x.size());
        for (const Tensor& x : train_x) reps.push_back(pooled_representation(model, penultimate(model, x)));
        if (wants(DetectorId::React))
            ctx.react_thresholds = react_thresholds(reps, options.react_percentile, options.react_per_unit);
        if (wants(DetectorId::Mahalanobis)) ctx.mahalanobis = mahalanobis_fit(reps, train_y, model.num_classes);
    }
    if (wants(DetectorId::Temp)) {
        std::vector<Tensor> logits;
        for (const Tensor& x : val_x) logits.push_back(predict_logits(model, x));
        ctx.temperature = temp_fit(logits, val_y);
    }
    return ctx;
}

double detector_score(DetectorId id, const Model& model, const Tensor& x, const FitContext& ctx,
                      const DetectorOptions& options, std::uint32_t instance)
{
    switch (id) {
    case DetectorId::Msp: return msp(predict_proba(model, x));
    case DetectorId::Ent: return ent(predict_proba(model, x));
    case DetectorId::Egy: return egy(predict_logits(model, x));
    case DetectorId::McDropout:
        return mc_dropout(model, x, options.mc_passes, options.mc_rate, options.mc_seed, instance);
    case DetectorId::Grad: return grad_norm(model, x, options.grad_target);
    case DetectorId::AshS: return ash_s(model, x, options.ash_fraction, options.shaped_energy);
    case DetectorId::React: return react(model, x, ctx.react_thresholds, options.shaped_energy);
    case DetectorId::Ensemble: return ensemble_score(ctx.ensemble, x);
    case DetectorId::Temp:
        if (!ctx.temperature) throw InvalidArgument("temperature is missing from the fit context");
        return temp_score(predict_logits(model, x), ctx.temperature->temperature);
    case DetectorId::Mahalanobis:
        if (!ctx.mahalanobis) throw InvalidArgument("mahalanobis fit is missing from the fit context");
        return mahalanobis_score(*ctx.mahalanobis, pooled_representation(model, penultimate(model, x)));
    }
    throw InvalidArgument("unknown detector");
}

}  // namespace blood
