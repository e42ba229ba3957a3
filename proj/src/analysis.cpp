#include "blood/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "blood/errors.hpp"
#include "blood/metrics.hpp"

namespace blood {

namespace {

void mean_std(const std::vector<double>& v, double& mean, double& sd)
{
    mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = std::sqrt(ss / static_cast<double>(v.size()));
}

}  // namespace

std::vector<std::vector<double>> representation_distances(const Model& init, const Model& trained,
                                                          std::span<const Tensor> inputs)
{
    if (init.depth() != trained.depth()) throw DimensionError("models differ in depth");
    for (std::size_t l = 1; l <= init.depth(); ++l) {
        if (init.layer(l).describe() != trained.layer(l).describe()) {
            throw DimensionError("models differ at layer " + std::to_string(l));
        }
    }
    const std::size_t layers = init.depth() - 1;
    std::vector<std::vector<double>> out(layers, std::vector<double>(inputs.size()));
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        Tensor a = inputs[i], b = inputs[i];
        for (std::size_t l = 1; l <= layers; ++l) {
            a = eval(init.layer(l), a);
            b = eval(trained.layer(l), b);
            const Tensor pa = pooled_representation(init, a);
            const Tensor pb = pooled_representation(trained, b);
            out[l - 1][i] = norm((pa - pb).flat());
        }
    }
    return out;
}

RepChangeReport rep_change(const Model& init, const Model& trained, std::span<const Tensor> id_inputs,
                           std::span<const Tensor> ood_inputs)
{
    if (id_inputs.empty() || ood_inputs.empty()) throw InvalidArgument("rep_change needs ID and OOD instances");
    const auto id = representation_distances(init, trained, id_inputs);
    const auto ood = representation_distances(init, trained, ood_inputs);
    RepChangeReport r;
    double total = 0.0;
    for (std::size_t l = 0; l < id.size(); ++l) {
        RepChangeLayer layer;
        mean_std(id[l], layer.id_mean, layer.id_std);
        mean_std(ood[l], layer.ood_mean, layer.ood_std);
        layer.cles = cles(id[l], ood[l]);
        total += layer.cles;
        r.layers.push_back(layer);
    }
    r.cles_mean = total / static_cast<double>(r.layers.size());
    r.cles_last = r.layers.back().cles;
    return r;
}

std::vector<CartographyRecord> cartography(const TrainingDynamics& d)
{
    if (d.epochs == 0) throw InvalidArgument("cartography needs at least one epoch of dynamics");
    std::vector<CartographyRecord> out(d.instances);
    const double e = static_cast<double>(d.epochs);
    for (std::size_t i = 0; i < d.instances; ++i) {
        double sum = 0.0, hits = 0.0;
        for (std::size_t t = 0; t < d.epochs; ++t) {
            sum += d.probability(i, t);
            hits += d.is_correct(i, t) ? 1.0 : 0.0;
        }
        const double mean = sum / e;
        double ss = 0.0;
        for (std::size_t t = 0; t < d.epochs; ++t) ss += (d.probability(i, t) - mean) * (d.probability(i, t) - mean);
        out[i] = {mean, std::sqrt(ss / e), hits / e};
    }
    return out;
}

std::vector<std::size_t> uniform_blocks(std::size_t count, std::size_t size) { return std::vector<std::size_t>(count, size); }

double mdl_prequential(std::span<const Tensor> inputs, std::span<const int> labels, std::size_t num_classes,
                       const ModelFactory& factory, const TrainConfig& config,
                       std::span<const std::size_t> block_sizes)
{
    if (inputs.size() != labels.size()) throw InvalidArgument("inputs and labels differ in length");
    if (block_sizes.size() < 2) throw InvalidArgument("prequential coding needs at least two blocks");
    const std::size_t used = std::accumulate(block_sizes.begin(), block_sizes.end(), std::size_t{0});
    if (used > inputs.size()) {
        throw InvalidArgument("block schedule covers " + std::to_string(used) + " instances, only " +
                              std::to_string(inputs.size()) + " available");
    }
    if (std::find(block_sizes.begin(), block_sizes.end(), std::size_t{0}) != block_sizes.end()) {
        throw InvalidArgument("blocks must be nonempty");
    }
    double code = static_cast<double>(block_sizes[0]) * std::log(static_cast<double>(num_classes));
    std::size_t seen = block_sizes[0];
    for (std::size_t k = 1; k < block_sizes.size(); ++k) {
        TrainConfig cfg = config;
        cfg.seed = config.seed + k;
        const TrainResult r = train(factory(config.seed + k), inputs.first(seen), labels.first(seen), cfg);
        for (std::size_t i = seen; i < seen + block_sizes[k]; ++i) code += cross_entropy(r.model, inputs[i], labels[i]);
        seen += block_sizes[k];
    }
    return code;
}

ShiftSweep shift_sweep(std::vector<std::vector<double>> level_scores)
{
    if (level_scores.size() < 2) throw InvalidArgument("a shift sweep needs at least two levels");
    ShiftSweep s;
    std::vector<double> index;
    for (std::size_t k = 0; k < level_scores.size(); ++k) {
        s.medians.push_back(median(level_scores[k]));
        index.push_back(static_cast<double>(k));
    }
    const RankCorrelation rc = spearman(index, s.medians);
    s.spearman = rc.rho;
    s.degenerate = rc.degenerate;
    s.strictly_increasing = true;
    for (std::size_t k = 0; k + 1 < level_scores.size(); ++k) {
        s.consecutive_cles.push_back(cles(level_scores[k + 1], level_scores[k]));
        s.strictly_increasing = s.strictly_increasing && s.medians[k + 1] > s.medians[k];
    }
    s.distributions = std::move(level_scores);
    return s;
}

}  // namespace blood
