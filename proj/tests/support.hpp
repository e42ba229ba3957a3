#pragma once

// Shared helpers for the unit tests: random layers and tolerance checks.

#include <algorithm>
#include <cmath>
#include <vector>

#include "blood/layer.hpp"
#include "blood/rng.hpp"
#include "blood/tensor.hpp"

namespace blood::testing {

inline Tensor random_tensor(const Shape& shape, CounterRng& rng, double scale = 1.0)
{
    Tensor t(shape);
    for (double& x : t.flat()) x = scale * rng.normal();
    return t;
}

/// Initializes the layer and then jitters every parameter so biases and gains
/// are not at their trivial initial values.
inline Layer randomized(Layer layer, std::uint64_t seed, double jitter = 0.3)
{
    CounterRng rng(seed, RngPurpose::Init);
    layer.initialize(rng);
    for (auto& p : layer.mutable_parameters())
        for (double& x : p.value.flat()) x += jitter * rng.normal();
    return layer;
}

/// |a - b| <= max(rel * |b|, floor)
inline bool close(double a, double b, double rel, double floor = 1e-8)
{
    return std::abs(a - b) <= std::max(rel * std::abs(b), floor);
}

inline bool all_close(const Tensor& a, const Tensor& b, double rel, double floor = 1e-8)
{
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!close(a[i], b[i], rel, floor)) return false;
    return true;
}

/// One instance of every supported layer kind, small enough for dense oracles.
inline std::vector<Layer> layer_zoo(std::uint64_t seed)
{
    std::vector<Layer> zoo;
    zoo.push_back(randomized(Layer::dense(5, 4, Activation::Tanh), seed + 1));
    zoo.push_back(randomized(Layer::dense(6, 5, Activation::Relu), seed + 2));
    zoo.push_back(randomized(Layer::dense(4, 6, Activation::Gelu), seed + 3));
    zoo.push_back(randomized(Layer::dense(3, 3, Activation::Linear, 2), seed + 4));
    zoo.push_back(randomized(Layer::layer_norm(6), seed + 5));
    zoo.push_back(randomized(Layer::layer_norm(4, 3), seed + 6));
    zoo.push_back(randomized(Layer::residual(5, 7, Activation::Tanh), seed + 7));
    zoo.push_back(randomized(Layer::residual(4, 3, Activation::Gelu, 2), seed + 8));
    zoo.push_back(randomized(Layer::self_attention(3, 4, 6), seed + 9));
    zoo.push_back(randomized(Layer::softmax_head(6, 5, 3), seed + 10));
    zoo.push_back(randomized(Layer::softmax_head(6, 0, 4), seed + 11));
    zoo.push_back(randomized(Layer::softmax_head(4, 3, 2, 3, 0), seed + 12));
    zoo.push_back(randomized(Layer::token_embedding(6, 2, 4), seed + 13));
    return zoo;
}

/// `count` random layers cycling through every kind, each with flattened
/// input and output sizes of at most 12.
inline std::vector<Layer> layer_suite(std::uint64_t seed, std::size_t count)
{
    CounterRng rng(seed, RngPurpose::Init, 999);
    auto dim = [&rng](std::size_t lo, std::size_t hi) { return lo + static_cast<std::size_t>(rng.below(hi - lo + 1)); };
    const Activation acts[] = {Activation::Tanh, Activation::Relu, Activation::Gelu, Activation::Linear};
    std::vector<Layer> suite;
    for (std::size_t i = 0; suite.size() < count; ++i) {
        const std::uint64_t s = seed * 1000 + i;
        switch (i % 7) {
        case 0:
        case 1: suite.push_back(randomized(Layer::dense(dim(2, 12), dim(2, 12), acts[(i / 7) % 4]), s)); break;
        case 2: suite.push_back(randomized(Layer::layer_norm(dim(3, 12)), s)); break;
        case 3: suite.push_back(randomized(Layer::residual(dim(2, 12), dim(2, 8), acts[(i / 7) % 3]), s)); break;
        case 4: {
            const std::size_t tokens = dim(2, 3);
            suite.push_back(randomized(Layer::self_attention(tokens, 12 / tokens, dim(2, 6)), s));
            break;
        }
        case 5: suite.push_back(randomized(Layer::softmax_head(dim(2, 12), dim(0, 6), dim(2, 5)), s)); break;
        default: suite.push_back(randomized(Layer::token_embedding(4, 2, dim(2, 4)), s)); break;
        }
    }
    return suite;
}

/// P(ood > id) + P(tie) / 2 by enumerating every pair.
inline double pairwise_auroc(const std::vector<double>& id, const std::vector<double>& ood)
{
    double wins = 0.0;
    for (double o : ood)
        for (double i : id) wins += o > i ? 1.0 : (o == i ? 0.5 : 0.0);
    return wins / (static_cast<double>(id.size()) * static_cast<double>(ood.size()));
}

}  // namespace blood::testing
