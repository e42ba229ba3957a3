#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "blood/layer.hpp"
#include "blood/rng.hpp"
#include "blood/tensor.hpp"

namespace blood {

enum class Architecture { Mlp, MiniTransformer };

std::string_view to_string(Architecture arch);
Architecture parse_architecture(std::string_view name);

/// A classifier f = f_L o ... o f_1, where f_L is the softmax head producing
/// logits. layers[l - 1] holds f_l.
struct Model {
    Architecture architecture = Architecture::Mlp;
    std::size_t num_classes = 0;
    /// Token row used as the classification representation (transformer only).
    std::size_t pooled_slot = 0;
    std::vector<Layer> layers;

    /// L, the number of layer functions including the head.
    std::size_t depth() const { return layers.size(); }
    const Layer& layer(std::size_t l) const { return layers.at(l - 1); }
    const Layer& head() const { return layers.back(); }
    const Shape& input_shape() const { return layers.front().input_shape(); }
    std::size_t parameter_count() const;

    /// Checks that adjacent layer shapes chain and the head emits num_classes logits.
    void validate() const;

    friend bool operator==(const Model& a, const Model& b);
};

struct MlpSpec {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden{64, 64, 64};
    std::size_t num_classes = 2;
    /// Width of the head's tanh layer; 0 makes the head a single projection.
    std::size_t head_hidden = 64;
    Activation activation = Activation::Relu;
};

struct TransformerSpec {
    std::size_t input_dim = 0;
    std::size_t token_dim = 4;
    std::size_t width = 32;
    std::size_t encoder_layers = 4;
    std::size_t ffn_hidden = 64;
    std::size_t num_classes = 2;
    std::size_t head_hidden = 32;
};

Model make_mlp(const MlpSpec& spec, std::uint64_t seed);
/// Token embedding (with the pooled slot at row 0), encoder layers, head on row 0.
Model make_mini_transformer(const TransformerSpec& spec, std::uint64_t seed);

struct ForwardTrace {
    /// h_0 (the input) through h_{L-1} (the head's input).
    std::vector<Tensor> representations;
    Tensor logits;
    Tensor probabilities;
};

ForwardTrace forward_trace(const Model& model, const Tensor& x);
Tensor predict_logits(const Model& model, const Tensor& x);
Tensor predict_proba(const Model& model, const Tensor& x);

/// Numerically stable softmax of a logit vector.
Tensor softmax(const Tensor& logits);
std::size_t argmax(std::span<const double> values);

/// Logits with inverted dropout on every hidden representation h_1..h_{L-1}:
/// each unit is zeroed with probability `rate`, survivors scaled by 1/(1-rate).
Tensor dropout_logits(const Model& model, const Tensor& x, double rate, CounterRng& rng);
Tensor dropout_forward(const Model& model, const Tensor& x, double rate, CounterRng& rng);

/// Copy of `model` whose head is re-initialized from `seed`; body layers are
/// copied unchanged.
Model clone_with_reinit_head(const Model& model, std::uint64_t seed);

/// Token-matrix representation reduced to the pooled row; vectors pass through.
Tensor pooled_representation(const Model& model, const Tensor& representation);

}  // namespace blood
