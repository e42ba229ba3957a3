#include "blood/model.hpp"

#include <algorithm>
#include <cmath>

#include "blood/errors.hpp"

namespace blood {

std::string_view to_string(Architecture arch)
{
    return arch == Architecture::Mlp ? "mlp" : "mini-transformer";
}

Architecture parse_architecture(std::string_view name)
{
    if (name == "mlp") return Architecture::Mlp;
    if (name == "mini-transformer") return Architecture::MiniTransformer;
    throw InvalidArgument("unknown architecture '" + std::string(name) + "'");
}

std::size_t Model::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& l : layers) n += l.parameter_count();
    return n;
}

void Model::validate() const
{
    if (layers.empty()) throw DimensionError("model has no layers");
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
        if (layers[i].output_shape() != layers[i + 1].input_shape()) {
            throw DimensionError("layer " + std::to_string(i + 1) + " (" + layers[i].describe() +
                                 ") does not chain into layer " + std::to_string(i + 2) + " (" +
                                 layers[i + 1].describe() + ")");
        }
    }
    if (head().kind() != LayerKind::SoftmaxHead) throw DimensionError("last layer must be a softmax head");
    if (head().output_shape() != Shape{num_classes}) {
        throw DimensionError("head emits " + shape_string(head().output_shape()) + " logits for " +
                             std::to_string(num_classes) + " classes");
    }
}

bool operator==(const Model& a, const Model& b)
{
    return a.architecture == b.architecture && a.num_classes == b.num_classes && a.pooled_slot == b.pooled_slot &&
           a.layers == b.layers;
}

Model make_mlp(const MlpSpec& spec, std::uint64_t seed)
{
    if (spec.input_dim == 0 || spec.num_classes < 2) throw InvalidArgument("mlp needs inputs and >= 2 classes");
    Model m;
    m.architecture = Architecture::Mlp;
    m.num_classes = spec.num_classes;
    std::size_t prev = spec.input_dim;
    for (std::size_t width : spec.hidden) {
        m.layers.push_back(Layer::dense(prev, width, spec.activation));
        prev = width;
    }
    m.layers.push_back(Layer::softmax_head(prev, spec.head_hidden, spec.num_classes));
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        CounterRng rng(seed, RngPurpose::Init, static_cast<std::uint32_t>(i));
        m.layers[i].initialize(rng);
    }
    m.validate();
    return m;
}

Model make_mini_transformer(const TransformerSpec& spec, std::uint64_t seed)
{
    Model m;
    m.architecture = Architecture::MiniTransformer;
    m.num_classes = spec.num_classes;
    m.pooled_slot = 0;
    m.layers.push_back(Layer::token_embedding(spec.input_dim, spec.token_dim, spec.width));
    const std::size_t rows = spec.input_dim / spec.token_dim + 1;
    for (std::size_t i = 0; i < spec.encoder_layers; ++i)
        m.layers.push_back(Layer::self_attention(rows, spec.width, spec.ffn_hidden));
    m.layers.push_back(Layer::softmax_head(spec.width, spec.head_hidden, spec.num_classes, rows, m.pooled_slot));
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        CounterRng rng(seed, RngPurpose::Init, static_cast<std::uint32_t>(i));
        m.layers[i].initialize(rng);
    }
    m.validate();
    return m;
}

Tensor softmax(const Tensor& logits)
{
    Tensor p = logits;
    const double mx = *std::max_element(p.flat().begin(), p.flat().end());
    double z = 0.0;
    for (double& v : p.flat()) {
        v = std::exp(v - mx);
        z += v;
    }
    p *= 1.0 / z;
    return p;
}

std::size_t argmax(std::span<const double> values)
{
    return static_cast<std::size_t>(std::distance(values.begin(), std::max_element(values.begin(), values.end())));
}

ForwardTrace forward_trace(const Model& model, const Tensor& x)
{
    ForwardTrace t;
    t.representations.reserve(model.depth());
    t.representations.push_back(x);
    for (std::size_t l = 1; l < model.depth(); ++l)
        t.representations.push_back(eval(model.layer(l), t.representations.back()));
    t.logits = eval(model.head(), t.representations.back());
    t.probabilities = softmax(t.logits);
    return t;
}

Tensor predict_logits(const Model& model, const Tensor& x)
{
    Tensor h = x;
    for (const Layer& layer : model.layers) h = eval(layer, h);
    return h;
}

Tensor predict_proba(const Model& model, const Tensor& x) { return softmax(predict_logits(model, x)); }

Tensor dropout_logits(const Model& model, const Tensor& x, double rate, CounterRng& rng)
{
    if (!(rate >= 0.0 && rate < 1.0)) throw InvalidArgument("dropout rate must lie in [0, 1)");
    const double keep_scale = 1.0 / (1.0 - rate);
    Tensor h = x;
    for (std::size_t l = 1; l < model.depth(); ++l) {
        h = eval(model.layer(l), h);
        if (rate == 0.0) continue;
        for (double& v : h.flat()) v = rng.uniform() < rate ? 0.0 : v * keep_scale;
    }
    return eval(model.head(), h);
}

Tensor dropout_forward(const Model& model, const Tensor& x, double rate, CounterRng& rng)
{
    return softmax(dropout_logits(model, x, rate, rng));
}

Model clone_with_reinit_head(const Model& model, std::uint64_t seed)
{
    Model copy = model;
    CounterRng rng(seed, RngPurpose::Init, static_cast<std::uint32_t>(model.depth() - 1), 1);
    copy.layers.back().initialize(rng);
    return copy;
}

Tensor pooled_representation(const Model& model, const Tensor& representation)
{
    if (representation.rank() < 2) return representation;
    auto row = representation.row(model.pooled_slot);
    return Tensor::vector(std::vector<double>(row.begin(), row.end()));
}

}  // namespace blood
