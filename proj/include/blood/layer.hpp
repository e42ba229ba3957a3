#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "blood/rng.hpp"
#include "blood/tensor.hpp"

namespace blood {

enum class LayerKind {
    Dense,           ///< affine map followed by an elementwise activation, row-wise
    LayerNorm,       ///< row-wise normalization with gain and bias
    Residual,        ///< x + fc2(act(fc1(x))), row-wise
    SelfAttention,   ///< post-norm single-head encoder layer (attention + FFN)
    SoftmaxHead,     ///< classification head producing logits
    TokenEmbedding,  ///< splits a flat input into tokens, projects, adds positions and a pooled slot
};

enum class Activation { Linear, Relu, Tanh, Gelu };

std::string_view to_string(LayerKind kind);
std::string_view to_string(Activation act);
LayerKind parse_layer_kind(std::string_view name);
Activation parse_activation(std::string_view name);

double activate(Activation act, double z);
/// Derivative of the activation. ReLU uses 0 at the kink.
double activate_derivative(Activation act, double z);

struct Parameter {
    std::string name;
    Tensor value;
};

/// One between-layer map f_l with its parameters.
///
/// Layers are immutable values once built: eval, jvp, vjp and backward are
/// pure functions of the layer and their arguments, so a layer may be shared
/// across threads.
class Layer {
public:
    /// in -> out affine map with activation. `rows` > 0 makes the layer act on
    /// a (rows x in) token matrix.
    static Layer dense(std::size_t in, std::size_t out, Activation act, std::size_t rows = 0);
    static Layer layer_norm(std::size_t dim, std::size_t rows = 0);
    static Layer residual(std::size_t dim, std::size_t hidden, Activation act, std::size_t rows = 0);
    static Layer self_attention(std::size_t tokens, std::size_t width, std::size_t ffn_hidden,
                                Activation act = Activation::Gelu);
    /// Head reading a vector (or row `pooled_slot` of a token matrix with
    /// `tokens` rows). hidden == 0 gives a single linear projection.
    static Layer softmax_head(std::size_t in, std::size_t hidden, std::size_t classes, std::size_t tokens = 0,
                              std::size_t pooled_slot = 0);
    static Layer token_embedding(std::size_t input_dim, std::size_t token_dim, std::size_t width);

    LayerKind kind() const { return kind_; }
    Activation activation() const { return activation_; }
    const Shape& input_shape() const { return input_shape_; }
    const Shape& output_shape() const { return output_shape_; }
    std::size_t input_size() const { return shape_size(input_shape_); }
    std::size_t output_size() const { return shape_size(output_shape_); }
    std::size_t hidden() const { return hidden_; }
    std::size_t pooled_slot() const { return pooled_slot_; }
    /// Label used in error messages.
    std::string describe() const;

    std::span<const Parameter> parameters() const { return params_; }
    std::vector<Parameter>& mutable_parameters() { return params_; }
    const Tensor& param(std::size_t i) const { return params_[i].value; }
    std::size_t parameter_count() const;

    /// Random initialization: uniform fan-in/fan-out scaled weights, zero
    /// biases, unit norm gains.
    void initialize(CounterRng& rng);

    friend bool operator==(const Layer& a, const Layer& b);

private:
    Layer(LayerKind kind, Activation act, Shape in, Shape out);
    void add_param(std::string name, Shape shape);

    LayerKind kind_;
    Activation activation_;
    Shape input_shape_;
    Shape output_shape_;
    std::size_t hidden_ = 0;
    std::size_t pooled_slot_ = 0;
    std::vector<Parameter> params_;

    friend Layer make_layer_from_metadata(LayerKind, Activation, Shape, Shape, std::size_t, std::size_t);
};

/// Rebuilds a layer skeleton (parameters zeroed) from its serialized description.
Layer make_layer_from_metadata(LayerKind kind, Activation act, Shape in, Shape out, std::size_t hidden,
                               std::size_t pooled_slot);

Tensor eval(const Layer& layer, const Tensor& x);

/// Forward-mode pushforward: primal f(x) and tangent J(x) v.
TangentPair jvp(const Layer& layer, const Tensor& x, const Tensor& v);

/// Reverse-mode pullback: primal f(x) and tangent J(x)^T u.
TangentPair vjp(const Layer& layer, const Tensor& x, const Tensor& u);

/// Pullback that also accumulates parameter gradients of u . f(x) into
/// `param_grads` (same layout as layer.parameters()) when non-null.
Tensor backward(const Layer& layer, const Tensor& x, const Tensor& u, std::vector<Tensor>* param_grads);

/// Zero tensors matching the layer's parameter layout.
std::vector<Tensor> zero_gradients(const Layer& layer);

inline constexpr std::size_t kDefaultJacobianColumnCap = 4096;

/// Full Jacobian (output_size x input_size) assembled one column per jvp
/// with a basis tangent. Oracle only: throws OracleOnlyError past the cap.
Tensor exact_jacobian(const Layer& layer, const Tensor& x, std::size_t max_columns = kDefaultJacobianColumnCap);

/// Central-difference Jacobian, one input coordinate at a time.
Tensor finite_difference_jacobian(const Layer& layer, const Tensor& x, double eps = 1e-5);

}  // namespace blood
