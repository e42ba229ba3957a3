#include "blood/layer.hpp"

#include <cmath>
#include <numbers>

#include "blood/errors.hpp"
#include "ops.hpp"

namespace blood {

// ---------------------------------------------------------------------------
// Names and activations
// ---------------------------------------------------------------------------

std::string_view to_string(LayerKind kind)
{
    switch (kind) {
        case LayerKind::Dense: return "dense";
        case LayerKind::LayerNorm: return "layer-norm";
        case LayerKind::Residual: return "residual-block";
        case LayerKind::SelfAttention: return "self-attention-block";
        case LayerKind::SoftmaxHead: return "softmax-head";
        case LayerKind::TokenEmbedding: return "token-embedding";
    }
    return "unknown";
}

std::string_view to_string(Activation act)
{
    switch (act) {
        case Activation::Linear: return "linear";
        case Activation::Relu: return "relu";
        case Activation::Tanh: return "tanh";
        case Activation::Gelu: return "gelu";
    }
    return "unknown";
}

LayerKind parse_layer_kind(std::string_view name)
{
    for (auto k : {LayerKind::Dense, LayerKind::LayerNorm, LayerKind::Residual, LayerKind::SelfAttention,
                   LayerKind::SoftmaxHead, LayerKind::TokenEmbedding}) {
        if (to_string(k) == name) return k;
    }
    throw InvalidArgument("unknown layer kind '" + std::string(name) + "'");
}

Activation parse_activation(std::string_view name)
{
    for (auto a : {Activation::Linear, Activation::Relu, Activation::Tanh, Activation::Gelu}) {
        if (to_string(a) == name) return a;
    }
    throw InvalidArgument("unknown activation '" + std::string(name) + "'");
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

double activate(Activation act, double z)
{
    switch (act) {
        case Activation::Linear: return z;
        case Activation::Relu: return z > 0.0 ? z : 0.0;
        case Activation::Tanh: return std::tanh(z);
        case Activation::Gelu: return 0.5 * z * (1.0 + std::tanh(kGeluC * (z + kGeluA * z * z * z)));
    }
    return z;
}

double activate_derivative(Activation act, double z)
{
    switch (act) {
        case Activation::Linear: return 1.0;
        case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::Tanh: {
            const double t = std::tanh(z);
            return 1.0 - t * t;
        }
        case Activation::Gelu: {
            const double u = kGeluC * (z + kGeluA * z * z * z);
            const double t = std::tanh(u);
            const double du = kGeluC * (1.0 + 3.0 * kGeluA * z * z);
            return 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * du;
        }
    }
    return 1.0;
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

namespace {

Shape rows_shape(std::size_t rows, std::size_t cols)
{
    return rows == 0 ? Shape{cols} : Shape{rows, cols};
}

// Parameter slots per kind.
namespace dense_p {
constexpr std::size_t W = 0, B = 1;
}
namespace norm_p {
constexpr std::size_t G = 0, B = 1;
}
namespace res_p {
constexpr std::size_t W1 = 0, B1 = 1, W2 = 2, B2 = 3;
}
namespace attn_p {
constexpr std::size_t WQ = 0, BQ = 1, WK = 2, BK = 3, WV = 4, BV = 5, WO = 6, BO = 7, G1 = 8, N1 = 9, W1 = 10,
                      B1 = 11, W2 = 12, B2 = 13, G2 = 14, N2 = 15;
}
namespace embed_p {
constexpr std::size_t W = 0, B = 1, POS = 2;
}

}  // namespace

Layer::Layer(LayerKind kind, Activation act, Shape in, Shape out)
    : kind_(kind), activation_(act), input_shape_(std::move(in)), output_shape_(std::move(out))
{
}

void Layer::add_param(std::string name, Shape shape) { params_.push_back({std::move(name), Tensor(std::move(shape))}); }

Layer Layer::dense(std::size_t in, std::size_t out, Activation act, std::size_t rows)
{
    Layer l(LayerKind::Dense, act, rows_shape(rows, in), rows_shape(rows, out));
    l.add_param("weight", {out, in});
    l.add_param("bias", {out});
    return l;
}

Layer Layer::layer_norm(std::size_t dim, std::size_t rows)
{
    Layer l(LayerKind::LayerNorm, Activation::Linear, rows_shape(rows, dim), rows_shape(rows, dim));
    l.add_param("gain", {dim});
    l.add_param("bias", {dim});
    for (double& g : l.params_[norm_p::G].value.flat()) g = 1.0;
    return l;
}

Layer Layer::residual(std::size_t dim, std::size_t hidden, Activation act, std::size_t rows)
{
    Layer l(LayerKind::Residual, act, rows_shape(rows, dim), rows_shape(rows, dim));
    l.hidden_ = hidden;
    l.add_param("fc1.weight", {hidden, dim});
    l.add_param("fc1.bias", {hidden});
    l.add_param("fc2.weight", {dim, hidden});
    l.add_param("fc2.bias", {dim});
    return l;
}

Layer Layer::self_attention(std::size_t tokens, std::size_t width, std::size_t ffn_hidden, Activation act)
{
    Layer l(LayerKind::SelfAttention, act, {tokens, width}, {tokens, width});
    l.hidden_ = ffn_hidden;
    for (const char* p : {"attn.q", "attn.k", "attn.v", "attn.o"}) {
        l.add_param(std::string(p) + ".weight", {width, width});
        l.add_param(std::string(p) + ".bias", {width});
    }
    l.add_param("ln1.gain", {width});
    l.add_param("ln1.bias", {width});
    l.add_param("ffn.fc1.weight", {ffn_hidden, width});
    l.add_param("ffn.fc1.bias", {ffn_hidden});
    l.add_param("ffn.fc2.weight", {width, ffn_hidden});
    l.add_param("ffn.fc2.bias", {width});
    l.add_param("ln2.gain", {width});
    l.add_param("ln2.bias", {width});
    for (double& g : l.params_[attn_p::G1].value.flat()) g = 1.0;
    for (double& g : l.params_[attn_p::G2].value.flat()) g = 1.0;
    return l;
}

Layer Layer::softmax_head(std::size_t in, std::size_t hidden, std::size_t classes, std::size_t tokens,
                          std::size_t pooled_slot)
{
    if (tokens > 0 && pooled_slot >= tokens) {
        throw InvalidArgument("pooled slot " + std::to_string(pooled_slot) + " outside " + std::to_string(tokens) +
                              " tokens");
    }
    Layer l(LayerKind::SoftmaxHead, hidden > 0 ? Activation::Tanh : Activation::Linear, rows_shape(tokens, in),
            {classes});
    l.hidden_ = hidden;
    l.pooled_slot_ = pooled_slot;
    if (hidden > 0) {
        l.add_param("hidden.weight", {hidden, in});
        l.add_param("hidden.bias", {hidden});
        l.add_param("out.weight", {classes, hidden});
    } else {
        l.add_param("out.weight", {classes, in});
    }
    l.add_param("out.bias", {classes});
    return l;
}

Layer Layer::token_embedding(std::size_t input_dim, std::size_t token_dim, std::size_t width)
{
    if (token_dim == 0 || input_dim % token_dim != 0) {
        throw InvalidArgument("input dimension " + std::to_string(input_dim) + " is not a multiple of token size " +
                              std::to_string(token_dim));
    }
    const std::size_t tokens = input_dim / token_dim;
    Layer l(LayerKind::TokenEmbedding, Activation::Linear, {input_dim}, {tokens + 1, width});
    l.hidden_ = token_dim;
    l.add_param("proj.weight", {width, token_dim});
    l.add_param("proj.bias", {width});
    l.add_param("position", {tokens + 1, width});
    return l;
}

Layer make_layer_from_metadata(LayerKind kind, Activation act, Shape in, Shape out, std::size_t hidden,
                               std::size_t pooled_slot)
{
    auto rows_of = [](const Shape& s) -> std::size_t { return s.size() == 2 ? s[0] : 0; };
    if (in.empty() || out.empty() || in.size() > 2 || out.size() > 2) {
        throw CorruptFileError("layer shapes " + shape_string(in) + " -> " + shape_string(out) + " are invalid");
    }
    Layer l = [&] {
        switch (kind) {
            case LayerKind::Dense: return Layer::dense(in.back(), out.back(), act, rows_of(in));
            case LayerKind::LayerNorm: return Layer::layer_norm(in.back(), rows_of(in));
            case LayerKind::Residual: return Layer::residual(in.back(), hidden, act, rows_of(in));
            case LayerKind::SelfAttention: return Layer::self_attention(in[0], in.back(), hidden, act);
            case LayerKind::SoftmaxHead:
                return Layer::softmax_head(in.back(), hidden, out[0], rows_of(in), pooled_slot);
            case LayerKind::TokenEmbedding: return Layer::token_embedding(in[0], hidden, out.back());
        }
        throw CorruptFileError("unknown layer kind");
    }();
    if (l.input_shape() != in || l.output_shape() != out) {
        throw CorruptFileError("layer metadata for " + std::string(to_string(kind)) + " is inconsistent");
    }
    l.activation_ = act;
    return l;
}

std::string Layer::describe() const
{
    return std::string(to_string(kind_)) + shape_string(input_shape_) + "->" + shape_string(output_shape_);
}

std::size_t Layer::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

void Layer::initialize(CounterRng& rng)
{
    for (auto& p : params_) {
        Tensor& t = p.value;
        const bool is_weight = p.name.ends_with("weight");
        if (is_weight) {
            const double fan_out = static_cast<double>(t.shape()[0]);
            const double fan_in = static_cast<double>(t.shape()[1]);
            const double limit = (activation_ == Activation::Relu && kind_ == LayerKind::Dense)
                                     ? std::sqrt(6.0 / fan_in)
                                     : std::sqrt(6.0 / (fan_in + fan_out));
            for (double& w : t.flat()) w = (2.0 * rng.uniform() - 1.0) * limit;
        } else if (p.name == "position") {
            for (double& w : t.flat()) w = (2.0 * rng.uniform() - 1.0) * 0.1;
        } else if (p.name.ends_with("gain")) {
            for (double& w : t.flat()) w = 1.0;
        } else {
            for (double& w : t.flat()) w = 0.0;
        }
    }
}

bool operator==(const Layer& a, const Layer& b)
{
    if (a.kind_ != b.kind_ || a.activation_ != b.activation_ || a.input_shape_ != b.input_shape_ ||
        a.output_shape_ != b.output_shape_ || a.hidden_ != b.hidden_ || a.pooled_slot_ != b.pooled_slot_ ||
        a.params_.size() != b.params_.size())
        return false;
    for (std::size_t i = 0; i < a.params_.size(); ++i) {
        if (a.params_[i].name != b.params_[i].name || !(a.params_[i].value == b.params_[i].value)) return false;
    }
    return true;
}

std::vector<Tensor> zero_gradients(const Layer& layer)
{
    std::vector<Tensor> g;
    g.reserve(layer.parameters().size());
    for (const auto& p : layer.parameters()) g.push_back(Tensor::zeros_like(p.value));
    return g;
}

// ---------------------------------------------------------------------------
// Per-kind rules
// ---------------------------------------------------------------------------

namespace {

void check_shape(const Layer& layer, const Tensor& t, const Shape& expected, const char* what)
{
    if (t.shape() != expected) {
        throw DimensionError(layer.describe() + ": " + what + " has shape " + shape_string(t.shape()) +
                             ", expected " + shape_string(expected));
    }
}

Tensor* grad_slot(std::vector<Tensor>* grads, std::size_t i) { return grads ? &(*grads)[i] : nullptr; }

void affine_grads(std::vector<Tensor>* grads, std::size_t w, std::size_t b, const Tensor& u, const Tensor& x)
{
    if (grads) ops::accumulate_affine_grads(u, x, (*grads)[w], (*grads)[b]);
}

// Dense ---------------------------------------------------------------------

Tensor dense_eval(const Layer& l, const Tensor& x)
{
    return ops::apply_activation(l.activation(), ops::affine(x, l.param(dense_p::W), l.param(dense_p::B)));
}

TangentPair dense_jvp(const Layer& l, const Tensor& x, const Tensor& v)
{
    Tensor z = ops::affine(x, l.param(dense_p::W), l.param(dense_p::B));
    Tensor dz = ops::matmul_nt(v, l.param(dense_p::W));
    if (l.activation() != Activation::Linear) dz.hadamard(ops::activation_slope(l.activation(), z));
    return {ops::apply_activation(l.activation(), z), std::move(dz)};
}

Tensor dense_backward(const Layer& l, const Tensor& x, const Tensor& u, std::vector<Tensor>* grads)
{
    Tensor g = u;
    if (l.activation() != Activation::Linear) {
        Tensor z = ops::affine(x, l.param(dense_p::W), l.param(dense_p::B));
        g.hadamard(ops::activation_slope(l.activation(), z));
    }
    affine_grads(grads, dense_p::W, dense_p::B, g, x);
    return ops::matmul_nn(g, l.param(dense_p::W));
}

// Layer norm ----------------------------------------------------------------

Tensor norm_eval(const Layer& l, const Tensor& x)
{
    ops::NormCache cache;
    return ops::layer_norm(x, l.param(norm_p::G), l.param(norm_p::B), cache);
}

TangentPair norm_jvp(const Layer& l, const Tensor& x, const Tensor& v)
{
    ops::NormCache cache;
    Tensor y = ops::layer_norm(x, l.param(norm_p::G), l.param(norm_p::B), cache);
    return {std::move(y), ops::layer_norm_jvp(cache, l.param(norm_p::G), v)};
}

Tensor norm_backward(const Layer& l, const Tensor& x, const Tensor& u, std::vector<Tensor>* grads)
{
    ops::NormCache cache;
    ops::layer_norm(x, l.param(norm_p::G), l.param(norm_p::B), cache);
    return ops::layer_norm_vjp(cache, l.param(norm_p::G), u, grad_slot(grads, norm_p::G),
                               grad_slot(grads, norm_p::B));
}

// Residual ------------------------------------------------------------------

Tensor residual_eval(const Layer& l, const Tensor& x)
{
    Tensor a = ops::apply_activation(l.activation(), ops::affine(x, l.param(res_p::W1), l.param(res_p::B1)));
    return x + ops::affine(a, l.param(res_p::W2), l.param(res_p::B2));
}

TangentPair residual_jvp(const Layer& l, const Tensor& x, const Tensor& v)
{
    Tensor z = ops::affine(x, l.param(res_p::W1), l.param(res_p::B1));
    Tensor dz = ops::matmul_nt(v, l.param(res_p::W1));
    dz.hadamard(ops::activation_slope(l.activation(), z));
    Tensor a = ops::apply_activation(l.activation(), z);
    return {x + ops::affine(a, l.param(res_p::W2), l.param(res_p::B2)), v + ops::matmul_nt(dz, l.param(res_p::W2))};
}

Tensor residual_backward(const Layer& l, const Tensor& x, const Tensor& u, std::vector<Tensor>* grads)
{
    Tensor z = ops::affine(x, l.param(res_p::W1), l.param(res_p::B1));
    Tensor a = ops::apply_activation(l.activation(), z);
    affine_grads(grads, res_p::W2, res_p::B2, u, a);
    Tensor dz = ops::matmul_nn(u, l.param(res_p::W2));
    dz.hadamard(ops::activation_slope(l.activation(), z));
    affine_grads(grads, res_p::W1, res_p::B1, dz, x);
    return u + ops::matmul_nn(dz, l.param(res_p::W1));
}

// Self-attention encoder layer -----------------------------------------------
//   a = LN1(x + Attn(x)),  y = LN2(a + FFN(a))

struct EncoderState {
    Tensor q, k, v, p, mixed;
    ops::NormCache ln1;
    Tensor a, z1, h1;
    ops::NormCache ln2;
    Tensor y;
};

EncoderState encoder_forward(const Layer& l, const Tensor& x)
{
    using namespace attn_p;
    EncoderState s;
    const double scale = 1.0 / std::sqrt(static_cast<double>(x.cols()));
    s.q = ops::affine(x, l.param(WQ), l.param(BQ));
    s.k = ops::affine(x, l.param(WK), l.param(BK));
    s.v = ops::affine(x, l.param(WV), l.param(BV));
    Tensor scores = ops::matmul_nt(s.q, s.k);
    scores *= scale;
    s.p = ops::softmax_rows(scores);
    s.mixed = ops::matmul_nn(s.p, s.v);
    Tensor pre1 = x + ops::affine(s.mixed, l.param(WO), l.param(BO));
    s.a = ops::layer_norm(pre1, l.param(G1), l.param(N1), s.ln1);
    s.z1 = ops::affine(s.a, l.param(W1), l.param(B1));
    s.h1 = ops::apply_activation(l.activation(), s.z1);
    Tensor pre2 = s.a + ops::affine(s.h1, l.param(W2), l.param(B2));
    s.y = ops::layer_norm(pre2, l.param(G2), l.param(N2), s.ln2);
    return s;
}

TangentPair encoder_jvp(const Layer& l, const Tensor& x, const Tensor& dx)
{
    using namespace attn_p;
    EncoderState s = encoder_forward(l, x);
    const double scale = 1.0 / std::sqrt(static_cast<double>(x.cols()));
    Tensor dq = ops::matmul_nt(dx, l.param(WQ));
    Tensor dk = ops::matmul_nt(dx, l.param(WK));
    Tensor dv = ops::matmul_nt(dx, l.param(WV));
    Tensor dscores = ops::matmul_nt(dq, s.k) + ops::matmul_nt(s.q, dk);
    dscores *= scale;
    Tensor dp = ops::softmax_rows_jvp(s.p, dscores);
    Tensor dmixed = ops::matmul_nn(dp, s.v) + ops::matmul_nn(s.p, dv);
    Tensor dpre1 = dx + ops::matmul_nt(dmixed, l.param(WO));
    Tensor da = ops::layer_norm_jvp(s.ln1, l.param(G1), dpre1);
    Tensor dz1 = ops::matmul_nt(da, l.param(W1));
    dz1.hadamard(ops::activation_slope(l.activation(), s.z1));
    Tensor dpre2 = da + ops::matmul_nt(dz1, l.param(W2));
    return {std::move(s.y), ops::layer_norm_jvp(s.ln2, l.param(G2), dpre2)};
}

Tensor encoder_backward(const Layer& l, const Tensor& x, const Tensor& u, std::vector<Tensor>* grads)
{
    using namespace attn_p;
    EncoderState s = encoder_forward(l, x);
    const double scale = 1.0 / std::sqrt(static_cast<double>(x.cols()));

    Tensor dpre2 = ops::layer_norm_vjp(s.ln2, l.param(G2), u, grad_slot(grads, G2), grad_slot(grads, N2));
    affine_grads(grads, W2, B2, dpre2, s.h1);
    Tensor dz1 = ops::matmul_nn(dpre2, l.param(W2));
    dz1.hadamard(ops::activation_slope(l.activation(), s.z1));
    affine_grads(grads, W1, B1, dz1, s.a);
    Tensor da = dpre2 + ops::matmul_nn(dz1, l.param(W1));

    Tensor dpre1 = ops::layer_norm_vjp(s.ln1, l.param(G1), da, grad_slot(grads, G1), grad_slot(grads, N1));
    affine_grads(grads, WO, BO, dpre1, s.mixed);
    Tensor dmixed = ops::matmul_nn(dpre1, l.param(WO));
    Tensor dp = ops::matmul_nt(dmixed, s.v);
    Tensor dv = ops::matmul_tn(s.p, dmixed);
    Tensor dscores = ops::softmax_rows_vjp(s.p, dp);
    dscores *= scale;
    Tensor dq = ops::matmul_nn(dscores, s.k);
    Tensor dk = ops::matmul_tn(dscores, s.q);
    affine_grads(grads, WQ, BQ, dq, x);
    affine_grads(grads, WK, BK, dk, x);
    affine_grads(grads, WV, BV, dv, x);

    Tensor dx = dpre1;
    dx += ops::matmul_nn(dq, l.param(WQ));
    dx += ops::matmul_nn(dk, l.param(WK));
    dx += ops::matmul_nn(dv, l.param(WV));
    return dx;
}

// Softmax head ----------------------------------------------------------------

std::size_t head_out_weight(const Layer& l) { return l.hidden() > 0 ? 2 : 0; }

Tensor head_input(const Layer& l, const Tensor& x)
{
    return l.input_shape().size() == 2 ? ops::select_row(x, l.pooled_slot()) : x;
}

Tensor head_eval(const Layer& l, const Tensor& x)
{
    Tensor h = head_input(l, x);
    const std::size_t wo = head_out_weight(l);
    if (l.hidden() > 0) h = ops::apply_activation(l.activation(), ops::affine(h, l.param(0), l.param(1)));
    return ops::affine(h, l.param(wo), l.param(wo + 1));
}

TangentPair head_jvp(const Layer& l, const Tensor& x, const Tensor& v)
{
    Tensor h = head_input(l, x);
    Tensor dh = head_input(l, v);
    const std::size_t wo = head_out_weight(l);
    if (l.hidden() > 0) {
        Tensor z = ops::affine(h, l.param(0), l.param(1));
        dh = ops::matmul_nt(dh, l.param(0));
        dh.hadamard(ops::activation_slope(l.activation(), z));
        h = ops::apply_activation(l.activation(), z);
    }
    return {ops::affine(h, l.param(wo), l.param(wo + 1)), ops::matmul_nt(dh, l.param(wo))};
}

Tensor head_backward(const Layer& l, const Tensor& x, const Tensor& u, std::vector<Tensor>* grads)
{
    Tensor h = head_input(l, x);
    const std::size_t wo = head_out_weight(l);
    Tensor dh;
    if (l.hidden() > 0) {
        Tensor z = ops::affine(h, l.param(0), l.param(1));
        Tensor a = ops::apply_activation(l.activation(), z);
        affine_grads(grads, wo, wo + 1, u, a);
        Tensor dz = ops::matmul_nn(u, l.param(wo));
        dz.hadamard(ops::activation_slope(l.activation(), z));
        affine_grads(grads, 0, 1, dz, h);
        dh = ops::matmul_nn(dz, l.param(0));
    } else {
        affine_grads(grads, wo, wo + 1, u, h);
        dh = ops::matmul_nn(u, l.param(wo));
    }
    if (l.input_shape().size() == 1) return dh;
    Tensor dx(l.input_shape());
    ops::scatter_row(dx, l.pooled_slot(), dh);
    return dx;
}

// Token embedding -------------------------------------------------------------

Tensor embed_tokens(const Layer& l, const Tensor& x)
{
    const std::size_t token_dim = l.hidden();
    return x.reshaped({x.size() / token_dim, token_dim});
}

Tensor embed_eval(const Layer& l, const Tensor& x)
{
    Tensor proj = ops::affine(embed_tokens(l, x), l.param(embed_p::W), l.param(embed_p::B));
    Tensor y = l.param(embed_p::POS);
    const std::size_t w = y.cols();
    for (std::size_t i = 0; i < proj.size(); ++i) y[w + i] += proj[i];
    return y;
}

TangentPair embed_jvp(const Layer& l, const Tensor& x, const Tensor& v)
{
    Tensor dproj = ops::matmul_nt(embed_tokens(l, v), l.param(embed_p::W));
    Tensor dy(l.output_shape());
    const std::size_t w = dy.cols();
    for (std::size_t i = 0; i < dproj.size(); ++i) dy[w + i] = dproj[i];
    return {embed_eval(l, x), std::move(dy)};
}

Tensor embed_backward(const Layer& l, const Tensor& x, const Tensor& u, std::vector<Tensor>* grads)
{
    const std::size_t w = u.cols();
    const std::size_t tokens = u.rows() - 1;
    Tensor g({tokens, w}, std::vector<double>(u.values().begin() + static_cast<std::ptrdiff_t>(w), u.values().end()));
    if (grads) {
        (*grads)[embed_p::POS] += u;
        ops::accumulate_affine_grads(g, embed_tokens(l, x), (*grads)[embed_p::W], (*grads)[embed_p::B]);
    }
    return ops::matmul_nn(g, l.param(embed_p::W)).reshaped(l.input_shape());
}

}  // namespace

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

Tensor eval(const Layer& layer, const Tensor& x)
{
    check_shape(layer, x, layer.input_shape(), "input");
    switch (layer.kind()) {
        case LayerKind::Dense: return dense_eval(layer, x);
        case LayerKind::LayerNorm: return norm_eval(layer, x);
        case LayerKind::Residual: return residual_eval(layer, x);
        case LayerKind::SelfAttention: return encoder_forward(layer, x).y;
        case LayerKind::SoftmaxHead: return head_eval(layer, x);
        case LayerKind::TokenEmbedding: return embed_eval(layer, x);
    }
    throw InvalidArgument("unknown layer kind");
}

TangentPair jvp(const Layer& layer, const Tensor& x, const Tensor& v)
{
    check_shape(layer, x, layer.input_shape(), "input");
    check_shape(layer, v, layer.input_shape(), "tangent");
    switch (layer.kind()) {
        case LayerKind::Dense: return dense_jvp(layer, x, v);
        case LayerKind::LayerNorm: return norm_jvp(layer, x, v);
        case LayerKind::Residual: return residual_jvp(layer, x, v);
        case LayerKind::SelfAttention: return encoder_jvp(layer, x, v);
        case LayerKind::SoftmaxHead: return head_jvp(layer, x, v);
        case LayerKind::TokenEmbedding: return embed_jvp(layer, x, v);
    }
    throw InvalidArgument("unknown layer kind");
}

Tensor backward(const Layer& layer, const Tensor& x, const Tensor& u, std::vector<Tensor>* param_grads)
{
    check_shape(layer, x, layer.input_shape(), "input");
    check_shape(layer, u, layer.output_shape(), "cotangent");
    if (param_grads && param_grads->size() != layer.parameters().size()) {
        throw DimensionError(layer.describe() + ": gradient buffer has wrong layout");
    }
    switch (layer.kind()) {
        case LayerKind::Dense: return dense_backward(layer, x, u, param_grads);
        case LayerKind::LayerNorm: return norm_backward(layer, x, u, param_grads);
        case LayerKind::Residual: return residual_backward(layer, x, u, param_grads);
        case LayerKind::SelfAttention: return encoder_backward(layer, x, u, param_grads);
        case LayerKind::SoftmaxHead: return head_backward(layer, x, u, param_grads);
        case LayerKind::TokenEmbedding: return embed_backward(layer, x, u, param_grads);
    }
    throw InvalidArgument("unknown layer kind");
}

TangentPair vjp(const Layer& layer, const Tensor& x, const Tensor& u)
{
    Tensor pulled = backward(layer, x, u, nullptr);
    return {eval(layer, x), std::move(pulled)};
}

Tensor exact_jacobian(const Layer& layer, const Tensor& x, std::size_t max_columns)
{
    const std::size_t n = layer.input_size();
    const std::size_t m = layer.output_size();
    if (n > max_columns) {
        throw OracleOnlyError("exact_jacobian is an oracle-only operation: " + std::to_string(n) +
                              " columns exceeds the cap of " + std::to_string(max_columns));
    }
    Tensor jac({m, n});
    for (std::size_t i = 0; i < n; ++i) {
        const Tensor col = jvp(layer, x, Tensor::basis(layer.input_shape(), i)).tangent;
        for (std::size_t r = 0; r < m; ++r) jac(r, i) = col[r];
    }
    return jac;
}

Tensor finite_difference_jacobian(const Layer& layer, const Tensor& x, double eps)
{
    if (!(eps > 0.0)) throw InvalidArgument("finite-difference step must be positive");
    check_shape(layer, x, layer.input_shape(), "input");
    const std::size_t n = layer.input_size();
    const std::size_t m = layer.output_size();
    Tensor jac({m, n});
    Tensor probe = x;
    for (std::size_t i = 0; i < n; ++i) {
        const double saved = probe[i];
        probe[i] = saved + eps;
        const Tensor up = eval(layer, probe);
        probe[i] = saved - eps;
        const Tensor down = eval(layer, probe);
        probe[i] = saved;
        for (std::size_t r = 0; r < m; ++r) jac(r, i) = (up[r] - down[r]) / (2.0 * eps);
    }
    return jac;
}

}  // namespace blood
