#pragma once

// Row-matrix kernels shared by the layer kinds. A rank-1 tensor is one row;
// results keep the row structure of the left operand.

#include <vector>

#include "blood/layer.hpp"
#include "blood/tensor.hpp"

namespace blood::ops {

/// a (n x k) times b^T where b is (m x k): n x m.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// a (n x k) times b (k x m): n x m.
Tensor matmul_nn(const Tensor& a, const Tensor& b);
/// a^T b where a is (k x n) and b is (k x m): n x m, always rank 2.
Tensor matmul_tn(const Tensor& a, const Tensor& b);

/// x W^T + bias for every row.
Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias);
void add_row_bias(Tensor& y, const Tensor& bias);
/// dW += u^T x; db += column sums of u.
void accumulate_affine_grads(const Tensor& u, const Tensor& x, Tensor& dweight, Tensor& dbias);

Tensor apply_activation(Activation act, const Tensor& z);
Tensor activation_slope(Activation act, const Tensor& z);

struct NormCache {
    Tensor normalized;
    std::vector<double> inv_std;
};

inline constexpr double kLayerNormEps = 1e-5;

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, NormCache& cache);
Tensor layer_norm_jvp(const NormCache& cache, const Tensor& gain, const Tensor& v);
Tensor layer_norm_vjp(const NormCache& cache, const Tensor& gain, const Tensor& u, Tensor* dgain, Tensor* dbias);

/// Row-wise softmax.
Tensor softmax_rows(const Tensor& s);
/// Tangent of a row-wise softmax with output p: p * (ds - rowsum(p * ds)).
Tensor softmax_rows_jvp(const Tensor& p, const Tensor& ds);
/// Same linear map; it is self-adjoint.
inline Tensor softmax_rows_vjp(const Tensor& p, const Tensor& dp) { return softmax_rows_jvp(p, dp); }

Tensor select_row(const Tensor& x, std::size_t row);
void scatter_row(Tensor& x, std::size_t row, const Tensor& values);

}  // namespace blood::ops
