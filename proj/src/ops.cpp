#include "ops.hpp"

#include <algorithm>
#include <cmath>

#include "blood/errors.hpp"

namespace blood::ops {

namespace {

Shape row_shape(const Tensor& like, std::size_t cols)
{
    if (like.rank() <= 1) return {cols};
    Shape s = like.shape();
    s.back() = cols;
    return s;
}

void require_cols(const Tensor& a, std::size_t k, const char* what)
{
    if (a.cols() != k) {
        throw DimensionError(std::string(what) + ": inner dimension " + std::to_string(a.cols()) + " vs " +
                             std::to_string(k));
    }
}

}  // namespace

Tensor matmul_nt(const Tensor& a, const Tensor& b)
{
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    require_cols(b, k, "matmul_nt");
    Tensor out(row_shape(a, m));
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = pa + i * k;
        for (std::size_t j = 0; j < m; ++j) {
            const double* bj = pb + j * k;
            double s = 0.0;
            for (std::size_t t = 0; t < k; ++t) s += ai[t] * bj[t];
            po[i * m + j] = s;
        }
    }
    return out;
}

Tensor matmul_nn(const Tensor& a, const Tensor& b)
{
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    if (b.rows() != k) throw DimensionError("matmul_nn: inner dimension mismatch");
    Tensor out(row_shape(a, m));
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < n; ++i) {
        double* oi = po + i * m;
        for (std::size_t t = 0; t < k; ++t) {
            const double ait = pa[i * k + t];
            if (ait == 0.0) continue;
            const double* bt = pb + t * m;
            for (std::size_t j = 0; j < m; ++j) oi[j] += ait * bt[j];
        }
    }
    return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b)
{
    const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
    if (b.rows() != k) throw DimensionError("matmul_tn: inner dimension mismatch");
    Tensor out({n, m});
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t t = 0; t < k; ++t) {
        const double* at = pa + t * n;
        const double* bt = pb + t * m;
        for (std::size_t i = 0; i < n; ++i) {
            const double ati = at[i];
            if (ati == 0.0) continue;
            double* oi = po + i * m;
            for (std::size_t j = 0; j < m; ++j) oi[j] += ati * bt[j];
        }
    }
    return out;
}

void add_row_bias(Tensor& y, const Tensor& bias)
{
    const std::size_t n = y.rows(), m = y.cols();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) y[i * m + j] += bias[j];
}

Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias)
{
    Tensor y = matmul_nt(x, weight);
    add_row_bias(y, bias);
    return y;
}

void accumulate_affine_grads(const Tensor& u, const Tensor& x, Tensor& dweight, Tensor& dbias)
{
    const std::size_t n = u.rows(), m = u.cols(), k = x.cols();
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < m; ++i) {
            const double ui = u[r * m + i];
            dbias[i] += ui;
            if (ui == 0.0) continue;
            double* dw = dweight.data() + i * k;
            const double* xr = x.data() + r * k;
            for (std::size_t j = 0; j < k; ++j) dw[j] += ui * xr[j];
        }
    }
}

Tensor apply_activation(Activation act, const Tensor& z)
{
    Tensor out = z;
    if (act == Activation::Linear) return out;
    for (double& v : out.flat()) v = activate(act, v);
    return out;
}

Tensor activation_slope(Activation act, const Tensor& z)
{
    Tensor out = Tensor::zeros_like(z);
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = activate_derivative(act, z[i]);
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, NormCache& cache)
{
    const std::size_t n = x.rows(), d = x.cols();
    cache.normalized = Tensor::zeros_like(x);
    cache.inv_std.assign(n, 0.0);
    Tensor y = Tensor::zeros_like(x);
    for (std::size_t r = 0; r < n; ++r) {
        auto xr = x.row(r);
        double mean = 0.0;
        for (double v : xr) mean += v;
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (double v : xr) var += (v - mean) * (v - mean);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        cache.inv_std[r] = inv;
        auto nr = cache.normalized.row(r);
        auto yr = y.row(r);
        for (std::size_t j = 0; j < d; ++j) {
            nr[j] = (xr[j] - mean) * inv;
            yr[j] = gain[j] * nr[j] + bias[j];
        }
    }
    return y;
}

Tensor layer_norm_jvp(const NormCache& cache, const Tensor& gain, const Tensor& v)
{
    const std::size_t n = v.rows(), d = v.cols();
    const double inv_d = 1.0 / static_cast<double>(d);
    Tensor out = Tensor::zeros_like(v);
    for (std::size_t r = 0; r < n; ++r) {
        auto vr = v.row(r);
        auto nr = cache.normalized.row(r);
        double mean_v = 0.0, mean_vn = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            mean_v += vr[j];
            mean_vn += vr[j] * nr[j];
        }
        mean_v *= inv_d;
        mean_vn *= inv_d;
        auto orow = out.row(r);
        for (std::size_t j = 0; j < d; ++j)
            orow[j] = gain[j] * (vr[j] - mean_v - nr[j] * mean_vn) * cache.inv_std[r];
    }
    return out;
}

Tensor layer_norm_vjp(const NormCache& cache, const Tensor& gain, const Tensor& u, Tensor* dgain, Tensor* dbias)
{
    const std::size_t n = u.rows(), d = u.cols();
    const double inv_d = 1.0 / static_cast<double>(d);
    Tensor out = Tensor::zeros_like(u);
    std::vector<double> gu(d);
    for (std::size_t r = 0; r < n; ++r) {
        auto ur = u.row(r);
        auto nr = cache.normalized.row(r);
        double mean_g = 0.0, mean_gn = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            gu[j] = gain[j] * ur[j];
            mean_g += gu[j];
            mean_gn += gu[j] * nr[j];
            if (dgain) (*dgain)[j] += ur[j] * nr[j];
            if (dbias) (*dbias)[j] += ur[j];
        }
        mean_g *= inv_d;
        mean_gn *= inv_d;
        auto orow = out.row(r);
        for (std::size_t j = 0; j < d; ++j) orow[j] = (gu[j] - mean_g - nr[j] * mean_gn) * cache.inv_std[r];
    }
    return out;
}

Tensor softmax_rows(const Tensor& s)
{
    Tensor p = Tensor::zeros_like(s);
    const std::size_t n = s.rows();
    for (std::size_t r = 0; r < n; ++r) {
        auto sr = s.row(r);
        auto pr = p.row(r);
        const double mx = *std::max_element(sr.begin(), sr.end());
        double z = 0.0;
        for (std::size_t j = 0; j < sr.size(); ++j) {
            pr[j] = std::exp(sr[j] - mx);
            z += pr[j];
        }
        for (double& v : pr) v /= z;
    }
    return p;
}

Tensor softmax_rows_jvp(const Tensor& p, const Tensor& ds)
{
    Tensor out = Tensor::zeros_like(ds);
    const std::size_t n = p.rows();
    for (std::size_t r = 0; r < n; ++r) {
        auto pr = p.row(r);
        auto dr = ds.row(r);
        const double c = dot(pr, dr);
        auto orow = out.row(r);
        for (std::size_t j = 0; j < pr.size(); ++j) orow[j] = pr[j] * (dr[j] - c);
    }
    return out;
}

Tensor select_row(const Tensor& x, std::size_t row)
{
    auto r = x.row(row);
    return Tensor({r.size()}, std::vector<double>(r.begin(), r.end()));
}

void scatter_row(Tensor& x, std::size_t row, const Tensor& values)
{
    auto r = x.row(row);
    std::copy(values.flat().begin(), values.flat().end(), r.begin());
}

}  // namespace blood::ops
