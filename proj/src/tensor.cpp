#include "blood/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "blood/errors.hpp"

namespace blood {

namespace {
thread_local std::size_t g_peak_elements = 0;
}

void AllocationProbe::reset() { g_peak_elements = 0; }
std::size_t AllocationProbe::peak_elements() { return g_peak_elements; }
void AllocationProbe::note(std::size_t elements) { g_peak_elements = std::max(g_peak_elements, elements); }

std::size_t shape_size(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape)
{
    std::string out = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + ")";
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0)
{
    AllocationProbe::note(data_.size());
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data))
{
    if (shape_size(shape_) != data_.size()) {
        throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string(shape_));
    }
    AllocationProbe::note(data_.size());
}

Tensor::Tensor(const Tensor& other) : shape_(other.shape_), data_(other.data_)
{
    AllocationProbe::note(data_.size());
}

Tensor& Tensor::operator=(const Tensor& other)
{
    if (this != &other) {
        shape_ = other.shape_;
        data_ = other.data_;
        AllocationProbe::note(data_.size());
    }
    return *this;
}

Tensor Tensor::vector(std::initializer_list<double> values) { return vector(std::vector<double>(values)); }

Tensor Tensor::vector(std::vector<double> values)
{
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values)
{
    return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::basis(const Shape& shape, std::size_t index)
{
    Tensor t(shape);
    t[index] = 1.0;
    return t;
}

Tensor Tensor::identity(std::size_t n)
{
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

std::size_t Tensor::rows() const
{
    if (shape_.size() <= 1) return 1;
    return shape_size(shape_) / shape_.back();
}

std::size_t Tensor::cols() const { return shape_.empty() ? 1 : shape_.back(); }

Tensor Tensor::reshaped(Shape shape) const
{
    if (shape_size(shape) != data_.size()) {
        throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
}

namespace {
void require_same(const Tensor& a, const Tensor& b, const char* op)
{
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}
}  // namespace

Tensor& Tensor::operator+=(const Tensor& other)
{
    require_same(*this, other, "add");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Tensor& Tensor::operator-=(const Tensor& other)
{
    require_same(*this, other, "subtract");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(double s)
{
    for (double& x : data_) x *= s;
    return *this;
}

Tensor& Tensor::axpy(double s, const Tensor& other)
{
    require_same(*this, other, "axpy");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * other.data_[i];
    return *this;
}

Tensor& Tensor::hadamard(const Tensor& other)
{
    require_same(*this, other, "hadamard");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] *= other.data_[i];
    return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(double s, Tensor a) { return a *= s; }

double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }
double norm(std::span<const double> a) { return std::sqrt(squared_norm(a)); }

double max_abs_difference(const Tensor& a, const Tensor& b)
{
    require_same(a, b, "max_abs_difference");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

bool all_finite(const Tensor& t)
{
    return std::all_of(t.flat().begin(), t.flat().end(), [](double x) { return std::isfinite(x); });
}

}  // namespace blood
