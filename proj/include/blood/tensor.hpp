#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace blood {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
///
/// Rank-1 tensors are vectors; rank-2 tensors are treated as a stack of rows
/// (one row per token for the transformer layers). Row-wise operations treat a
/// rank-1 tensor as a single row.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> data);

    Tensor(const Tensor& other);
    Tensor& operator=(const Tensor& other);
    Tensor(Tensor&&) noexcept = default;
    Tensor& operator=(Tensor&&) noexcept = default;

    static Tensor vector(std::initializer_list<double> values);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);
    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }
    static Tensor basis(const Shape& shape, std::size_t index);
    static Tensor identity(std::size_t n);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    /// Number of rows when viewed as a row stack (1 for vectors).
    std::size_t rows() const;
    /// Length of the trailing dimension.
    std::size_t cols() const;

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    std::span<double> flat() { return data_; }
    std::span<const double> flat() const { return data_; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    const std::vector<double>& values() const { return data_; }

    Tensor reshaped(Shape shape) const;
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    Tensor& operator+=(const Tensor& other);
    Tensor& operator-=(const Tensor& other);
    Tensor& operator*=(double s);
    /// this += s * other
    Tensor& axpy(double s, const Tensor& other);
    Tensor& hadamard(const Tensor& other);

    friend bool operator==(const Tensor& a, const Tensor& b)
    {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(double s, Tensor a);

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);
double norm(std::span<const double> a);
double max_abs_difference(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

/// Forward-mode carrier: a primal value and a tangent of the same shape.
struct TangentPair {
    Tensor primal;
    Tensor tangent;
};

/// Thread-local record of the largest tensor buffer created since the last
/// reset. Used to check that estimators stay O(d) in memory.
class AllocationProbe {
public:
    static void reset();
    static std::size_t peak_elements();
    static void note(std::size_t elements);
};

}  // namespace blood
