#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace metainv {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
bool shape_equal(const Shape& a, const Shape& b);
std::string shape_str(const Shape& shape);

/// Dense row-major f64 tensor. All numerics in this project run on these;
/// there is no f32 path.
class Tensor {
  public:
    Tensor() = default;

    /// Zero-filled tensor of the given shape.
    explicit Tensor(Shape shape);

    /// Adopts an existing buffer. Sizes must agree.
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value) { return full({1}, value); }

    /// Constructor for data entering from outside the library (files,
    /// bindings). Rejects NaN/Inf entries.
    static Tensor from_external(Shape shape, std::vector<double> data);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> span() { return data_; }
    std::span<const double> span() const { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // 2-D / 3-D accessors (row-major).
    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& at(std::size_t c, std::size_t i, std::size_t j) {
        return data_[(c * shape_[1] + i) * shape_[2] + j];
    }
    double at(std::size_t c, std::size_t i, std::size_t j) const {
        return data_[(c * shape_[1] + i) * shape_[2] + j];
    }

    bool same_shape(const Tensor& other) const { return shape_equal(shape_, other.shape_); }
    bool all_finite() const;

    Tensor& operator+=(const Tensor& other);
    Tensor& operator-=(const Tensor& other);
    Tensor& operator*=(double c);

  private:
    Shape shape_;
    std::vector<double> data_;
};

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double c, const Tensor& a);

/// Sequential reductions; the evaluation order is part of the contract
/// (bit-reproducibility across runs and thread counts).
double dot(const Tensor& a, const Tensor& b);
double norm2(const Tensor& a);
double sum(const Tensor& a);

/// Throws std::invalid_argument unless shapes match.
void require_same_shape(const Tensor& a, const Tensor& b, const char* where);

} // namespace metainv
