#include "metainv/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace metainv {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

bool shape_equal(const Shape& a, const Shape& b) { return a == b; }

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size())
        throw std::invalid_argument("Tensor: shape " + shape_str(shape_) + " does not match buffer of size " +
                                    std::to_string(data_.size()));
}

Tensor Tensor::full(Shape shape, double value) {
    Tensor t(std::move(shape));
    for (double& v : t.data_) v = value;
    return t;
}

Tensor Tensor::from_external(Shape shape, std::vector<double> data) {
    Tensor t(std::move(shape), std::move(data));
    if (!t.all_finite()) throw std::invalid_argument("Tensor: external data contains NaN/Inf");
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(where) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
}

Tensor& Tensor::operator+=(const Tensor& other) {
    require_same_shape(*this, other, "Tensor::operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
    require_same_shape(*this, other, "Tensor::operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(double c) {
    for (double& v : data_) v *= c;
    return *this;
}

Tensor operator+(const Tensor& a, const Tensor& b) {
    Tensor out = a;
    out += b;
    return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
    Tensor out = a;
    out -= b;
    return out;
}

Tensor operator*(double c, const Tensor& a) {
    Tensor out = a;
    out *= c;
    return out;
}

double dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "dot");
    double acc = 0.0;
    const double* pa = a.data();
    const double* pb = b.data();
    for (std::size_t i = 0; i < a.size(); ++i) acc += pa[i] * pb[i];
    return acc;
}

double norm2(const Tensor& a) { return std::sqrt(dot(a, a)); }

double sum(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.span()) acc += v;
    return acc;
}

} // namespace metainv
