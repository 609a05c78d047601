#include "atune/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "atune/errors.hpp"

namespace atune {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size()) {
        throw ContractViolation("tensor shape " + shape_string(shape_) + " does not match " +
                                std::to_string(data_.size()) + " elements");
    }
    if (!all_finite()) throw NumericError("tensor constructed with non-finite entries");
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::vector(std::span<const double> values) {
    return Tensor({values.size()}, std::vector<double>(values.begin(), values.end()));
}

std::size_t Tensor::extent(std::size_t axis) const {
    if (axis >= shape_.size()) throw ContractViolation("tensor axis out of range");
    return shape_[axis];
}

double& Tensor::at(std::size_t row, std::size_t col) {
    return data_[row * shape_.at(1) + col];
}

double Tensor::at(std::size_t row, std::size_t col) const {
    return data_[row * shape_.at(1) + col];
}

std::span<double> Tensor::row(std::size_t index) {
    const std::size_t stride = shape_.empty() ? 0 : data_.size() / shape_[0];
    return std::span<double>(data_).subspan(index * stride, stride);
}

std::span<const double> Tensor::row(std::size_t index) const {
    const std::size_t stride = shape_.empty() ? 0 : data_.size() / shape_[0];
    return std::span<const double>(data_).subspan(index * stride, stride);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size()) {
        throw ContractViolation("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    Tensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw ContractViolation(std::string(what) + ": shape " + shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
    }
}

double l2_norm(std::span<const double> values) {
    double sum = 0.0;
    for (double v : values) sum += v * v;
    return std::sqrt(sum);
}

}  // namespace atune
