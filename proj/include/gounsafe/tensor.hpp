#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace gounsafe {

class ShapeMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string shape_to_string(const std::vector<std::size_t>& shape);

// Dense row-major tensor of doubles. Rank 0 is a scalar, rank 1 is treated
// as a row vector, rank 2 is a matrix.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(element_count(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != element_count(shape_))
            throw ShapeMismatch("tensor data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_to_string(shape_));
    }

    static Tensor scalar(double v) { return Tensor({}, {v}); }

    static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }

    static Tensor row(std::vector<double> values) {
        std::size_t n = values.size();
        return Tensor({1, n}, std::move(values));
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }

    std::size_t rows() const {
        if (shape_.size() < 2) return shape_.empty() ? 1 : 1;
        return shape_[0];
    }

    std::size_t cols() const {
        if (shape_.empty()) return 1;
        return shape_.back();
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& at(std::size_t i) { return data_[i]; }
    double at(std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    double item() const {
        if (data_.size() != 1)
            throw ShapeMismatch("item() on tensor of shape " + shape_to_string(shape_));
        return data_[0];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    Tensor reshaped(std::vector<std::size_t> shape) const {
        if (element_count(shape) != data_.size())
            throw ShapeMismatch("cannot reshape " + shape_to_string(shape_) + " to " +
                                shape_to_string(shape));
        return Tensor(std::move(shape), data_);
    }

    static std::size_t element_count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

}  // namespace gounsafe
