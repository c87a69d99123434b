#ifndef RESTOLAB_TENSOR_HPP
#define RESTOLAB_TENSOR_HPP

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace restolab {

// Dense row-major double tensor. Feature maps are stored CHW, matrices
// [rows, cols], vectors [n], scalars [].
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(count(shape_), fill) {}

    static Tensor scalar(double v) {
        Tensor t{std::vector<int>{}};
        t.data_.assign(1, v);
        return t;
    }

    static Tensor from(std::vector<int> shape, std::vector<double> data) {
        if (count(shape) != static_cast<int64_t>(data.size()))
            throw std::invalid_argument("Tensor::from: shape/data size mismatch");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = std::move(data);
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    int size() const { return static_cast<int>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](int i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int i) const { return data_[static_cast<size_t>(i)]; }

    // CHW accessors
    double& at(int c, int y, int x) {
        return data_[static_cast<size_t>((c * dim(1) + y) * dim(2) + x)];
    }
    double at(int c, int y, int x) const {
        return data_[static_cast<size_t>((c * dim(1) + y) * dim(2) + x)];
    }

    // matrix accessors
    double& at(int r, int c) { return data_[static_cast<size_t>(r * dim(1) + c)]; }
    double at(int r, int c) const { return data_[static_cast<size_t>(r * dim(1) + c)]; }

    double item() const {
        if (size() != 1) throw std::logic_error("Tensor::item: not a scalar");
        return data_[0];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor reshaped(std::vector<int> shape) const {
        if (count(shape) != static_cast<int64_t>(data_.size()))
            throw std::invalid_argument("Tensor::reshaped: element count mismatch");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

private:
    static int64_t count(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int d : shape) {
            if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    std::vector<int> shape_;
    std::vector<double> data_;
};

} // namespace restolab

#endif
