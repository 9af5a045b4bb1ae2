#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace hoi {

// Error hierarchy. The CLI maps ValidationError/ShapeError/IoError to exit
// code 1 and NumericError (NaN/Inf escaping a computation) to exit code 2.
class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string shape_to_string(const std::vector<int>& dims);

/// Dense N-d array of f32 or f64 scalars, row-major with the last dimension
/// fastest. Channels-last [h, w, c] ordering is used throughout the library.
/// Tensors are immutable by convention once handed to an operation; all ops
/// are pure functions of their inputs.
template <typename T>
class Tensor {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>,
                  "Tensor supports float and double modes only");

public:
    Tensor() = default;

    explicit Tensor(std::vector<int> dims) : dims_(std::move(dims)) {
        data_.assign(static_cast<std::size_t>(checked_size(dims_)), T(0));
    }

    Tensor(std::vector<int> dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
        if (checked_size(dims_) != static_cast<std::int64_t>(data_.size())) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match extents " + shape_to_string(dims_));
        }
    }

    static Tensor full(std::vector<int> dims, T value) {
        Tensor t(std::move(dims));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    int rank() const { return static_cast<int>(dims_.size()); }
    const std::vector<int>& dims() const { return dims_; }
    int dim(int i) const { return dims_[static_cast<std::size_t>(i)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::int64_t i) {
        assert(i >= 0 && i < size());
        return data_[static_cast<std::size_t>(i)];
    }
    const T& operator[](std::int64_t i) const {
        assert(i >= 0 && i < size());
        return data_[static_cast<std::size_t>(i)];
    }

    // Unchecked fast accessors for the common ranks.
    T& operator()(int i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator()(int i) const { return data_[static_cast<std::size_t>(i)]; }

    T& operator()(int y, int x) {
        assert(rank() == 2);
        return data_[static_cast<std::size_t>(y) * dims_[1] + x];
    }
    const T& operator()(int y, int x) const {
        assert(rank() == 2);
        return data_[static_cast<std::size_t>(y) * dims_[1] + x];
    }

    T& operator()(int y, int x, int c) {
        assert(rank() == 3);
        return data_[(static_cast<std::size_t>(y) * dims_[1] + x) * dims_[2] + c];
    }
    const T& operator()(int y, int x, int c) const {
        assert(rank() == 3);
        return data_[(static_cast<std::size_t>(y) * dims_[1] + x) * dims_[2] + c];
    }

    T& operator()(int a, int b, int c, int d) {
        assert(rank() == 4);
        return data_[((static_cast<std::size_t>(a) * dims_[1] + b) * dims_[2] + c) * dims_[3] + d];
    }
    const T& operator()(int a, int b, int c, int d) const {
        assert(rank() == 4);
        return data_[((static_cast<std::size_t>(a) * dims_[1] + b) * dims_[2] + c) * dims_[3] + d];
    }

    bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

    bool all_finite() const {
        for (T v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    std::string shape_str() const { return shape_to_string(dims_); }

private:
    static std::int64_t checked_size(const std::vector<int>& dims) {
        if (dims.empty()) throw ShapeError("tensor rank must be >= 1");
        std::int64_t n = 1;
        for (int d : dims) {
            if (d < 1) throw ShapeError("tensor extents must be >= 1, got " + shape_to_string(dims));
            n *= d;
        }
        return n;
    }

    std::vector<int> dims_;
    std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

/// Convolution / fully-connected parameters. kernel is [kh, kw, c_in, c_out]
/// with odd kh, kw (same-padding convolutions only); an FC layer is the
/// kh = kw = 1 case applied to a 1x1 spatial map.
template <typename T>
struct ConvWeights {
    Tensor<T> kernel;
    Tensor<T> bias;

    ConvWeights() = default;
    ConvWeights(Tensor<T> k, Tensor<T> b) : kernel(std::move(k)), bias(std::move(b)) { validate("conv"); }

    int kh() const { return kernel.dim(0); }
    int kw() const { return kernel.dim(1); }
    int c_in() const { return kernel.dim(2); }
    int c_out() const { return kernel.dim(3); }

    void validate(const std::string& name) const {
        if (kernel.rank() != 4) {
            throw ShapeError(name + ": kernel must be rank 4 [kh, kw, c_in, c_out], got " + kernel.shape_str());
        }
        if (kernel.dim(0) % 2 == 0 || kernel.dim(1) % 2 == 0) {
            throw ShapeError(name + ": kernel extents must be odd, got " + kernel.shape_str());
        }
        if (bias.rank() != 1 || bias.dim(0) != kernel.dim(3)) {
            throw ShapeError(name + ": bias " + bias.shape_str() + " does not match kernel c_out in " +
                             kernel.shape_str());
        }
    }
};

template <typename T>
ConvWeights<T> zeros_like(const ConvWeights<T>& w) {
    return ConvWeights<T>{Tensor<T>(w.kernel.dims()), Tensor<T>(w.bias.dims())};
}

template <typename T>
Tensor<T> zeros_like(const Tensor<T>& t) {
    return Tensor<T>(t.dims());
}

template <typename T>
void accumulate(Tensor<T>& into, const Tensor<T>& grad) {
    if (into.empty()) {
        into = grad;
        return;
    }
    if (!into.same_shape(grad)) {
        throw ShapeError("accumulate: shapes differ, " + into.shape_str() + " vs " + grad.shape_str());
    }
    for (std::int64_t i = 0; i < into.size(); ++i) into[i] += grad[i];
}

template <typename T>
void accumulate(ConvWeights<T>& into, const ConvWeights<T>& grad) {
    accumulate(into.kernel, grad.kernel);
    accumulate(into.bias, grad.bias);
}

}  // namespace hoi
