#pragma once

#include <utility>
#include <vector>

#include "hoi/tensor.hpp"

namespace hoi {

// Forward operations are pure; every differentiable op has a matching
// *_backward that maps an upstream gradient to gradients for each input,
// given whatever the forward recorded. Composition of backwards is explicit
// in the callers (there is no autodiff graph).

/// Same-padded cross-correlation plus bias. Output spatial extents are
/// ceil(h / stride) x ceil(w / stride); padding is zero and split evenly
/// (extra cell at the high side), so stride 1 with odd kernels keeps the
/// input's spatial extents.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvWeights<T>& w, int stride = 1);

template <typename T>
struct ConvGrads {
    Tensor<T> input;
    ConvWeights<T> weights;
};

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const ConvWeights<T>& w, const Tensor<T>& grad_out,
                             int stride = 1);

/// Affine map on a vector: out[j] = sum_i input[i] * kernel[0,0,i,j] + bias[j].
template <typename T>
Tensor<T> fully_connected(const Tensor<T>& input, const ConvWeights<T>& w);

template <typename T>
ConvGrads<T> fully_connected_backward(const Tensor<T>& input, const ConvWeights<T>& w, const Tensor<T>& grad_out);

/// Softmax jointly over the given axis set (max-subtracted for stability).
/// Entries sum to 1 over each slice spanned by the axes.
template <typename T>
Tensor<T> softmax(const Tensor<T>& input, const std::vector<int>& axes);

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& output, const Tensor<T>& grad_out, const std::vector<int>& axes);

template <typename T>
Tensor<T> relu(const Tensor<T>& input);

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input);

/// Backward from the forward output: dx = y * (1 - y) * g.
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& output, const Tensor<T>& grad_out);

/// [h, w, c] -> [c] mean over spatial positions.
template <typename T>
Tensor<T> global_average_pool(const Tensor<T>& input);

template <typename T>
Tensor<T> global_average_pool_backward(const Tensor<T>& grad_out, int h, int w);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> elementwise_mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
std::pair<Tensor<T>, Tensor<T>> elementwise_mul_backward(const Tensor<T>& a, const Tensor<T>& b,
                                                         const Tensor<T>& grad_out);

/// Multiplies a per-position [h, w] or per-channel [c] factor across an
/// [h, w, c] map.
template <typename T>
Tensor<T> broadcast_mul(const Tensor<T>& map, const Tensor<T>& factor);

template <typename T>
struct BroadcastMulGrads {
    Tensor<T> map;
    Tensor<T> factor;
};

template <typename T>
BroadcastMulGrads<T> broadcast_mul_backward(const Tensor<T>& map, const Tensor<T>& factor, const Tensor<T>& grad_out);

/// Concatenation of two rank-1 tensors.
template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
std::pair<Tensor<T>, Tensor<T>> concat_backward(int len_a, int len_b, const Tensor<T>& grad_out);

template <typename T>
struct MaxPoolResult {
    Tensor<T> output;
    // Linear index into the input per output element; ties resolve to the
    // first maximal element in scan order.
    std::vector<std::int64_t> argmax;
};

/// Valid-region max pooling on [h, w, c] with a square window.
template <typename T>
MaxPoolResult<T> max_pool(const Tensor<T>& input, int window, int stride);

template <typename T>
Tensor<T> max_pool_backward(const MaxPoolResult<T>& fwd, const std::vector<int>& input_dims,
                            const Tensor<T>& grad_out);

template <typename T>
Tensor<T> flatten(const Tensor<T>& input);

template <typename T>
Tensor<T> reshape(const Tensor<T>& input, std::vector<int> dims);

}  // namespace hoi
