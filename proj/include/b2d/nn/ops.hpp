#pragma once

#include <cstddef>
#include <vector>

#include "b2d/nn/tensor.hpp"

// Forward and backward kernels for the fixed layer set. All image tensors are
// NHWC; convolution kernels are [kh, kw, Cin, Cout], depthwise kernels [kh, kw, C].
// Shape violations throw std::invalid_argument naming the offending dimension.
namespace b2d::nn {

enum class Padding { Valid, Same };

// Output extent and leading pad for one spatial axis. "same" pads (k-1)/2 before
// and the rest after, so even kernels put the extra row/column at the bottom/right.
struct AxisGeometry {
  std::size_t out = 0;
  std::size_t pad_before = 0;
};
AxisGeometry axis_geometry(std::size_t in, std::size_t k, Padding p);

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, Padding p);

template <typename T>
struct ConvGrads {
  Tensor<T> dx, dw, db;
};

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, Padding p);

template <typename T>
Tensor<T> depthwise_conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, Padding p);

template <typename T>
ConvGrads<T> depthwise_conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                                       Padding p);

// Depthwise (no bias) followed by a 1x1 convolution with bias.
template <typename T>
Tensor<T> separable_conv2d_forward(const Tensor<T>& x, const Tensor<T>& depthwise_w,
                                   const Tensor<T>& pointwise_w, const Tensor<T>& b, Padding p);

template <typename T>
struct MaxPoolResult {
  Tensor<T> y;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

// 2x2 window, stride 2; a trailing odd row/column is dropped.
template <typename T>
MaxPoolResult<T> maxpool2d(const Tensor<T>& x);

template <typename T>
Tensor<T> maxpool2d_backward(const Tensor<T>& dy, const std::vector<std::size_t>& argmax, const Shape& x_shape);

enum class BatchNormMode { Train, Infer };

template <typename T>
struct BatchNormCache {
  BatchNormMode mode = BatchNormMode::Infer;
  Tensor<T> xhat;
  std::vector<T> inv_std;
};

// Per-channel normalization over (N,H,W) for any tensor whose last axis is C.
// Train mode uses biased batch statistics and updates the running estimates as
// r <- momentum*r + (1-momentum)*batch.
template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                            Tensor<T>& running_mean, Tensor<T>& running_var, BatchNormMode mode,
                            double momentum = 0.99, double eps = 1e-3, BatchNormCache<T>* cache = nullptr);

template <typename T>
struct BatchNormGrads {
  Tensor<T> dx, dgamma, dbeta;
};

template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& dy, const Tensor<T>& gamma, const BatchNormCache<T>& cache);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x);
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy);

// [N,...] -> [N, prod(...)]
template <typename T>
Tensor<T> flatten(const Tensor<T>& x);

// y = x W + b with x [N,in], W [in,out], b [out].
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

template <typename T>
struct DenseGrads {
  Tensor<T> dx, dw, db;
};
template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy);

// Row-wise softmax of [N,K].
template <typename T>
Tensor<T> softmax_forward(const Tensor<T>& x);
template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& y, const Tensor<T>& dy);

// -(1/N) sum log p_true with p clamped to [1e-7, 1-1e-7]. Labels must be one-hot rows.
template <typename T>
double cross_entropy_loss(const Tensor<T>& probs, const Tensor<T>& onehot);

}  // namespace b2d::nn
