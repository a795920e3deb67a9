#include "b2d/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace b2d::nn {

namespace {

[[noreturn]] void shape_error(const std::string& op, const std::string& what) {
  throw std::invalid_argument(op + ": " + what);
}

void require_rank(const std::string& op, const std::string& name, const Shape& s, std::size_t rank) {
  if (s.size() != rank)
    shape_error(op, name + " must have rank " + std::to_string(rank) + ", got " + shape_string(s));
}

void require_dim(const std::string& op, const std::string& what, std::size_t got, std::size_t want) {
  if (got != want) shape_error(op, what + " is " + std::to_string(got) + ", expected " + std::to_string(want));
}

// C[M,N] += A[M,K] * B[K,N], all row-major with explicit leading dimensions.
template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,
             std::size_t ldb, T* C, std::size_t ldc) {
  std::size_t i = 0;
  for (; i + 4 <= M; i += 4) {
    T* c0 = C + i * ldc;
    T* c1 = c0 + ldc;
    T* c2 = c1 + ldc;
    T* c3 = c2 + ldc;
    const T* a0 = A + i * lda;
    const T* a1 = a0 + lda;
    const T* a2 = a1 + lda;
    const T* a3 = a2 + lda;
    for (std::size_t k = 0; k < K; ++k) {
      const T v0 = a0[k], v1 = a1[k], v2 = a2[k], v3 = a3[k];
      const T* b = B + k * ldb;
      for (std::size_t j = 0; j < N; ++j) {
        const T bj = b[j];
        c0[j] += v0 * bj;
        c1[j] += v1 * bj;
        c2[j] += v2 * bj;
        c3[j] += v3 * bj;
      }
    }
  }
  for (; i < M; ++i) {
    T* c = C + i * ldc;
    const T* a = A + i * lda;
    for (std::size_t k = 0; k < K; ++k) {
      const T v = a[k];
      const T* b = B + k * ldb;
      for (std::size_t j = 0; j < N; ++j) c[j] += v * b[j];
    }
  }
}

// C[K,N] += A[M,K]^T * B[M,N]
template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,
             std::size_t ldb, T* C, std::size_t ldc) {
  std::size_t r = 0;
  for (; r + 4 <= M; r += 4) {
    const T* a0 = A + r * lda;
    const T* a1 = a0 + lda;
    const T* a2 = a1 + lda;
    const T* a3 = a2 + lda;
    const T* b0 = B + r * ldb;
    const T* b1 = b0 + ldb;
    const T* b2 = b1 + ldb;
    const T* b3 = b2 + ldb;
    for (std::size_t k = 0; k < K; ++k) {
      const T v0 = a0[k], v1 = a1[k], v2 = a2[k], v3 = a3[k];
      T* c = C + k * ldc;
      for (std::size_t j = 0; j < N; ++j) c[j] += v0 * b0[j] + v1 * b1[j] + v2 * b2[j] + v3 * b3[j];
    }
  }
  for (; r < M; ++r) {
    const T* a = A + r * lda;
    const T* b = B + r * ldb;
    for (std::size_t k = 0; k < K; ++k) {
      const T v = a[k];
      T* c = C + k * ldc;
      for (std::size_t j = 0; j < N; ++j) c[j] += v * b[j];
    }
  }
}

struct ConvGeometry {
  std::size_t n, h, w, cin, kh, kw, oh, ow, pad_top, pad_left;
};

ConvGeometry conv_geometry(const Shape& x, std::size_t kh, std::size_t kw, Padding p) {
  const auto gh = axis_geometry(x[1], kh, p);
  const auto gw = axis_geometry(x[2], kw, p);
  return {x[0], x[1], x[2], x[3], kh, kw, gh.out, gw.out, gh.pad_before, gw.pad_before};
}

// Patch matrix of one image: [oh*ow, kh*kw*cin], zero outside the input.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const std::size_t K = g.kh * g.kw * g.cin;
  for (std::size_t oh = 0; oh < g.oh; ++oh) {
    for (std::size_t ow = 0; ow < g.ow; ++ow) {
      T* row = col + (oh * g.ow + ow) * K;
      for (std::size_t a = 0; a < g.kh; ++a) {
        const auto ih = static_cast<std::ptrdiff_t>(oh + a) - static_cast<std::ptrdiff_t>(g.pad_top);
        for (std::size_t b = 0; b < g.kw; ++b) {
          const auto iw = static_cast<std::ptrdiff_t>(ow + b) - static_cast<std::ptrdiff_t>(g.pad_left);
          T* dst = row + (a * g.kw + b) * g.cin;
          if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(g.h) || iw >= static_cast<std::ptrdiff_t>(g.w)) {
            std::fill(dst, dst + g.cin, T(0));
          } else {
            const T* src = x + (static_cast<std::size_t>(ih) * g.w + static_cast<std::size_t>(iw)) * g.cin;
            std::copy(src, src + g.cin, dst);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* dx) {
  const std::size_t K = g.kh * g.kw * g.cin;
  for (std::size_t oh = 0; oh < g.oh; ++oh) {
    for (std::size_t ow = 0; ow < g.ow; ++ow) {
      const T* row = col + (oh * g.ow + ow) * K;
      for (std::size_t a = 0; a < g.kh; ++a) {
        const auto ih = static_cast<std::ptrdiff_t>(oh + a) - static_cast<std::ptrdiff_t>(g.pad_top);
        if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) continue;
        for (std::size_t b = 0; b < g.kw; ++b) {
          const auto iw = static_cast<std::ptrdiff_t>(ow + b) - static_cast<std::ptrdiff_t>(g.pad_left);
          if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w)) continue;
          const T* src = row + (a * g.kw + b) * g.cin;
          T* dst = dx + (static_cast<std::size_t>(ih) * g.w + static_cast<std::size_t>(iw)) * g.cin;
          for (std::size_t c = 0; c < g.cin; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

void check_conv_shapes(const std::string& op, const Shape& x, const Shape& w, const Shape& b) {
  require_rank(op, "input", x, 4);
  require_rank(op, "kernel", w, 4);
  require_rank(op, "bias", b, 1);
  require_dim(op, "kernel input channels (dim 2)", w[2], x[3]);
  require_dim(op, "bias length", b[0], w[3]);
}

void check_depthwise_shapes(const std::string& op, const Shape& x, const Shape& w) {
  require_rank(op, "input", x, 4);
  require_rank(op, "kernel", w, 3);
  require_dim(op, "kernel channels (dim 2)", w[2], x[3]);
}

}  // namespace

AxisGeometry axis_geometry(std::size_t in, std::size_t k, Padding p) {
  if (k == 0) throw std::invalid_argument("kernel extent must be >= 1");
  if (p == Padding::Same) return {in, (k - 1) / 2};
  if (k > in)
    throw std::invalid_argument("valid padding: kernel extent " + std::to_string(k) + " exceeds input extent " +
                                std::to_string(in));
  return {in - k + 1, 0};
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, Padding p) {
  check_conv_shapes("conv2d", x.shape(), w.shape(), b.shape());
  const auto g = conv_geometry(x.shape(), w.dim(0), w.dim(1), p);
  const std::size_t cout = w.dim(3);
  const std::size_t K = g.kh * g.kw * g.cin;
  const std::size_t P = g.oh * g.ow;
  Tensor<T> y({g.n, g.oh, g.ow, cout});
  std::vector<T> col(P * K);
  for (std::size_t n = 0; n < g.n; ++n) {
    im2col(x.ptr() + n * g.h * g.w * g.cin, g, col.data());
    T* out = y.ptr() + n * P * cout;
    for (std::size_t r = 0; r < P; ++r) std::copy(b.ptr(), b.ptr() + cout, out + r * cout);
    gemm_nn(P, cout, K, col.data(), K, w.ptr(), cout, out, cout);
  }
  return y;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, Padding p) {
  const auto g = conv_geometry(x.shape(), w.dim(0), w.dim(1), p);
  const std::size_t cout = w.dim(3);
  require_rank("conv2d_backward", "output gradient", dy.shape(), 4);
  require_dim("conv2d_backward", "output gradient height", dy.dim(1), g.oh);
  require_dim("conv2d_backward", "output gradient width", dy.dim(2), g.ow);
  require_dim("conv2d_backward", "output gradient channels", dy.dim(3), cout);
  const std::size_t K = g.kh * g.kw * g.cin;
  const std::size_t P = g.oh * g.ow;

  ConvGrads<T> grads{Tensor<T>(x.shape()), Tensor<T>(w.shape()), Tensor<T>({cout})};
  // w^T as [cout, K] so the input gradient is another row-major product.
  std::vector<T> wt(cout * K);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t c = 0; c < cout; ++c) wt[c * K + k] = w[k * cout + c];

  std::vector<T> col(P * K), dcol(P * K);
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* dyn = dy.ptr() + n * P * cout;
    im2col(x.ptr() + n * g.h * g.w * g.cin, g, col.data());
    gemm_tn(P, cout, K, col.data(), K, dyn, cout, grads.dw.ptr(), cout);
    for (std::size_t r = 0; r < P; ++r)
      for (std::size_t c = 0; c < cout; ++c) grads.db[c] += dyn[r * cout + c];
    std::fill(dcol.begin(), dcol.end(), T(0));
    gemm_nn(P, K, cout, dyn, cout, wt.data(), K, dcol.data(), K);
    col2im_add(dcol.data(), g, grads.dx.ptr() + n * g.h * g.w * g.cin);
  }
  return grads;
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> depthwise_conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, Padding p) {
  check_depthwise_shapes("depthwise_conv2d", x.shape(), w.shape());
  require_rank("depthwise_conv2d", "bias", b.shape(), 1);
  require_dim("depthwise_conv2d", "bias length", b.dim(0), x.dim(3));
  const auto g = conv_geometry(x.shape(), w.dim(0), w.dim(1), p);
  const std::size_t C = g.cin;
  Tensor<T> y({g.n, g.oh, g.ow, C});
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t oh = 0; oh < g.oh; ++oh) {
      for (std::size_t ow = 0; ow < g.ow; ++ow) {
        T* out = &y.at(n, oh, ow, 0);
        std::copy(b.ptr(), b.ptr() + C, out);
        for (std::size_t a = 0; a < g.kh; ++a) {
          const auto ih = static_cast<std::ptrdiff_t>(oh + a) - static_cast<std::ptrdiff_t>(g.pad_top);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t bb = 0; bb < g.kw; ++bb) {
            const auto iw = static_cast<std::ptrdiff_t>(ow + bb) - static_cast<std::ptrdiff_t>(g.pad_left);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w)) continue;
            const T* in = &x.at(n, static_cast<std::size_t>(ih), static_cast<std::size_t>(iw), 0);
            const T* k = w.ptr() + (a * g.kw + bb) * C;
            for (std::size_t c = 0; c < C; ++c) out[c] += in[c] * k[c];
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
ConvGrads<T> depthwise_conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, Padding p) {
  check_depthwise_shapes("depthwise_conv2d_backward", x.shape(), w.shape());
  const auto g = conv_geometry(x.shape(), w.dim(0), w.dim(1), p);
  const std::size_t C = g.cin;
  require_rank("depthwise_conv2d_backward", "output gradient", dy.shape(), 4);
  require_dim("depthwise_conv2d_backward", "output gradient height", dy.dim(1), g.oh);
  require_dim("depthwise_conv2d_backward", "output gradient width", dy.dim(2), g.ow);
  ConvGrads<T> grads{Tensor<T>(x.shape()), Tensor<T>(w.shape()), Tensor<T>({C})};
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t oh = 0; oh < g.oh; ++oh) {
      for (std::size_t ow = 0; ow < g.ow; ++ow) {
        const T* d = &dy.at(n, oh, ow, 0);
        for (std::size_t c = 0; c < C; ++c) grads.db[c] += d[c];
        for (std::size_t a = 0; a < g.kh; ++a) {
          const auto ih = static_cast<std::ptrdiff_t>(oh + a) - static_cast<std::ptrdiff_t>(g.pad_top);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t bb = 0; bb < g.kw; ++bb) {
            const auto iw = static_cast<std::ptrdiff_t>(ow + bb) - static_cast<std::ptrdiff_t>(g.pad_left);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w)) continue;
            const std::size_t off = (a * g.kw + bb) * C;
            const T* in = &x.at(n, static_cast<std::size_t>(ih), static_cast<std::size_t>(iw), 0);
            T* din = &grads.dx.at(n, static_cast<std::size_t>(ih), static_cast<std::size_t>(iw), 0);
            T* dk = grads.dw.ptr() + off;
            const T* k = w.ptr() + off;
            for (std::size_t c = 0; c < C; ++c) {
              dk[c] += in[c] * d[c];
              din[c] += k[c] * d[c];
            }
          }
        }
      }
    }
  }
  return grads;
}

template <typename T>
Tensor<T> separable_conv2d_forward(const Tensor<T>& x, const Tensor<T>& depthwise_w, const Tensor<T>& pointwise_w,
                                   const Tensor<T>& b, Padding p) {
  check_depthwise_shapes("separable_conv2d", x.shape(), depthwise_w.shape());
  require_rank("separable_conv2d", "pointwise kernel", pointwise_w.shape(), 4);
  if (pointwise_w.dim(0) != 1 || pointwise_w.dim(1) != 1)
    shape_error("separable_conv2d", "pointwise kernel must be 1x1, got " + shape_string(pointwise_w.shape()));
  const Tensor<T> zero_bias({x.dim(3)});
  const auto mid = depthwise_conv2d_forward(x, depthwise_w, zero_bias, p);
  return conv2d_forward(mid, pointwise_w, b, Padding::Valid);
}

// ---------------------------------------------------------------------------

template <typename T>
MaxPoolResult<T> maxpool2d(const Tensor<T>& x) {
  require_rank("maxpool2d", "input", x.shape(), 4);
  if (x.dim(1) < 2 || x.dim(2) < 2)
    shape_error("maxpool2d", "spatial extent " + shape_string(x.shape()) + " is smaller than the 2x2 window");
  const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const std::size_t OH = H / 2, OW = W / 2;
  MaxPoolResult<T> r{Tensor<T>({N, OH, OW, C}), std::vector<std::size_t>(N * OH * OW * C)};
  std::size_t o = 0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t i = 0; i < OH; ++i)
      for (std::size_t j = 0; j < OW; ++j)
        for (std::size_t c = 0; c < C; ++c, ++o) {
          std::size_t best = ((n * H + 2 * i) * W + 2 * j) * C + c;
          T best_v = x[best];
          for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t b = 0; b < 2; ++b) {
              const std::size_t idx = ((n * H + 2 * i + a) * W + 2 * j + b) * C + c;
              if (x[idx] > best_v) {
                best_v = x[idx];
                best = idx;
              }
            }
          r.y[o] = best_v;
          r.argmax[o] = best;
        }
  return r;
}

template <typename T>
Tensor<T> maxpool2d_backward(const Tensor<T>& dy, const std::vector<std::size_t>& argmax, const Shape& x_shape) {
  if (dy.size() != argmax.size()) shape_error("maxpool2d_backward", "gradient does not match recorded indices");
  Tensor<T> dx(x_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += dy[i];
  return dx;
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                            Tensor<T>& running_mean, Tensor<T>& running_var, BatchNormMode mode, double momentum,
                            double eps, BatchNormCache<T>* cache) {
  if (x.rank() < 2) shape_error("batchnorm", "input must have rank >= 2");
  const std::size_t C = x.shape().back();
  for (const Tensor<T>* t : {&gamma, &beta, static_cast<const Tensor<T>*>(&running_mean), static_cast<const Tensor<T>*>(&running_var)})
    if (t->rank() != 1 || t->dim(0) != C)
      shape_error("batchnorm", "parameter length " + shape_string(t->shape()) + " does not match channels " +
                                   std::to_string(C));
  const std::size_t M = x.size() / C;
  std::vector<T> mean(C), inv_std(C);

  if (mode == BatchNormMode::Train) {
    if (M < 2) shape_error("batchnorm", "train mode needs at least 2 elements per channel");
    std::vector<double> sum(C, 0.0), sq(C, 0.0);
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t c = 0; c < C; ++c) sum[c] += static_cast<double>(x[m * C + c]);
    for (std::size_t c = 0; c < C; ++c) sum[c] /= static_cast<double>(M);
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t c = 0; c < C; ++c) {
        const double d = static_cast<double>(x[m * C + c]) - sum[c];
        sq[c] += d * d;
      }
    for (std::size_t c = 0; c < C; ++c) {
      const double var = sq[c] / static_cast<double>(M);
      mean[c] = static_cast<T>(sum[c]);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + eps));
      running_mean[c] = static_cast<T>(momentum * running_mean[c] + (1.0 - momentum) * sum[c]);
      running_var[c] = static_cast<T>(momentum * running_var[c] + (1.0 - momentum) * var);
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = running_mean[c];
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var[c]) + eps));
    }
  }

  Tensor<T> y(x.shape());
  Tensor<T> xhat;
  if (cache) xhat = Tensor<T>(x.shape());
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t c = 0; c < C; ++c) {
      const T h = (x[m * C + c] - mean[c]) * inv_std[c];
      if (cache) xhat[m * C + c] = h;
      y[m * C + c] = gamma[c] * h + beta[c];
    }
  if (cache) {
    cache->mode = mode;
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& dy, const Tensor<T>& gamma, const BatchNormCache<T>& cache) {
  if (dy.shape() != cache.xhat.shape()) shape_error("batchnorm_backward", "gradient shape does not match cache");
  const std::size_t C = dy.shape().back();
  const std::size_t M = dy.size() / C;
  BatchNormGrads<T> g{Tensor<T>(dy.shape()), Tensor<T>({C}), Tensor<T>({C})};
  std::vector<double> sum_d(C, 0.0), sum_dx(C, 0.0);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t c = 0; c < C; ++c) {
      const double d = dy[m * C + c];
      const double h = cache.xhat[m * C + c];
      sum_d[c] += d;
      sum_dx[c] += d * h;
    }
  for (std::size_t c = 0; c < C; ++c) {
    g.dbeta[c] = static_cast<T>(sum_d[c]);
    g.dgamma[c] = static_cast<T>(sum_dx[c]);
  }
  if (cache.mode == BatchNormMode::Infer) {
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t c = 0; c < C; ++c) g.dx[m * C + c] = dy[m * C + c] * gamma[c] * cache.inv_std[c];
    return g;
  }
  const double inv_m = 1.0 / static_cast<double>(M);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t c = 0; c < C; ++c) {
      // dx = gamma*inv_std/M * (M*dy - sum(dy) - xhat*sum(dy*xhat))
      const double d = dy[m * C + c];
      const double h = cache.xhat[m * C + c];
      g.dx[m * C + c] = static_cast<T>(static_cast<double>(gamma[c]) * cache.inv_std[c] *
                                       (d - inv_m * sum_d[c] - h * inv_m * sum_dx[c]));
    }
  return g;
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  if (x.shape() != dy.shape()) shape_error("relu_backward", "gradient shape does not match input");
  Tensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
  return dx;
}

template <typename T>
Tensor<T> flatten(const Tensor<T>& x) {
  if (x.rank() < 1) shape_error("flatten", "input must have rank >= 1");
  Tensor<T> y = x;
  y.reshape({x.dim(0), x.dim(0) ? x.size() / x.dim(0) : 0});
  return y;
}

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  require_rank("dense", "input", x.shape(), 2);
  require_rank("dense", "weights", w.shape(), 2);
  require_rank("dense", "bias", b.shape(), 1);
  require_dim("dense", "weight rows (dim 0)", w.dim(0), x.dim(1));
  require_dim("dense", "bias length", b.dim(0), w.dim(1));
  const std::size_t N = x.dim(0), in = x.dim(1), out = w.dim(1);
  Tensor<T> y({N, out});
  for (std::size_t n = 0; n < N; ++n) std::copy(b.ptr(), b.ptr() + out, y.ptr() + n * out);
  gemm_nn(N, out, in, x.ptr(), in, w.ptr(), out, y.ptr(), out);
  return y;
}

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy) {
  const std::size_t N = x.dim(0), in = x.dim(1), out = w.dim(1);
  require_rank("dense_backward", "output gradient", dy.shape(), 2);
  require_dim("dense_backward", "output gradient rows", dy.dim(0), N);
  require_dim("dense_backward", "output gradient columns", dy.dim(1), out);
  DenseGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(w.shape()), Tensor<T>({out})};
  gemm_tn(N, out, in, x.ptr(), in, dy.ptr(), out, g.dw.ptr(), out);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < out; ++o) g.db[o] += dy[n * out + o];
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t i = 0; i < in; ++i) {
      T s = 0;
      const T* wr = w.ptr() + i * out;
      const T* d = dy.ptr() + n * out;
      for (std::size_t o = 0; o < out; ++o) s += wr[o] * d[o];
      g.dx[n * in + i] = s;
    }
  return g;
}

template <typename T>
Tensor<T> softmax_forward(const Tensor<T>& x) {
  require_rank("softmax", "input", x.shape(), 2);
  const std::size_t N = x.dim(0), K = x.dim(1);
  Tensor<T> y(x.shape());
  for (std::size_t n = 0; n < N; ++n) {
    const T* row = x.ptr() + n * K;
    T* out = y.ptr() + n * K;
    const T mx = *std::max_element(row, row + K);
    T sum = 0;
    for (std::size_t k = 0; k < K; ++k) {
      out[k] = std::exp(row[k] - mx);
      sum += out[k];
    }
    for (std::size_t k = 0; k < K; ++k) out[k] /= sum;
  }
  return y;
}

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  if (y.shape() != dy.shape()) shape_error("softmax_backward", "gradient shape does not match output");
  const std::size_t N = y.dim(0), K = y.dim(1);
  Tensor<T> dx(y.shape());
  for (std::size_t n = 0; n < N; ++n) {
    T dot = 0;
    for (std::size_t k = 0; k < K; ++k) dot += y[n * K + k] * dy[n * K + k];
    for (std::size_t k = 0; k < K; ++k) dx[n * K + k] = y[n * K + k] * (dy[n * K + k] - dot);
  }
  return dx;
}

template <typename T>
double cross_entropy_loss(const Tensor<T>& probs, const Tensor<T>& onehot) {
  require_rank("cross_entropy", "probabilities", probs.shape(), 2);
  if (probs.shape() != onehot.shape())
    shape_error("cross_entropy", "labels " + shape_string(onehot.shape()) + " do not match probabilities " +
                                     shape_string(probs.shape()));
  const std::size_t N = probs.dim(0), K = probs.dim(1);
  if (N == 0) shape_error("cross_entropy", "empty batch");
  constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
  double total = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    std::size_t hot = K, ones = 0;
    double row_sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const T v = onehot[n * K + k];
      row_sum += static_cast<double>(probs[n * K + k]);
      if (v == T(1)) {
        hot = k;
        ++ones;
      } else if (v != T(0)) {
        throw std::invalid_argument("cross_entropy: label row " + std::to_string(n) + " is not one-hot");
      }
    }
    if (ones != 1) throw std::invalid_argument("cross_entropy: label row " + std::to_string(n) + " is not one-hot");
    if (std::abs(row_sum - 1.0) > 1e-5)
      throw std::invalid_argument("cross_entropy: probability row " + std::to_string(n) + " does not sum to 1");
    total += std::log(std::clamp(static_cast<double>(probs[n * K + hot]), lo, hi));
  }
  return -total / static_cast<double>(N);
}

#define B2D_INSTANTIATE_OPS(T)                                                                                    \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Padding);              \
  template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Padding);          \
  template Tensor<T> depthwise_conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Padding);    \
  template ConvGrads<T> depthwise_conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Padding); \
  template Tensor<T> separable_conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,              \
                                              const Tensor<T>&, Padding);                                        \
  template MaxPoolResult<T> maxpool2d(const Tensor<T>&);                                                         \
  template Tensor<T> maxpool2d_backward(const Tensor<T>&, const std::vector<std::size_t>&, const Shape&);        \
  template Tensor<T> batchnorm_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&,         \
                                       Tensor<T>&, BatchNormMode, double, double, BatchNormCache<T>*);           \
  template BatchNormGrads<T> batchnorm_backward(const Tensor<T>&, const Tensor<T>&, const BatchNormCache<T>&);   \
  template Tensor<T> relu_forward(const Tensor<T>&);                                                             \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                                          \
  template Tensor<T> flatten(const Tensor<T>&);                                                                  \
  template Tensor<T> dense_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                        \
  template DenseGrads<T> dense_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> softmax_forward(const Tensor<T>&);                                                          \
  template Tensor<T> softmax_backward(const Tensor<T>&, const Tensor<T>&);                                       \
  template double cross_entropy_loss(const Tensor<T>&, const Tensor<T>&);

B2D_INSTANTIATE_OPS(float)
B2D_INSTANTIATE_OPS(double)

}  // namespace b2d::nn
