/*
Copyright 2026 The Declip Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "declip/nn/blas.hpp"
#include "declip/rng.hpp"
#include "declip/tensor.hpp"

namespace declip::nn {

/// Flat view of one trainable tensor; optimizers iterate these.
template <typename T>
struct ParamRef {
  std::vector<T>* value;
  std::vector<T>* grad;
};

inline int conv_out_extent(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// ---------------------------------------------------------------------------
// im2col / col2im (per sample)
// ---------------------------------------------------------------------------

/// Unfolds one CxHxW sample into a [C*k*k, Ho*Wo] matrix (row-major).
template <typename T>
void im2col(const T* x, int c, int h, int w, int k, int stride, int pad, T* cols) {
  const int ho = conv_out_extent(h, k, stride, pad);
  const int wo = conv_out_extent(w, k, stride, pad);
  const int span = ho * wo;
  for (int ic = 0; ic < c; ++ic) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + (static_cast<size_t>(ic) * k * k + ky * k + kx) * span;
        const T* src = x + static_cast<size_t>(ic) * h * w;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) {
            for (int ox = 0; ox < wo; ++ox) row[oy * wo + ox] = T(0);
            continue;
          }
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            row[oy * wo + ox] = (ix >= 0 && ix < w) ? src[iy * w + ix] : T(0);
          }
        }
      }
    }
  }
}

/// Scatter-add inverse of im2col: folds a [C*k*k, Ho*Wo] matrix back onto a
/// CxHxW sample. The destination must be zeroed by the caller.
template <typename T>
void col2im(const T* cols, int c, int h, int w, int k, int stride, int pad, T* x) {
  const int ho = conv_out_extent(h, k, stride, pad);
  const int wo = conv_out_extent(w, k, stride, pad);
  const int span = ho * wo;
  for (int ic = 0; ic < c; ++ic) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + (static_cast<size_t>(ic) * k * k + ky * k + kx) * span;
        T* dst = x + static_cast<size_t>(ic) * h * w;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[iy * w + ix] += row[oy * wo + ox];
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Convolution (plain and transposed)
// ---------------------------------------------------------------------------

/**
 * 2-D convolution / transposed convolution with square kernels.
 *
 * Weight layout follows the usual convention: [out_ch, in_ch, k, k] for a
 * plain convolution and [in_ch, out_ch, k, k] for a transposed one. The
 * transposed path is implemented as the adjoint of the matching plain
 * convolution, sharing im2col/col2im and GEMM.
 */
template <typename T>
struct Conv2d {
  int in_ch = 0, out_ch = 0, k = 3, stride = 1, pad = 1, out_pad = 0;
  bool transposed = false;

  std::vector<T> w, b;
  std::vector<T> dw, db;

  Tensor<T> x_cache;  // kept only for training-mode forwards

  Conv2d() = default;
  Conv2d(int in_ch_, int out_ch_, int k_, int stride_, bool transposed_)
      : in_ch(in_ch_),
        out_ch(out_ch_),
        k(k_),
        stride(stride_),
        pad(k_ / 2),
        out_pad(transposed_ && stride_ > 1 ? stride_ - 1 : 0),
        transposed(transposed_),
        w(static_cast<size_t>(in_ch_) * out_ch_ * k_ * k_, T(0)),
        b(out_ch_, T(0)),
        dw(w.size(), T(0)),
        db(out_ch_, T(0)) {}

  size_t param_count() const { return w.size() + b.size(); }

  /// He (fan-in) normal initialization; biases stay zero.
  void init_he(Rng& rng) {
    const double std_dev = std::sqrt(2.0 / (static_cast<double>(in_ch) * k * k));
    for (auto& wi : w) wi = static_cast<T>(rng.normal() * std_dev);
  }

  void zero_grad() {
    std::fill(dw.begin(), dw.end(), T(0));
    std::fill(db.begin(), db.end(), T(0));
  }

  std::pair<int, int> out_dims(int h, int w_in) const {
    if (!transposed)
      return {conv_out_extent(h, k, stride, pad), conv_out_extent(w_in, k, stride, pad)};
    return {(h - 1) * stride - 2 * pad + k + out_pad, (w_in - 1) * stride - 2 * pad + k + out_pad};
  }

  Tensor<T> forward(const Tensor<T>& x, bool keep_cache) {
    if (keep_cache) x_cache = x;
    return eval(x);
  }

  /// Cache-free forward; usable from const contexts (inference).
  Tensor<T> eval(const Tensor<T>& x) const {
    if (x.c != in_ch) throw std::invalid_argument("conv: channel mismatch");
    const auto [ho, wo] = out_dims(x.h, x.w);
    if (ho <= 0 || wo <= 0) throw std::invalid_argument("conv: input too small for kernel");
    Tensor<T> y(x.n, out_ch, ho, wo);

    if (!transposed) {
      const int kk = in_ch * k * k;
      std::vector<T> cols(static_cast<size_t>(kk) * ho * wo);
      for (int n = 0; n < x.n; ++n) {
        im2col(x.plane(n, 0), in_ch, x.h, x.w, k, stride, pad, cols.data());
        // y_n [out_ch, ho*wo] = w [out_ch, kk] * cols [kk, ho*wo]
        gemm(false, false, out_ch, ho * wo, kk, T(1), w.data(), kk, cols.data(), ho * wo, T(0),
             y.plane(n, 0), ho * wo);
      }
    } else {
      // Adjoint of a plain conv mapping y-space -> x-space with weight
      // [in_ch, out_ch*k*k]: cols = w^T * x_n, then fold onto the output.
      const int kk = out_ch * k * k;
      std::vector<T> cols(static_cast<size_t>(kk) * x.h * x.w);
      for (int n = 0; n < x.n; ++n) {
        gemm(true, false, kk, x.h * x.w, in_ch, T(1), w.data(), kk, x.plane(n, 0), x.h * x.w,
             T(0), cols.data(), x.h * x.w);
        col2im(cols.data(), out_ch, ho, wo, k, stride, pad, y.plane(n, 0));
      }
    }

    for (int n = 0; n < y.n; ++n)
      for (int c = 0; c < out_ch; ++c) {
        T* plane = y.plane(n, c);
        const T bias = b[c];
        for (int i = 0; i < ho * wo; ++i) plane[i] += bias;
      }
    return y;
  }

  /**
   * Backward pass from the cached forward. Accumulates into dw/db when
   * `want_param_grads` and returns the input gradient when `want_input_grad`
   * (otherwise an empty tensor).
   */
  Tensor<T> backward(const Tensor<T>& dy, bool want_input_grad = true,
                     bool want_param_grads = true) {
    const Tensor<T>& x = x_cache;
    if (x.n != dy.n) throw std::logic_error("conv backward: no cached forward");

    if (want_param_grads)
      for (int n = 0; n < dy.n; ++n)
        for (int c = 0; c < out_ch; ++c) {
          const T* plane = dy.plane(n, c);
          T acc = T(0);
          for (int i = 0; i < dy.h * dy.w; ++i) acc += plane[i];
          db[c] += acc;
        }

    Tensor<T> dx;
    if (want_input_grad) dx = Tensor<T>(x.n, x.c, x.h, x.w);

    if (!transposed) {
      const int kk = in_ch * k * k;
      const int span = dy.h * dy.w;
      std::vector<T> cols(static_cast<size_t>(kk) * span);
      std::vector<T> dcols(cols.size());
      for (int n = 0; n < x.n; ++n) {
        if (want_param_grads) {
          im2col(x.plane(n, 0), in_ch, x.h, x.w, k, stride, pad, cols.data());
          // dw [out_ch, kk] += dy_n [out_ch, span] * cols^T [span, kk]
          gemm(false, true, out_ch, kk, span, T(1), dy.plane(n, 0), span, cols.data(), span, T(1),
               dw.data(), kk);
        }
        if (want_input_grad) {
          // dcols [kk, span] = w^T [kk, out_ch] * dy_n [out_ch, span]
          gemm(true, false, kk, span, out_ch, T(1), w.data(), kk, dy.plane(n, 0), span, T(0),
               dcols.data(), span);
          col2im(dcols.data(), in_ch, x.h, x.w, k, stride, pad, dx.plane(n, 0));
        }
      }
    } else {
      const int kk = out_ch * k * k;
      const int span = x.h * x.w;
      std::vector<T> cols(static_cast<size_t>(kk) * span);
      for (int n = 0; n < x.n; ++n) {
        // Both grads need im2col of dy at the conv geometry (dy lives in the
        // adjoint's input space).
        im2col(dy.plane(n, 0), out_ch, dy.h, dy.w, k, stride, pad, cols.data());
        if (want_param_grads) {
          // dw [in_ch, kk] += x_n [in_ch, span] * cols^T [span, kk]
          gemm(false, true, in_ch, kk, span, T(1), x.plane(n, 0), span, cols.data(), span, T(1),
               dw.data(), kk);
        }
        if (want_input_grad) {
          // dx_n [in_ch, span] = w [in_ch, kk] * cols [kk, span]
          gemm(false, false, in_ch, span, kk, T(1), w.data(), kk, cols.data(), span, T(0),
               dx.plane(n, 0), span);
        }
      }
    }
    return dx;
  }

  void drop_cache() { x_cache = Tensor<T>(); }

  std::vector<ParamRef<T>> params() {
    return {{&w, &dw}, {&b, &db}};
  }
};

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

template <typename T>
struct BatchNorm2d {
  int channels = 0;
  T eps = T(1e-5);
  T momentum = T(0.1);

  std::vector<T> gamma, beta, dgamma, dbeta;
  std::vector<T> running_mean, running_var;  // biased variance

  // training caches
  Tensor<T> xhat_cache;
  std::vector<T> invstd_cache;

  BatchNorm2d() = default;
  explicit BatchNorm2d(int c)
      : channels(c),
        gamma(c, T(1)),
        beta(c, T(0)),
        dgamma(c, T(0)),
        dbeta(c, T(0)),
        running_mean(c, T(0)),
        running_var(c, T(1)) {}

  size_t param_count() const { return gamma.size() + beta.size(); }

  void zero_grad() {
    std::fill(dgamma.begin(), dgamma.end(), T(0));
    std::fill(dbeta.begin(), dbeta.end(), T(0));
  }

  Tensor<T> forward_train(const Tensor<T>& x, bool update_running, bool keep_cache = true) {
    if (x.c != channels) throw std::invalid_argument("batchnorm: channel mismatch");
    const int m = x.n * x.h * x.w;
    if (m < 2) throw std::invalid_argument("batchnorm: needs more than one value per channel");
    Tensor<T> y(x.n, x.c, x.h, x.w);
    if (keep_cache) {
      xhat_cache = Tensor<T>(x.n, x.c, x.h, x.w);
      invstd_cache.assign(channels, T(0));
    }
    const int hw = x.h * x.w;
    for (int c = 0; c < channels; ++c) {
      double sum = 0, sq = 0;
      for (int n = 0; n < x.n; ++n) {
        const T* p = x.plane(n, c);
        for (int i = 0; i < hw; ++i) {
          sum += static_cast<double>(p[i]);
          sq += static_cast<double>(p[i]) * p[i];
        }
      }
      const double mean = sum / m;
      const double var = std::max(0.0, sq / m - mean * mean);
      const T invstd = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      if (keep_cache) invstd_cache[c] = invstd;
      if (update_running) {
        running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * static_cast<T>(mean);
        running_var[c] = (T(1) - momentum) * running_var[c] + momentum * static_cast<T>(var);
      }
      for (int n = 0; n < x.n; ++n) {
        const T* p = x.plane(n, c);
        T* q = y.plane(n, c);
        T* xh = keep_cache ? xhat_cache.plane(n, c) : nullptr;
        for (int i = 0; i < hw; ++i) {
          const T xhat = (p[i] - static_cast<T>(mean)) * invstd;
          if (xh) xh[i] = xhat;
          q[i] = gamma[c] * xhat + beta[c];
        }
      }
    }
    return y;
  }

  Tensor<T> eval(const Tensor<T>& x) const {
    if (x.c != channels) throw std::invalid_argument("batchnorm: channel mismatch");
    Tensor<T> y(x.n, x.c, x.h, x.w);
    const int hw = x.h * x.w;
    for (int c = 0; c < channels; ++c) {
      const T invstd = T(1) / std::sqrt(running_var[c] + eps);
      const T scale = gamma[c] * invstd;
      const T shift = beta[c] - running_mean[c] * scale;
      for (int n = 0; n < x.n; ++n) {
        const T* p = x.plane(n, c);
        T* q = y.plane(n, c);
        for (int i = 0; i < hw; ++i) q[i] = scale * p[i] + shift;
      }
    }
    return y;
  }

  /// Batch-statistics forward without touching caches or running stats.
  /// Matches forward_train arithmetic exactly; used for detached passes.
  Tensor<T> eval_batchstats(const Tensor<T>& x) const {
    if (x.c != channels) throw std::invalid_argument("batchnorm: channel mismatch");
    const int m = x.n * x.h * x.w;
    if (m < 2) throw std::invalid_argument("batchnorm: needs more than one value per channel");
    Tensor<T> y(x.n, x.c, x.h, x.w);
    const int hw = x.h * x.w;
    for (int c = 0; c < channels; ++c) {
      double sum = 0, sq = 0;
      for (int n = 0; n < x.n; ++n) {
        const T* p = x.plane(n, c);
        for (int i = 0; i < hw; ++i) {
          sum += static_cast<double>(p[i]);
          sq += static_cast<double>(p[i]) * p[i];
        }
      }
      const double mean = sum / m;
      const double var = std::max(0.0, sq / m - mean * mean);
      const T invstd = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      for (int n = 0; n < x.n; ++n) {
        const T* p = x.plane(n, c);
        T* q = y.plane(n, c);
        for (int i = 0; i < hw; ++i) q[i] = gamma[c] * ((p[i] - static_cast<T>(mean)) * invstd) + beta[c];
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const Tensor<T>& xhat = xhat_cache;
    if (xhat.n != dy.n) throw std::logic_error("batchnorm backward: no cached forward");
    const int m = dy.n * dy.h * dy.w;
    const int hw = dy.h * dy.w;
    Tensor<T> dx(dy.n, dy.c, dy.h, dy.w);
    for (int c = 0; c < channels; ++c) {
      double sum_dy = 0, sum_dy_xhat = 0;
      for (int n = 0; n < dy.n; ++n) {
        const T* pdy = dy.plane(n, c);
        const T* pxh = xhat.plane(n, c);
        for (int i = 0; i < hw; ++i) {
          sum_dy += static_cast<double>(pdy[i]);
          sum_dy_xhat += static_cast<double>(pdy[i]) * pxh[i];
        }
      }
      dbeta[c] += static_cast<T>(sum_dy);
      dgamma[c] += static_cast<T>(sum_dy_xhat);
      const T mean_dy = static_cast<T>(sum_dy / m);
      const T mean_dy_xhat = static_cast<T>(sum_dy_xhat / m);
      const T scale = gamma[c] * invstd_cache[c];
      for (int n = 0; n < dy.n; ++n) {
        const T* pdy = dy.plane(n, c);
        const T* pxh = xhat.plane(n, c);
        T* pdx = dx.plane(n, c);
        for (int i = 0; i < hw; ++i)
          pdx[i] = scale * (pdy[i] - mean_dy - pxh[i] * mean_dy_xhat);
      }
    }
    return dx;
  }

  void drop_cache() {
    xhat_cache = Tensor<T>();
    invstd_cache.clear();
  }

  std::vector<ParamRef<T>> params() {
    return {{&gamma, &dgamma}, {&beta, &dbeta}};
  }
};

// ---------------------------------------------------------------------------
// Activations and pooling
// ---------------------------------------------------------------------------

/// Exponential linear unit: identity for x > 0, exp(x) - 1 otherwise.
template <typename T>
struct Elu {
  Tensor<T> y_cache;

  Tensor<T> forward(const Tensor<T>& x, bool keep_cache) {
    Tensor<T> y = eval(x);
    if (keep_cache) y_cache = y;
    return y;
  }

  static Tensor<T> eval_static(const Tensor<T>& x) {
    Tensor<T> y(x.n, x.c, x.h, x.w);
    for (size_t i = 0; i < x.v.size(); ++i) {
      const T xi = x.v[i];
      y.v[i] = xi > T(0) ? xi : static_cast<T>(std::expm1(static_cast<double>(xi)));
    }
    return y;
  }
  Tensor<T> eval(const Tensor<T>& x) const { return eval_static(x); }

  Tensor<T> backward(const Tensor<T>& dy) {
    if (y_cache.v.size() != dy.v.size()) throw std::logic_error("elu backward: no cached forward");
    Tensor<T> dx(dy.n, dy.c, dy.h, dy.w);
    for (size_t i = 0; i < dy.v.size(); ++i) {
      const T yi = y_cache.v[i];
      dx.v[i] = dy.v[i] * (yi >= T(0) ? T(1) : yi + T(1));
    }
    return dx;
  }

  void drop_cache() { y_cache = Tensor<T>(); }
};

template <typename T>
struct Relu {
  Tensor<T> y_cache;

  Tensor<T> forward(const Tensor<T>& x, bool keep_cache) {
    Tensor<T> y(x.n, x.c, x.h, x.w);
    for (size_t i = 0; i < x.v.size(); ++i) y.v[i] = x.v[i] > T(0) ? x.v[i] : T(0);
    if (keep_cache) y_cache = y;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    if (y_cache.v.size() != dy.v.size()) throw std::logic_error("relu backward: no cached forward");
    Tensor<T> dx(dy.n, dy.c, dy.h, dy.w);
    for (size_t i = 0; i < dy.v.size(); ++i) dx.v[i] = y_cache.v[i] > T(0) ? dy.v[i] : T(0);
    return dx;
  }

  void drop_cache() { y_cache = Tensor<T>(); }
};

/// 2x2 max pooling, stride 2, floor semantics on odd extents.
template <typename T>
struct MaxPool2x2 {
  Tensor<int> argmax_cache;
  int in_h = 0, in_w = 0;

  Tensor<T> forward(const Tensor<T>& x, bool keep_cache) {
    const int ho = x.h / 2, wo = x.w / 2;
    if (ho < 1 || wo < 1) throw std::invalid_argument("maxpool: input too small");
    Tensor<T> y(x.n, x.c, ho, wo);
    if (keep_cache) {
      argmax_cache = Tensor<int>(x.n, x.c, ho, wo);
      in_h = x.h;
      in_w = x.w;
    }
    for (int n = 0; n < x.n; ++n)
      for (int c = 0; c < x.c; ++c) {
        const T* p = x.plane(n, c);
        T* q = y.plane(n, c);
        int* am = keep_cache ? argmax_cache.plane(n, c) : nullptr;
        for (int oy = 0; oy < ho; ++oy)
          for (int ox = 0; ox < wo; ++ox) {
            const int base = (oy * 2) * x.w + ox * 2;
            int best = base;
            if (p[base + 1] > p[best]) best = base + 1;
            if (p[base + x.w] > p[best]) best = base + x.w;
            if (p[base + x.w + 1] > p[best]) best = base + x.w + 1;
            q[oy * wo + ox] = p[best];
            if (am) am[oy * wo + ox] = best;
          }
      }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    if (argmax_cache.n != dy.n) throw std::logic_error("maxpool backward: no cached forward");
    Tensor<T> dx(dy.n, dy.c, in_h, in_w);
    for (int n = 0; n < dy.n; ++n)
      for (int c = 0; c < dy.c; ++c) {
        const T* pdy = dy.plane(n, c);
        const int* am = argmax_cache.plane(n, c);
        T* pdx = dx.plane(n, c);
        for (int i = 0; i < dy.h * dy.w; ++i) pdx[am[i]] += pdy[i];
      }
    return dx;
  }

  void drop_cache() { argmax_cache = Tensor<int>(); }
};

// ---------------------------------------------------------------------------
// Dense head pieces
// ---------------------------------------------------------------------------

/// Global average pool: NxCxHxW -> NxCx1x1.
template <typename T>
struct GlobalAvgPool {
  int in_h = 0, in_w = 0;

  static Tensor<T> eval_static(const Tensor<T>& x) {
    Tensor<T> y(x.n, x.c, 1, 1);
    const T inv = T(1) / static_cast<T>(x.h * x.w);
    for (int n = 0; n < x.n; ++n)
      for (int c = 0; c < x.c; ++c) {
        const T* p = x.plane(n, c);
        T acc = T(0);
        for (int i = 0; i < x.h * x.w; ++i) acc += p[i];
        y.at(n, c, 0, 0) = acc * inv;
      }
    return y;
  }

  Tensor<T> forward(const Tensor<T>& x, bool keep_cache) {
    if (keep_cache) {
      in_h = x.h;
      in_w = x.w;
    }
    return eval_static(x);
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.n, dy.c, in_h, in_w);
    const T inv = T(1) / static_cast<T>(in_h * in_w);
    for (int n = 0; n < dy.n; ++n)
      for (int c = 0; c < dy.c; ++c) {
        const T g = dy.at(n, c, 0, 0) * inv;
        T* p = dx.plane(n, c);
        for (int i = 0; i < in_h * in_w; ++i) p[i] = g;
      }
    return dx;
  }
};

/// Fully connected layer on NxCx1x1 tensors.
template <typename T>
struct Linear {
  int in_features = 0, out_features = 0;
  std::vector<T> w, b, dw, db;
  Tensor<T> x_cache;

  Linear() = default;
  Linear(int in_f, int out_f)
      : in_features(in_f),
        out_features(out_f),
        w(static_cast<size_t>(in_f) * out_f, T(0)),
        b(out_f, T(0)),
        dw(w.size(), T(0)),
        db(out_f, T(0)) {}

  size_t param_count() const { return w.size() + b.size(); }

  void init_he(Rng& rng) {
    const double std_dev = std::sqrt(2.0 / in_features);
    for (auto& wi : w) wi = static_cast<T>(rng.normal() * std_dev);
  }

  void zero_grad() {
    std::fill(dw.begin(), dw.end(), T(0));
    std::fill(db.begin(), db.end(), T(0));
  }

  Tensor<T> eval(const Tensor<T>& x) const {
    if (x.c != in_features || x.h != 1 || x.w != 1)
      throw std::invalid_argument("linear: expected Nx" + std::to_string(in_features) + "x1x1");
    Tensor<T> y(x.n, out_features, 1, 1);
    // y [N, out] = x [N, in] * w^T [in, out]
    gemm(false, true, x.n, out_features, in_features, T(1), x.v.data(), in_features, w.data(),
         in_features, T(0), y.v.data(), out_features);
    for (int n = 0; n < x.n; ++n)
      for (int o = 0; o < out_features; ++o) y.at(n, o, 0, 0) += b[o];
    return y;
  }

  Tensor<T> forward(const Tensor<T>& x, bool keep_cache) {
    if (keep_cache) x_cache = x;
    return eval(x);
  }

  Tensor<T> backward(const Tensor<T>& dy, bool want_input_grad = true,
                     bool want_param_grads = true) {
    const Tensor<T>& x = x_cache;
    if (x.n != dy.n) throw std::logic_error("linear backward: no cached forward");
    if (want_param_grads) {
      // dw [out, in] += dy^T [out, N] * x [N, in]
      gemm(true, false, out_features, in_features, x.n, T(1), dy.v.data(), out_features,
           x.v.data(), in_features, T(1), dw.data(), in_features);
      for (int n = 0; n < dy.n; ++n)
        for (int o = 0; o < out_features; ++o) db[o] += dy.at(n, o, 0, 0);
    }
    Tensor<T> dx;
    if (want_input_grad) {
      dx = Tensor<T>(x.n, in_features, 1, 1);
      // dx [N, in] = dy [N, out] * w [out, in]
      gemm(false, false, x.n, in_features, out_features, T(1), dy.v.data(), out_features,
           w.data(), in_features, T(0), dx.v.data(), in_features);
    }
    return dx;
  }

  void drop_cache() { x_cache = Tensor<T>(); }

  std::vector<ParamRef<T>> params() {
    return {{&w, &dw}, {&b, &db}};
  }
};

}  // namespace declip::nn
