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

#include "declip/image.hpp"
#include "declip/nn/vgg.hpp"
#include "declip/tensor.hpp"

namespace declip {

/// Coefficients of the pixel / perceptual / adversarial terms. The defaults
/// sum to exactly one.
struct LossWeights {
  double alpha = 0.81;
  double beta = 0.095;
  double gamma = 0.095;

  void validate() const {
    if (alpha < 0 || beta < 0 || gamma < 0)
      throw std::invalid_argument("loss weights must be non-negative");
  }
};

// ---------------------------------------------------------------------------
// Pixel loss
// ---------------------------------------------------------------------------

/// Mean over all entries of (a - b)^2.
template <typename T>
double mse_loss(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mse_loss: shape mismatch");
  if (a.size() == 0) throw std::invalid_argument("mse_loss: empty tensors");
  double s = 0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    const double d = static_cast<double>(a.v[i]) - static_cast<double>(b.v[i]);
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

inline double mse_loss(const ImageTensor& a, const ImageTensor& b) {
  if (!a.same_dims(b)) throw std::invalid_argument("mse_loss: dimension mismatch");
  double s = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    s += d * d;
  }
  return s / static_cast<double>(a.data.size());
}

/// d(mse)/da = 2 (a - b) / N.
template <typename T>
Tensor<T> mse_loss_grad(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mse_loss_grad: shape mismatch");
  Tensor<T> g(a.n, a.c, a.h, a.w);
  const T scale = static_cast<T>(2.0 / static_cast<double>(a.size()));
  for (size_t i = 0; i < a.v.size(); ++i) g.v[i] = scale * (a.v[i] - b.v[i]);
  return g;
}

// ---------------------------------------------------------------------------
// Adversarial pieces
// ---------------------------------------------------------------------------

/// max(x, 0) - x + log(1 + exp(-|x|)): equals log(1 + exp(-x)) = -log σ(x),
/// computed without overflow for any finite x.
inline double stable_neg_log_sigmoid(double x) {
  if (!std::isfinite(x)) throw std::invalid_argument("stable_neg_log_sigmoid: non-finite input");
  return std::max(x, 0.0) - x + std::log1p(std::exp(-std::fabs(x)));
}

/// Overflow-free σ(x).
inline double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Mean of -log σ(X) over the batch of fake logits: minimized when the
/// critic scores generated images as real.
template <typename T>
double adversarial_generator_loss(const std::vector<T>& fake_logits) {
  if (fake_logits.empty()) throw std::invalid_argument("adversarial_generator_loss: empty batch");
  double s = 0;
  for (T x : fake_logits) s += stable_neg_log_sigmoid(static_cast<double>(x));
  return s / static_cast<double>(fake_logits.size());
}

/// dL/dx_i = (σ(x_i) - 1) / B.
template <typename T>
std::vector<T> adversarial_generator_loss_grad(const std::vector<T>& fake_logits) {
  if (fake_logits.empty()) throw std::invalid_argument("adversarial_generator_loss: empty batch");
  std::vector<T> g(fake_logits.size());
  const double inv_b = 1.0 / static_cast<double>(fake_logits.size());
  for (size_t i = 0; i < g.size(); ++i)
    g[i] = static_cast<T>((stable_sigmoid(static_cast<double>(fake_logits[i])) - 1.0) * inv_b);
  return g;
}

/// Binary cross-entropy with targets real=1, fake=0, in stable form:
/// mean -log σ(real) + mean -log σ(-fake).
template <typename T>
double discriminator_loss(const std::vector<T>& real_logits, const std::vector<T>& fake_logits) {
  if (real_logits.empty() || fake_logits.empty())
    throw std::invalid_argument("discriminator_loss: empty batch");
  double s_real = 0, s_fake = 0;
  for (T x : real_logits) s_real += stable_neg_log_sigmoid(static_cast<double>(x));
  for (T x : fake_logits) s_fake += stable_neg_log_sigmoid(-static_cast<double>(x));
  return s_real / static_cast<double>(real_logits.size()) +
         s_fake / static_cast<double>(fake_logits.size());
}

template <typename T>
std::vector<T> discriminator_loss_grad_real(const std::vector<T>& real_logits) {
  if (real_logits.empty()) throw std::invalid_argument("discriminator_loss: empty batch");
  std::vector<T> g(real_logits.size());
  const double inv_b = 1.0 / static_cast<double>(real_logits.size());
  for (size_t i = 0; i < g.size(); ++i)
    g[i] = static_cast<T>((stable_sigmoid(static_cast<double>(real_logits[i])) - 1.0) * inv_b);
  return g;
}

template <typename T>
std::vector<T> discriminator_loss_grad_fake(const std::vector<T>& fake_logits) {
  if (fake_logits.empty()) throw std::invalid_argument("discriminator_loss: empty batch");
  std::vector<T> g(fake_logits.size());
  const double inv_b = 1.0 / static_cast<double>(fake_logits.size());
  for (size_t i = 0; i < g.size(); ++i)
    g[i] = static_cast<T>(stable_sigmoid(static_cast<double>(fake_logits[i])) * inv_b);
  return g;
}

// ---------------------------------------------------------------------------
// Perceptual loss
// ---------------------------------------------------------------------------

/**
 * Sum over selected layers j of ||C_j(out) - C_j(target)||^2 / (W_j H_j F_j),
 * averaged over the batch.
 */
template <typename T>
double perceptual_loss(const nn::FeatureExtractor<T>& f, const Tensor<T>& out,
                       const Tensor<T>& target) {
  if (!out.same_shape(target)) throw std::invalid_argument("perceptual_loss: shape mismatch");
  const auto feats_out = f.features(out);
  const auto feats_tgt = f.features(target);
  double loss = 0;
  for (size_t j = 0; j < feats_out.size(); ++j) {
    const double norm = nn::FeatureExtractor<T>::map_normalizer(feats_out[j]);
    double s = 0;
    for (size_t i = 0; i < feats_out[j].v.size(); ++i) {
      const double d =
          static_cast<double>(feats_out[j].v[i]) - static_cast<double>(feats_tgt[j].v[i]);
      s += d * d;
    }
    loss += norm * s / out.n;
  }
  return loss;
}

inline double perceptual_loss(const nn::FeatureExtractor<float>& f, const ImageTensor& out,
                              const ImageTensor& target) {
  if (!out.same_dims(target)) throw std::invalid_argument("perceptual_loss: dimension mismatch");
  return perceptual_loss(f, image_to_tensor<float>(out), image_to_tensor<float>(target));
}

/**
 * Perceptual loss plus its gradient with respect to `out`. The target branch
 * is constant, so only the `out` branch runs with caches.
 */
template <typename T>
double perceptual_loss_with_grad(nn::FeatureExtractor<T>& f, const Tensor<T>& out,
                                 const Tensor<T>& target, Tensor<T>& d_out) {
  if (!out.same_shape(target)) throw std::invalid_argument("perceptual_loss: shape mismatch");
  const auto feats_tgt = f.features(target);
  const auto feats_out = f.features_train(out);
  double loss = 0;
  std::vector<Tensor<T>> d_feats;
  d_feats.reserve(feats_out.size());
  for (size_t j = 0; j < feats_out.size(); ++j) {
    const double norm = nn::FeatureExtractor<T>::map_normalizer(feats_out[j]) / out.n;
    double s = 0;
    Tensor<T> d(feats_out[j].n, feats_out[j].c, feats_out[j].h, feats_out[j].w);
    for (size_t i = 0; i < feats_out[j].v.size(); ++i) {
      const double diff =
          static_cast<double>(feats_out[j].v[i]) - static_cast<double>(feats_tgt[j].v[i]);
      s += diff * diff;
      d.v[i] = static_cast<T>(2.0 * norm * diff);
    }
    loss += norm * s;
    d_feats.push_back(std::move(d));
  }
  d_out = f.backward_to_input(d_feats);
  return loss;
}

// ---------------------------------------------------------------------------
// Composition
// ---------------------------------------------------------------------------

/// alpha * mse + beta * per + gamma * adv.
inline double composite_loss(const LossWeights& w, double mse, double per, double adv) {
  if (!std::isfinite(mse) || !std::isfinite(per) || !std::isfinite(adv))
    throw std::invalid_argument("composite_loss: non-finite component");
  return w.alpha * mse + w.beta * per + w.gamma * adv;
}

}  // namespace declip
