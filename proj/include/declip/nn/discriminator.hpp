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

#include <sstream>
#include <string>
#include <vector>

#include "declip/nn/layers.hpp"
#include "declip/rng.hpp"
#include "declip/tensor.hpp"

namespace declip::nn {

/**
 * Strided-convolution critic: a stack of 3x3 convolutions with Elu and batch
 * norm (none on the first layer), closed by global average pooling and a
 * linear projection to one unbounded logit per image. No terminal
 * activation; the losses apply the stable sigmoid form themselves.
 */
struct DiscriminatorConfig {
  std::vector<int> channels{32, 64, 64, 128, 128, 256, 256, 512, 512};
  std::vector<int> strides{1, 2, 1, 2, 1, 2, 1, 2, 1};
  int input_size = 224;
  bool batchnorm = true;
  int in_channels = 3;

  void validate() const {
    if (channels.empty() || channels.size() != strides.size())
      throw std::invalid_argument("discriminator config: channels/strides size mismatch");
    for (int s : strides)
      if (s != 1 && s != 2) throw std::invalid_argument("discriminator config: strides must be 1 or 2");
    if (input_size < 1) throw std::invalid_argument("discriminator config: bad input size");
  }

  int layer_count() const { return static_cast<int>(channels.size()); }

  std::string descriptor() const {
    std::ostringstream os;
    os << "disc:v1:in=" << in_channels << ":size=" << input_size << ":bn=" << (batchnorm ? 1 : 0)
       << ":conv=";
    for (size_t i = 0; i < channels.size(); ++i)
      os << channels[i] << "s" << strides[i] << (i + 1 < channels.size() ? "," : "");
    return os.str();
  }
};

template <typename T>
class Discriminator {
 public:
  Discriminator() : Discriminator(DiscriminatorConfig{}) {}

  explicit Discriminator(const DiscriminatorConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    int prev = cfg_.in_channels;
    for (size_t i = 0; i < cfg_.channels.size(); ++i) {
      conv_.emplace_back(prev, cfg_.channels[i], 3, cfg_.strides[i], /*transposed=*/false);
      if (cfg_.batchnorm && i > 0) bn_.emplace_back(cfg_.channels[i]);
      prev = cfg_.channels[i];
    }
    act_.resize(conv_.size());
    proj_ = Linear<T>(prev, 1);
  }

  const DiscriminatorConfig& config() const { return cfg_; }

  void init(Rng& rng) {
    for (auto& c : conv_) c.init_he(rng);
    proj_.init_he(rng);
  }

  /// One logit per image. `update_running` only matters for training-mode
  /// forwards; a discriminator pass inside a generator update must not
  /// disturb the discriminator's running statistics.
  std::vector<T> forward(const Tensor<T>& x, bool train, bool update_running) {
    if (x.h != cfg_.input_size || x.w != cfg_.input_size)
      throw std::invalid_argument("discriminator: expected " + std::to_string(cfg_.input_size) +
                                  "x" + std::to_string(cfg_.input_size) + " input, got " +
                                  std::to_string(x.h) + "x" + std::to_string(x.w));
    Tensor<T> cur = x;
    for (size_t i = 0; i < conv_.size(); ++i) {
      cur = conv_[i].forward(cur, train);
      if (cfg_.batchnorm && i > 0) {
        auto& bn = bn_[i - 1];
        cur = train ? bn.forward_train(cur, update_running) : bn.eval(cur);
      }
      cur = act_[i].forward(cur, train);
    }
    cur = gap_.forward(cur, train);
    cur = proj_.forward(cur, train);
    std::vector<T> logits(cur.n);
    for (int n = 0; n < cur.n; ++n) logits[n] = cur.at(n, 0, 0, 0);
    return logits;
  }

  /// Batch-statistics logits with no state touched anywhere; produces the
  /// same values a training-mode forward would.
  std::vector<T> forward_detached(const Tensor<T>& x) const {
    if (x.h != cfg_.input_size || x.w != cfg_.input_size)
      throw std::invalid_argument("discriminator: expected " + std::to_string(cfg_.input_size) +
                                  "x" + std::to_string(cfg_.input_size) + " input, got " +
                                  std::to_string(x.h) + "x" + std::to_string(x.w));
    Tensor<T> cur = x;
    for (size_t i = 0; i < conv_.size(); ++i) {
      cur = conv_[i].eval(cur);
      if (cfg_.batchnorm && i > 0) cur = bn_[i - 1].eval_batchstats(cur);
      cur = Elu<T>::eval_static(cur);
    }
    cur = GlobalAvgPool<T>::eval_static(cur);
    cur = proj_.eval(cur);
    std::vector<T> logits(cur.n);
    for (int n = 0; n < cur.n; ++n) logits[n] = cur.at(n, 0, 0, 0);
    return logits;
  }

  /**
   * Backward from per-image logit gradients. Returns the input-image
   * gradient when `want_input_grad` (the path the generator's adversarial
   * term needs); parameter gradients accumulate only when asked.
   */
  Tensor<T> backward(const std::vector<T>& dlogits, bool want_input_grad,
                     bool want_param_grads) {
    Tensor<T> g(static_cast<int>(dlogits.size()), 1, 1, 1);
    for (size_t n = 0; n < dlogits.size(); ++n) g.at(static_cast<int>(n), 0, 0, 0) = dlogits[n];
    g = proj_.backward(g, /*want_input_grad=*/true, want_param_grads);
    g = gap_.backward(g);
    for (int i = static_cast<int>(conv_.size()) - 1; i >= 0; --i) {
      g = act_[i].backward(g);
      if (cfg_.batchnorm && i > 0) g = bn_[i - 1].backward(g);
      const bool need_input = want_input_grad || i > 0;
      g = conv_[i].backward(g, need_input, want_param_grads);
    }
    return g;
  }

  void zero_grad() {
    for (auto& c : conv_) c.zero_grad();
    for (auto& b : bn_) b.zero_grad();
    proj_.zero_grad();
  }

  std::vector<ParamRef<T>> trainable_params() {
    std::vector<ParamRef<T>> out;
    for (auto& c : conv_) {
      auto p = c.params();
      out.insert(out.end(), p.begin(), p.end());
    }
    for (auto& b : bn_) {
      auto p = b.params();
      out.insert(out.end(), p.begin(), p.end());
    }
    auto p = proj_.params();
    out.insert(out.end(), p.begin(), p.end());
    return out;
  }

  std::vector<std::vector<T>*> state_tensors() {
    std::vector<std::vector<T>*> out;
    for (auto p : trainable_params()) out.push_back(p.value);
    for (auto& b : bn_) {
      out.push_back(&b.running_mean);
      out.push_back(&b.running_var);
    }
    return out;
  }

  size_t param_count() {
    size_t n = 0;
    for (auto p : trainable_params()) n += p.value->size();
    return n;
  }

  int conv_layer_count() const { return cfg_.layer_count(); }

 private:
  DiscriminatorConfig cfg_;
  std::vector<Conv2d<T>> conv_;
  std::vector<BatchNorm2d<T>> bn_;
  std::vector<Elu<T>> act_;
  GlobalAvgPool<T> gap_;
  Linear<T> proj_;
};

}  // namespace declip::nn
