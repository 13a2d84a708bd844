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

#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "declip/nn/layers.hpp"
#include "declip/rng.hpp"
#include "declip/tensor.hpp"

namespace declip::nn {

/**
 * Hourglass layout described by its encoder half; the decoder mirrors it.
 *
 * Encoder layer i is a 3x3 convolution to encoder_channels[i] with stride
 * encoder_strides[i]. Decoder layer j mirrors encoder layer L-1-j: a
 * transposed convolution where the mirrored stride is 2, a plain one
 * otherwise, with output channels chosen so the same-resolution encoder
 * activation can be added on as a skip connection. The last decoder layer is
 * the residual head back to the input channel count, with no normalization
 * or activation, zero-initialized so a fresh network is the identity map.
 */
struct GeneratorConfig {
  std::vector<int> encoder_channels{32, 64, 64, 128, 128, 256, 256};
  std::vector<int> encoder_strides{1, 2, 1, 2, 1, 2, 1};
  bool batchnorm = true;
  int in_channels = 3;

  void validate() const {
    if (encoder_channels.empty() || encoder_channels.size() != encoder_strides.size())
      throw std::invalid_argument("generator config: channels/strides size mismatch");
    for (int s : encoder_strides)
      if (s != 1 && s != 2) throw std::invalid_argument("generator config: strides must be 1 or 2");
    for (int c : encoder_channels)
      if (c < 1) throw std::invalid_argument("generator config: channels must be positive");
  }

  int layer_count() const { return 2 * static_cast<int>(encoder_channels.size()); }

  int downsample_factor() const {
    return std::accumulate(encoder_strides.begin(), encoder_strides.end(), 1,
                           [](int a, int b) { return a * b; });
  }

  std::string descriptor() const {
    std::ostringstream os;
    os << "gen:v1:in=" << in_channels << ":bn=" << (batchnorm ? 1 : 0) << ":enc=";
    for (size_t i = 0; i < encoder_channels.size(); ++i)
      os << encoder_channels[i] << "s" << encoder_strides[i] << (i + 1 < encoder_channels.size() ? "," : "");
    return os.str();
  }
};

enum class NetMode {
  kTrain,       // batch statistics, caches kept, running stats updated
  kDetached,    // batch statistics, no caches, nothing mutated
  kEval,        // running statistics, no caches
};

template <typename T>
struct GeneratorOut {
  Tensor<T> residual;
  Tensor<T> restored;  // input + residual; not clamped
};

template <typename T>
class Generator {
 public:
  Generator() : Generator(GeneratorConfig{}) {}

  explicit Generator(const GeneratorConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const auto& ch = cfg_.encoder_channels;
    const auto& st = cfg_.encoder_strides;
    const int L = static_cast<int>(ch.size());

    int prev = cfg_.in_channels;
    for (int i = 0; i < L; ++i) {
      enc_.emplace_back(prev, ch[i], 3, st[i], /*transposed=*/false);
      if (cfg_.batchnorm) enc_bn_.emplace_back(ch[i]);
      prev = ch[i];
    }
    enc_act_.resize(L);

    // Mirror layers: decoder j undoes encoder L-1-j and lands on the channel
    // count of activation a_{L-1-j} so skips are additive.
    for (int j = 0; j + 1 < L; ++j) {
      const int mirror = L - 1 - j;
      const int out_ch = ch[mirror - 1];
      const bool up = st[mirror] == 2;
      dec_.emplace_back(prev, out_ch, 3, st[mirror], /*transposed=*/up);
      if (cfg_.batchnorm) dec_bn_.emplace_back(out_ch);
      prev = out_ch;
    }
    dec_act_.resize(dec_.size());
    head_ = Conv2d<T>(prev, cfg_.in_channels, 3, 1, /*transposed=*/false);
  }

  const GeneratorConfig& config() const { return cfg_; }

  /// He init for hidden layers; the residual head stays all-zero so the
  /// freshly initialized network maps any input to itself exactly.
  void init(Rng& rng) {
    for (auto& c : enc_) c.init_he(rng);
    for (auto& c : dec_) c.init_he(rng);
    std::fill(head_.w.begin(), head_.w.end(), T(0));
    std::fill(head_.b.begin(), head_.b.end(), T(0));
  }

  /// Training forward: batch statistics, caches kept for backward, running
  /// stats updated. Other modes leave the network untouched.
  GeneratorOut<T> forward(const Tensor<T>& x, NetMode mode) {
    if (mode != NetMode::kTrain)
      return mode == NetMode::kEval ? infer(x) : forward_detached(x);
    check_input(x);
    const int L = static_cast<int>(enc_.size());

    acts_.assign(L + 1, Tensor<T>());
    acts_[0] = x;
    Tensor<T> cur = x;
    for (int i = 0; i < L; ++i) {
      Tensor<T> t = enc_[i].forward(cur, true);
      if (cfg_.batchnorm) t = enc_bn_[i].forward_train(t, /*update_running=*/true);
      cur = enc_act_[i].forward(t, true);
      acts_[i + 1] = cur;
    }
    for (size_t j = 0; j < dec_.size(); ++j) {
      Tensor<T> t = dec_[j].forward(cur, true);
      if (cfg_.batchnorm) t = dec_bn_[j].forward_train(t, /*update_running=*/true);
      t = dec_act_[j].forward(t, true);
      t.add(acts_[L - 1 - static_cast<int>(j)]);
      cur = std::move(t);
    }
    GeneratorOut<T> out;
    out.residual = head_.forward(cur, true);
    out.restored = x;
    out.restored.add(out.residual);
    return out;
  }

  /// Batch-statistics forward that leaves the network untouched; produces
  /// the same values a training forward would. Used for detached fakes.
  GeneratorOut<T> forward_detached(const Tensor<T>& x) const {
    return run_stateless(x, /*batch_stats=*/true);
  }

  /// Inference path: running statistics, no caches.
  GeneratorOut<T> infer(const Tensor<T>& x) const {
    return run_stateless(x, /*batch_stats=*/false);
  }

  /// Backward from d(restored); the residual head sees the same gradient
  /// since restored = input + residual. Input gradient is not propagated
  /// past the first encoder layer.
  void backward(const Tensor<T>& d_restored) {
    const int L = static_cast<int>(enc_.size());
    std::vector<Tensor<T>> d_acts(L + 1);

    Tensor<T> g = head_.backward(d_restored);
    for (int j = static_cast<int>(dec_.size()) - 1; j >= 0; --j) {
      const int skip_idx = L - 1 - j;
      accumulate(d_acts[skip_idx], g);
      g = dec_act_[j].backward(g);
      if (cfg_.batchnorm) g = dec_bn_[j].backward(g);
      g = dec_[j].backward(g);
    }
    accumulate(d_acts[L], g);

    for (int i = L - 1; i >= 0; --i) {
      Tensor<T> gi = enc_act_[i].backward(d_acts[i + 1]);
      if (cfg_.batchnorm) gi = enc_bn_[i].backward(gi);
      gi = enc_[i].backward(gi, /*want_input_grad=*/i > 0);
      if (i > 0) accumulate(d_acts[i], gi);
    }
  }

  void zero_grad() {
    for (auto& c : enc_) c.zero_grad();
    for (auto& c : dec_) c.zero_grad();
    head_.zero_grad();
    for (auto& b : enc_bn_) b.zero_grad();
    for (auto& b : dec_bn_) b.zero_grad();
  }

  std::vector<ParamRef<T>> trainable_params() {
    std::vector<ParamRef<T>> out;
    for (auto& c : enc_) append(out, c.params());
    for (auto& b : enc_bn_) append(out, b.params());
    for (auto& c : dec_) append(out, c.params());
    for (auto& b : dec_bn_) append(out, b.params());
    append(out, head_.params());
    return out;
  }

  /// Everything that defines the network function: trainable parameters plus
  /// batch-norm running statistics, in serialization order.
  std::vector<std::vector<T>*> state_tensors() {
    std::vector<std::vector<T>*> out;
    for (auto p : trainable_params()) out.push_back(p.value);
    for (auto& b : enc_bn_) {
      out.push_back(&b.running_mean);
      out.push_back(&b.running_var);
    }
    for (auto& b : dec_bn_) {
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
  void check_input(const Tensor<T>& x) const {
    if (x.c != cfg_.in_channels) throw std::invalid_argument("generator: channel mismatch");
    const int f = cfg_.downsample_factor();
    if (x.h % f != 0 || x.w % f != 0)
      throw std::invalid_argument("generator: spatial dims must be divisible by " +
                                  std::to_string(f));
    if (x.n < 1) throw std::invalid_argument("generator: empty batch");
  }

  static void append(std::vector<ParamRef<T>>& out, std::vector<ParamRef<T>> more) {
    out.insert(out.end(), more.begin(), more.end());
  }

  static void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
    if (dst.v.empty())
      dst = src;
    else
      dst.add(src);
  }

  GeneratorOut<T> run_stateless(const Tensor<T>& x, bool batch_stats) const {
    check_input(x);
    const int L = static_cast<int>(enc_.size());
    Tensor<T> cur = x;
    std::vector<Tensor<T>> skips(L + 1);
    skips[0] = x;
    for (int i = 0; i < L; ++i) {
      Tensor<T> t = enc_[i].eval(cur);
      if (cfg_.batchnorm)
        t = batch_stats ? enc_bn_[i].eval_batchstats(t) : enc_bn_[i].eval(t);
      cur = Elu<T>::eval_static(t);
      skips[i + 1] = cur;
    }
    for (size_t j = 0; j < dec_.size(); ++j) {
      Tensor<T> t = dec_[j].eval(cur);
      if (cfg_.batchnorm)
        t = batch_stats ? dec_bn_[j].eval_batchstats(t) : dec_bn_[j].eval(t);
      t = Elu<T>::eval_static(t);
      t.add(skips[L - 1 - static_cast<int>(j)]);
      cur = std::move(t);
    }
    GeneratorOut<T> out;
    out.residual = head_.eval(cur);
    out.restored = x;
    out.restored.add(out.residual);
    return out;
  }

  GeneratorConfig cfg_;
  std::vector<Conv2d<T>> enc_, dec_;
  Conv2d<T> head_;
  std::vector<BatchNorm2d<T>> enc_bn_, dec_bn_;
  std::vector<Elu<T>> enc_act_, dec_act_;
  std::vector<Tensor<T>> acts_;  // training cache: a_0 .. a_L
};

}  // namespace declip::nn
