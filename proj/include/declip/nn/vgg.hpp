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

#include <algorithm>
#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "declip/image.hpp"
#include "declip/nn/layers.hpp"
#include "declip/rng.hpp"
#include "declip/serialize.hpp"
#include "declip/tensor.hpp"

namespace declip::nn {

/// VGG16 convolutional stack: 13 conv layers in 5 blocks, 2x2 max pooling
/// between blocks. Classifier head omitted; only feature maps are used.
struct VggPlan {
  static constexpr int kNumConvs = 13;
  static constexpr std::array<int, kNumConvs> kChannels{64,  64,  128, 128, 256, 256, 256,
                                                        512, 512, 512, 512, 512, 512};
  // A pool sits after these conv indices.
  static constexpr std::array<int, 4> kPoolAfter{1, 3, 6, 9};

  static bool pool_after(int conv_idx) {
    return std::find(kPoolAfter.begin(), kPoolAfter.end(), conv_idx) != kPoolAfter.end();
  }
};

constexpr char kVggMagic[8] = {'D', 'C', 'L', 'P', 'V', 'G', 'G', '1'};

/// Conv indices of the deepest block (conv5_1..conv5_3), the default layer
/// selection for the perceptual distance.
inline std::vector<int> default_perceptual_layers() { return {10, 11, 12}; }

/**
 * Frozen VGG16 feature extractor.
 *
 * Weights come from a local file (never downloaded); input preprocessing is
 * the classifier's published normalization of [0,1] RGB:
 * (x - mean) / std with mean (0.485, 0.456, 0.406), std (0.229, 0.224, 0.225).
 * Feature maps are taken after the ReLU of each selected conv layer.
 * Nothing in training ever writes to these parameters.
 */
template <typename T>
class FeatureExtractor {
 public:
  FeatureExtractor() = default;

  FeatureExtractor(std::vector<Conv2d<T>> convs, std::vector<int> selected)
      : convs_(std::move(convs)), selected_(std::move(selected)) {
    validate_plan();
    relus_.resize(convs_.size());
    pools_.resize(VggPlan::kPoolAfter.size());
  }

  /// Random-weight extractor (He init). Used by tests and available when no
  /// pretrained file is supplied; random deep features still define a valid
  /// (if weaker) perceptual distance.
  static FeatureExtractor random_init(Rng& rng, std::vector<int> selected) {
    std::vector<Conv2d<T>> convs;
    int prev = 3;
    for (int i = 0; i < VggPlan::kNumConvs; ++i) {
      Conv2d<T> c(prev, VggPlan::kChannels[i], 3, 1, false);
      c.init_he(rng);
      convs.push_back(std::move(c));
      prev = VggPlan::kChannels[i];
    }
    return FeatureExtractor(std::move(convs), std::move(selected));
  }

  static FeatureExtractor load(const std::string& path, std::vector<int> selected) {
    BinaryReader in(path);
    char magic[8];
    in.bytes(magic, 8);
    if (std::memcmp(magic, kVggMagic, 8) != 0)
      throw std::runtime_error("not a feature-extractor weight file: " + path);
    if (in.u32() != 1) throw std::runtime_error("unsupported weight file version: " + path);
    const uint32_t n_convs = in.u32();
    if (n_convs != VggPlan::kNumConvs)
      throw std::runtime_error("weight file does not match the VGG16 plan: " + path);
    std::vector<Conv2d<T>> convs;
    int prev = 3;
    for (int i = 0; i < VggPlan::kNumConvs; ++i) {
      const uint32_t out_ch = in.u32(), in_ch = in.u32(), k = in.u32();
      if (out_ch != static_cast<uint32_t>(VggPlan::kChannels[i]) ||
          in_ch != static_cast<uint32_t>(prev) || k != 3)
        throw std::runtime_error("weight file layer " + std::to_string(i) +
                                 " does not match the VGG16 plan: " + path);
      const auto w = in.vec<float>();
      const auto b = in.vec<float>();
      if (w.size() != static_cast<size_t>(out_ch) * in_ch * 9 || b.size() != out_ch)
        throw std::runtime_error("weight file layer " + std::to_string(i) + " has wrong tensor sizes");
      Conv2d<T> c(prev, VggPlan::kChannels[i], 3, 1, false);
      for (size_t j = 0; j < w.size(); ++j) c.w[j] = static_cast<T>(w[j]);
      for (size_t j = 0; j < b.size(); ++j) c.b[j] = static_cast<T>(b[j]);
      convs.push_back(std::move(c));
      prev = VggPlan::kChannels[i];
    }
    in.verify_checksum("feature-extractor weights");
    return FeatureExtractor(std::move(convs), std::move(selected));
  }

  void save(const std::string& path) const {
    BinaryWriter out(path);
    out.bytes(kVggMagic, 8);
    out.u32(1);
    out.u32(VggPlan::kNumConvs);
    for (const auto& c : convs_) {
      out.u32(static_cast<uint32_t>(c.out_ch));
      out.u32(static_cast<uint32_t>(c.in_ch));
      out.u32(static_cast<uint32_t>(c.k));
      std::vector<float> w(c.w.size()), b(c.b.size());
      for (size_t j = 0; j < w.size(); ++j) w[j] = static_cast<float>(c.w[j]);
      for (size_t j = 0; j < b.size(); ++j) b[j] = static_cast<float>(c.b[j]);
      out.vec(w);
      out.vec(b);
    }
    out.u64(out.hash());
    out.close();
  }

  const std::vector<int>& selected_layers() const { return selected_; }
  int deepest_selected() const { return selected_.back(); }

  /// FNV over all parameter bytes; pins the frozen-weights guarantee.
  uint64_t checksum() const {
    uint64_t h = 0xCBF29CE484222325ull;
    for (const auto& c : convs_) {
      h = fnv1a(c.w.data(), c.w.size() * sizeof(T), h);
      h = fnv1a(c.b.data(), c.b.size() * sizeof(T), h);
    }
    return h;
  }

  /// Feature maps (post-ReLU) at the selected conv layers.
  std::vector<Tensor<T>> features(const Tensor<T>& x) const {
    std::vector<Tensor<T>> out;
    Tensor<T> cur = preprocess(x);
    for (int i = 0; i <= deepest_selected(); ++i) {
      cur = convs_[i].eval(cur);
      relu_inplace(cur);
      if (is_selected(i)) out.push_back(cur);
      if (VggPlan::pool_after(i) && i < deepest_selected()) cur = pool_eval(cur);
    }
    return out;
  }

  /// Caching forward for the branch that needs gradients.
  std::vector<Tensor<T>> features_train(const Tensor<T>& x) {
    std::vector<Tensor<T>> out;
    Tensor<T> cur = preprocess(x);
    int pool_idx = 0;
    for (int i = 0; i <= deepest_selected(); ++i) {
      cur = convs_[i].forward(cur, true);
      cur = relus_[i].forward(cur, true);
      if (is_selected(i)) out.push_back(cur);
      if (VggPlan::pool_after(i) && i < deepest_selected()) cur = pools_[pool_idx++].forward(cur, true);
    }
    return out;
  }

  /**
   * Backward from per-layer feature-map gradients (aligned with the order
   * features_train returned them) to the input-image gradient. Weights stay
   * frozen: no parameter gradients are ever accumulated here.
   */
  Tensor<T> backward_to_input(const std::vector<Tensor<T>>& d_feats) {
    if (d_feats.size() != selected_.size())
      throw std::invalid_argument("feature backward: gradient count mismatch");

    Tensor<T> g;
    int feat_idx = static_cast<int>(selected_.size()) - 1;
    int pool_idx = pools_used();
    for (int i = deepest_selected(); i >= 0; --i) {
      if (VggPlan::pool_after(i) && i < deepest_selected()) g = pools_[--pool_idx].backward(g);
      if (is_selected(i)) {
        if (g.v.empty())
          g = d_feats[feat_idx--];
        else {
          g.add(d_feats[feat_idx--]);
        }
      }
      g = relus_[i].backward(g);
      g = convs_[i].backward(g, /*want_input_grad=*/true, /*want_param_grads=*/false);
    }
    // Undo the preprocessing scale.
    constexpr double stds[3] = {0.229, 0.224, 0.225};
    for (int n = 0; n < g.n; ++n)
      for (int c = 0; c < 3; ++c) {
        T* p = g.plane(n, c);
        const T inv = static_cast<T>(1.0 / stds[c]);
        for (int i = 0; i < g.h * g.w; ++i) p[i] *= inv;
      }
    return g;
  }

  /// Per-layer normalizer 1 / (W_j * H_j * F_j) for a feature map.
  static double map_normalizer(const Tensor<T>& feat) {
    return 1.0 / (static_cast<double>(feat.w) * feat.h * feat.c);
  }

 private:
  void validate_plan() const {
    if (convs_.size() != VggPlan::kNumConvs)
      throw std::invalid_argument("feature extractor: wrong conv count");
    if (selected_.empty()) throw std::invalid_argument("feature extractor: no layers selected");
    for (int j : selected_)
      if (j < 0 || j >= VggPlan::kNumConvs)
        throw std::invalid_argument("feature extractor: selected layer out of range");
    if (!std::is_sorted(selected_.begin(), selected_.end()) ||
        std::adjacent_find(selected_.begin(), selected_.end()) != selected_.end())
      throw std::invalid_argument("feature extractor: selected layers must be sorted and unique");
  }

  bool is_selected(int i) const {
    return std::find(selected_.begin(), selected_.end(), i) != selected_.end();
  }

  int pools_used() const {
    int n = 0;
    for (int p : VggPlan::kPoolAfter)
      if (p < deepest_selected()) ++n;
    return n;
  }

  Tensor<T> preprocess(const Tensor<T>& x) const {
    if (x.c != 3) throw std::invalid_argument("feature extractor: expected 3-channel input");
    constexpr double means[3] = {0.485, 0.456, 0.406};
    constexpr double stds[3] = {0.229, 0.224, 0.225};
    Tensor<T> y(x.n, x.c, x.h, x.w);
    for (int n = 0; n < x.n; ++n)
      for (int c = 0; c < 3; ++c) {
        const T* p = x.plane(n, c);
        T* q = y.plane(n, c);
        const T mean = static_cast<T>(means[c]);
        const T inv_std = static_cast<T>(1.0 / stds[c]);
        for (int i = 0; i < x.h * x.w; ++i) q[i] = (p[i] - mean) * inv_std;
      }
    return y;
  }

  static void relu_inplace(Tensor<T>& t) {
    for (auto& v : t.v)
      if (v < T(0)) v = T(0);
  }

  static Tensor<T> pool_eval(const Tensor<T>& x) {
    MaxPool2x2<T> pool;
    return pool.forward(x, false);
  }

  std::vector<Conv2d<T>> convs_;
  std::vector<int> selected_;
  std::vector<Relu<T>> relus_;
  std::vector<MaxPool2x2<T>> pools_;
};

/// Feature maps of a single image at the extractor's selected layers.
template <typename T>
std::vector<Tensor<T>> vgg_features(const FeatureExtractor<T>& f, const ImageTensor& img) {
  return f.features(image_to_tensor<T>(img));
}

}  // namespace declip::nn
