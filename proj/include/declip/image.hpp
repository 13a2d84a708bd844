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
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "declip/tensor.hpp"

namespace declip {

/// 8-bit interleaved image as decoded from disk. `channels` may be 1, 3 or 4
/// straight off a decoder; everything downstream requires 3.
struct Image8 {
  int height = 0, width = 0, channels = 0;
  std::vector<uint8_t> data;  // HWC interleaved

  Image8() = default;
  Image8(int h, int w, int c)
      : height(h), width(w), channels(c), data(static_cast<size_t>(h) * w * c, 0) {}
};

/**
 * RGB image with float channels in [0, 1], HWC interleaved.
 * Every operation in this header keeps values finite and inside [0, 1].
 */
struct ImageTensor {
  int height = 0, width = 0;
  std::vector<float> data;  // HWC, 3 channels

  ImageTensor() = default;
  ImageTensor(int h, int w) : height(h), width(w), data(static_cast<size_t>(h) * w * 3, 0.f) {}

  static constexpr int kChannels = 3;

  size_t size() const { return data.size(); }

  float& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }

  bool same_dims(const ImageTensor& o) const { return height == o.height && width == o.width; }
};

inline void require_valid(const ImageTensor& img, const char* who) {
  if (img.height <= 0 || img.width <= 0)
    throw std::invalid_argument(std::string(who) + ": empty image");
  if (img.data.size() != static_cast<size_t>(img.height) * img.width * 3)
    throw std::invalid_argument(std::string(who) + ": data size does not match dimensions");
}

/// Simulated exposure clip bounds, normalized to [0, 1].
/// `lo` must come from 1..80 and `hi` from 175..255 on the 8-bit scale.
struct ClipThresholds {
  float lo;
  float hi;

  ClipThresholds(float lo_, float hi_) : lo(lo_), hi(hi_) {
    if (!(lo < hi)) throw std::invalid_argument("ClipThresholds: lo must be strictly below hi");
    if (lo < 1.f / 255.f || lo > 80.f / 255.f)
      throw std::invalid_argument("ClipThresholds: lo outside [1/255, 80/255]");
    if (hi < 175.f / 255.f || hi > 1.f)
      throw std::invalid_argument("ClipThresholds: hi outside [175/255, 1]");
  }
};

/// Per-pixel, per-channel saturation flags. `over` and `under` are disjoint
/// for any valid thresholds.
struct ClipMask {
  int height = 0, width = 0;
  std::vector<uint8_t> over;   // HWC
  std::vector<uint8_t> under;  // HWC

  ClipMask() = default;
  ClipMask(int h, int w)
      : height(h),
        width(w),
        over(static_cast<size_t>(h) * w * 3, 0),
        under(static_cast<size_t>(h) * w * 3, 0) {}

  size_t size() const { return over.size(); }
  bool same_dims(const ImageTensor& img) const {
    return height == img.height && width == img.width;
  }

  size_t count_over() const { return std::count(over.begin(), over.end(), uint8_t(1)); }
  size_t count_under() const { return std::count(under.begin(), under.end(), uint8_t(1)); }
  bool empty() const { return count_over() == 0 && count_under() == 0; }
};

enum class ClipMode {
  kStretch,  // rescale the surviving range to [0, 1]; saturated values land on 0 and 1
  kPlateau,  // clamp only; saturated values plateau at lo and hi
};

inline const char* to_string(ClipMode m) {
  return m == ClipMode::kStretch ? "stretch" : "plateau";
}

inline ClipMode clip_mode_from_string(const std::string& s) {
  if (s == "stretch") return ClipMode::kStretch;
  if (s == "plateau") return ClipMode::kPlateau;
  throw std::invalid_argument("unknown clip mode: " + s + " (expected stretch|plateau)");
}

/// 0..255 integer image -> [0, 1] floats. Rejects anything but 3 channels.
inline ImageTensor normalize(const Image8& img8) {
  if (img8.channels != 3)
    throw std::invalid_argument("normalize: expected 3 channels, got " +
                                std::to_string(img8.channels));
  if (img8.height <= 0 || img8.width <= 0) throw std::invalid_argument("normalize: empty image");
  if (img8.data.size() != static_cast<size_t>(img8.height) * img8.width * 3)
    throw std::invalid_argument("normalize: data size does not match dimensions");
  ImageTensor out(img8.height, img8.width);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = static_cast<float>(img8.data[i]) / 255.f;
  return out;
}

/// [0, 1] floats -> 0..255 integers, round-to-nearest. Exact inverse of
/// normalize for any 8-bit-quantized input.
inline Image8 denormalize(const ImageTensor& img) {
  require_valid(img, "denormalize");
  Image8 out(img.height, img.width, 3);
  for (size_t i = 0; i < img.data.size(); ++i) {
    const float v = std::clamp(img.data[i], 0.f, 1.f);
    out.data[i] = static_cast<uint8_t>(std::lround(v * 255.f));
  }
  return out;
}

/**
 * Simulates exposure clipping. Stretch mode remaps the surviving range so
 * saturated pixels land exactly on 0 and 1; plateau mode clamps in place.
 */
inline ImageTensor apply_clip(const ImageTensor& img, const ClipThresholds& t,
                              ClipMode mode = ClipMode::kStretch) {
  require_valid(img, "apply_clip");
  if (!(t.lo < t.hi)) throw std::invalid_argument("apply_clip: lo must be strictly below hi");
  ImageTensor out(img.height, img.width);
  const float lo = t.lo, hi = t.hi;
  const float range = hi - lo;
  if (mode == ClipMode::kStretch) {
    for (size_t i = 0; i < img.data.size(); ++i) {
      const float v = std::clamp(img.data[i], lo, hi);
      out.data[i] = (v - lo) / range;
    }
  } else {
    for (size_t i = 0; i < img.data.size(); ++i) out.data[i] = std::clamp(img.data[i], lo, hi);
  }
  return out;
}

/// Saturation flags of the pre-clip image against the thresholds:
/// over where v >= hi, under where v <= lo.
inline ClipMask compute_clip_mask(const ImageTensor& original, const ClipThresholds& t) {
  require_valid(original, "compute_clip_mask");
  ClipMask mask(original.height, original.width);
  for (size_t i = 0; i < original.data.size(); ++i) {
    const float v = original.data[i];
    mask.over[i] = v >= t.hi ? 1 : 0;
    mask.under[i] = v <= t.lo ? 1 : 0;
  }
  return mask;
}

/// Saturation flags of an image with no known thresholds (real photos):
/// over where v >= 1 - eps, under where v <= eps. Default eps is one
/// 8-bit quantization step.
inline ClipMask detect_saturation(const ImageTensor& img, float eps = 1.f / 255.f) {
  require_valid(img, "detect_saturation");
  if (!(eps >= 0.f) || eps >= 0.5f)
    throw std::invalid_argument("detect_saturation: eps must be in [0, 0.5)");
  ClipMask mask(img.height, img.width);
  for (size_t i = 0; i < img.data.size(); ++i) {
    const float v = img.data[i];
    mask.over[i] = v >= 1.f - eps ? 1 : 0;
    mask.under[i] = v <= eps ? 1 : 0;
  }
  return mask;
}

/**
 * Paints pixels saturated in all three channels: over-saturated pure red,
 * under-saturated pure green. Pixels clipped in fewer than three channels
 * pass through untouched.
 */
inline ImageTensor visualize_mask(const ImageTensor& img, const ClipMask& mask) {
  require_valid(img, "visualize_mask");
  if (!mask.same_dims(img)) throw std::invalid_argument("visualize_mask: dimension mismatch");
  ImageTensor out = img;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const size_t i = (static_cast<size_t>(y) * img.width + x) * 3;
      const bool over_all = mask.over[i] && mask.over[i + 1] && mask.over[i + 2];
      const bool under_all = mask.under[i] && mask.under[i + 1] && mask.under[i + 2];
      if (over_all) {
        out.data[i] = 1.f;
        out.data[i + 1] = 0.f;
        out.data[i + 2] = 0.f;
      } else if (under_all) {
        out.data[i] = 0.f;
        out.data[i + 1] = 1.f;
        out.data[i + 2] = 0.f;
      }
    }
  }
  return out;
}

namespace detail {

// Catmull-Rom kernel weight for |t| <= 2.
inline float catmull_rom(float t) {
  t = std::fabs(t);
  if (t < 1.f) return 1.f + t * t * (1.5f * t - 2.5f);
  if (t < 2.f) return 2.f + t * (-4.f + t * (2.5f - 0.5f * t));
  return 0.f;
}

}  // namespace detail

namespace detail {

struct ResampleTap {
  int base;          // leftmost source index, unclamped
  float weight[4];   // normalized Catmull-Rom weights
};

inline std::vector<ResampleTap> resample_taps(int len_in, int len_out) {
  std::vector<ResampleTap> taps(len_out);
  const double scale = static_cast<double>(len_in) / len_out;
  for (int o = 0; o < len_out; ++o) {
    const double center = (o + 0.5) * scale - 0.5;
    const int base = static_cast<int>(std::floor(center)) - 1;
    float wsum = 0.f;
    for (int k = 0; k < 4; ++k) {
      taps[o].weight[k] = catmull_rom(static_cast<float>(center - (base + k)));
      wsum += taps[o].weight[k];
    }
    for (int k = 0; k < 4; ++k) taps[o].weight[k] /= wsum;
    taps[o].base = base;
  }
  return taps;
}

}  // namespace detail

/**
 * Separable bicubic (Catmull-Rom) resize with edge clamping. Output is
 * clamped back to [0, 1] since the kernel can overshoot.
 */
inline ImageTensor resize_bicubic(const ImageTensor& img, int new_h, int new_w) {
  require_valid(img, "resize_bicubic");
  if (new_h <= 0 || new_w <= 0) throw std::invalid_argument("resize_bicubic: empty target");
  if (new_h == img.height && new_w == img.width) return img;

  // Horizontal pass.
  const auto xtaps = detail::resample_taps(img.width, new_w);
  std::vector<float> tmp(static_cast<size_t>(img.height) * new_w * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int ox = 0; ox < new_w; ++ox) {
      const auto& tap = xtaps[ox];
      for (int c = 0; c < 3; ++c) {
        float acc = 0.f;
        for (int k = 0; k < 4; ++k) {
          const int sx = std::clamp(tap.base + k, 0, img.width - 1);
          acc += tap.weight[k] * img.at(y, sx, c);
        }
        tmp[(static_cast<size_t>(y) * new_w + ox) * 3 + c] = acc;
      }
    }
  }

  // Vertical pass.
  const auto ytaps = detail::resample_taps(img.height, new_h);
  ImageTensor out(new_h, new_w);
  for (int oy = 0; oy < new_h; ++oy) {
    const auto& tap = ytaps[oy];
    for (int x = 0; x < new_w; ++x) {
      for (int c = 0; c < 3; ++c) {
        float acc = 0.f;
        for (int k = 0; k < 4; ++k) {
          const int sy = std::clamp(tap.base + k, 0, img.height - 1);
          acc += tap.weight[k] * tmp[(static_cast<size_t>(sy) * new_w + x) * 3 + c];
        }
        out.at(oy, x, c) = std::clamp(acc, 0.f, 1.f);
      }
    }
  }
  return out;
}

/// HWC [0,1] image -> 1x3xHxW tensor.
template <typename T = float>
Tensor<T> image_to_tensor(const ImageTensor& img) {
  Tensor<T> t(1, 3, img.height, img.width);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) t.at(0, c, y, x) = static_cast<T>(img.at(y, x, c));
  return t;
}

/// Batch of HWC images -> Nx3xHxW tensor. All images must share dimensions.
template <typename T = float>
Tensor<T> batch_to_tensor(const std::vector<ImageTensor>& imgs) {
  if (imgs.empty()) throw std::invalid_argument("batch_to_tensor: empty batch");
  const int h = imgs[0].height, w = imgs[0].width;
  Tensor<T> t(static_cast<int>(imgs.size()), 3, h, w);
  for (size_t n = 0; n < imgs.size(); ++n) {
    if (imgs[n].height != h || imgs[n].width != w)
      throw std::invalid_argument("batch_to_tensor: dimension mismatch within batch");
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) t.at(static_cast<int>(n), c, y, x) = static_cast<T>(imgs[n].at(y, x, c));
  }
  return t;
}

/// One image out of an Nx3xHxW tensor, clamped back to [0, 1].
template <typename T>
ImageTensor tensor_to_image(const Tensor<T>& t, int n = 0) {
  if (t.c != 3) throw std::invalid_argument("tensor_to_image: expected 3 channels");
  if (n < 0 || n >= t.n) throw std::invalid_argument("tensor_to_image: batch index out of range");
  ImageTensor img(t.h, t.w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < t.h; ++y)
      for (int x = 0; x < t.w; ++x)
        img.at(y, x, c) = std::clamp(static_cast<float>(t.at(n, c, y, x)), 0.f, 1.f);
  return img;
}

}  // namespace declip
