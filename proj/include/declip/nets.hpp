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

#include "declip/image.hpp"
#include "declip/nn/discriminator.hpp"
#include "declip/nn/generator.hpp"
#include "declip/nn/vgg.hpp"

namespace declip {

/// Reflect-pads on the bottom/right edges (no repeated edge pixel).
inline ImageTensor reflect_pad(const ImageTensor& img, int pad_h, int pad_w) {
  if (pad_h == 0 && pad_w == 0) return img;
  if (pad_h > img.height - 1 || pad_w > img.width - 1)
    throw std::invalid_argument("reflect_pad: padding exceeds image extent");
  ImageTensor out(img.height + pad_h, img.width + pad_w);
  for (int y = 0; y < out.height; ++y) {
    const int sy = y < img.height ? y : 2 * img.height - 2 - y;
    for (int x = 0; x < out.width; ++x) {
      const int sx = x < img.width ? x : 2 * img.width - 2 - x;
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

/**
 * Restores an image of any geometry (H, W >= 8): reflect-pad up to the next
 * multiple of the generator's downsampling factor, run the network with its
 * inference statistics, crop back, clamp to [0, 1].
 */
template <typename T>
ImageTensor infer_any_size(const nn::Generator<T>& gen, const ImageTensor& img) {
  require_valid(img, "infer_any_size");
  const int f = gen.config().downsample_factor();
  if (img.height < f || img.width < f)
    throw std::invalid_argument("infer_any_size: image smaller than " + std::to_string(f) + "x" +
                                std::to_string(f));
  const int pad_h = (f - img.height % f) % f;
  const int pad_w = (f - img.width % f) % f;
  const ImageTensor padded = reflect_pad(img, pad_h, pad_w);
  const auto out = gen.infer(image_to_tensor<T>(padded));
  ImageTensor full = tensor_to_image(out.restored);  // clamps to [0, 1]
  if (pad_h == 0 && pad_w == 0) return full;
  ImageTensor cropped(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) cropped.at(y, x, c) = full.at(y, x, c);
  return cropped;
}

/// Fresh generator parameters: He-initialized hidden layers, zero residual
/// head, so the initial network is the identity map.
template <typename T = float>
nn::Generator<T> generator_init(Rng& rng, const nn::GeneratorConfig& cfg = {}) {
  nn::Generator<T> gen(cfg);
  gen.init(rng);
  return gen;
}

template <typename T = float>
nn::Discriminator<T> discriminator_init(Rng& rng, const nn::DiscriminatorConfig& cfg = {}) {
  nn::Discriminator<T> disc(cfg);
  disc.init(rng);
  return disc;
}

}  // namespace declip
