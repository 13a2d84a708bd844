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
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "declip/image.hpp"
#include "declip/image_io.hpp"
#include "declip/rng.hpp"
#include "declip/serialize.hpp"

namespace declip {

/// One synthesized training example: the clipped input, the original crop it
/// came from, and the saturation mask implied by the drawn thresholds.
struct TrainingPair {
  ImageTensor clipped;       // network input
  ImageTensor ground_truth;  // restoration target
  ClipMask mask;
  ClipThresholds thresholds;
};

struct DatasetConfig {
  std::string source_dir;
  int crop_size = 224;
  int batch_size = 16;
  uint64_t seed = 0;
  ClipMode clip_mode = ClipMode::kStretch;
  bool recursive = false;

  void validate() const {
    if (crop_size < 32) throw std::invalid_argument("crop_size must be >= 32");
    if (crop_size % 8 != 0)
      throw std::invalid_argument("crop_size must be divisible by the generator downsampling factor (8)");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  }
};

/// Draws the per-image clip thresholds: overexposure uniform on {175..255},
/// underexposure uniform on {1..80}, both on the 8-bit scale, independent.
/// The over threshold is drawn first.
inline ClipThresholds sample_thresholds(Rng& rng) {
  const uint32_t hi = rng.uniform_u32(175, 255);
  const uint32_t lo = rng.uniform_u32(1, 80);
  return ClipThresholds(static_cast<float>(lo) / 255.f, static_cast<float>(hi) / 255.f);
}

/**
 * Uniformly random size x size window. Images smaller than the crop are
 * bicubically upscaled first so the shorter side equals the crop size.
 * Draw order: row offset, then column offset.
 */
inline ImageTensor random_crop(const ImageTensor& img, int size, Rng& rng) {
  require_valid(img, "random_crop");
  if (size <= 0) throw std::invalid_argument("random_crop: size must be positive");

  const ImageTensor* src = &img;
  ImageTensor upscaled;
  if (img.height < size || img.width < size) {
    const double scale = static_cast<double>(size) / std::min(img.height, img.width);
    const int nh = std::max(size, static_cast<int>(std::lround(img.height * scale)));
    const int nw = std::max(size, static_cast<int>(std::lround(img.width * scale)));
    upscaled = resize_bicubic(img, nh, nw);
    src = &upscaled;
  }

  const int y0 = static_cast<int>(rng.uniform_u32(0, static_cast<uint32_t>(src->height - size)));
  const int x0 = static_cast<int>(rng.uniform_u32(0, static_cast<uint32_t>(src->width - size)));
  ImageTensor out(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = src->at(y0 + y, x0 + x, c);
  return out;
}

/// Crop, then draw thresholds, then clip. The mask is computed from the crop
/// and the drawn thresholds, never stored pixels.
inline TrainingPair make_training_pair(const ImageTensor& img, const DatasetConfig& cfg, Rng& rng) {
  ImageTensor gt = random_crop(img, cfg.crop_size, rng);
  const ClipThresholds t = sample_thresholds(rng);
  ImageTensor clipped = apply_clip(gt, t, cfg.clip_mode);
  ClipMask mask = compute_clip_mask(gt, t);
  return TrainingPair{std::move(clipped), std::move(gt), std::move(mask), t};
}

/**
 * Deterministic dataset over a directory of PNG/JPEG files.
 *
 * The triple stream is a pure function of (file list, config, seed): epoch
 * order reshuffles per epoch, one crop+threshold draw per image per epoch,
 * and every batch is addressable by global step index. That makes resumed
 * runs and parallel prefetchers produce the exact same stream.
 */
class Dataset {
 public:
  explicit Dataset(const DatasetConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    namespace fs = std::filesystem;
    if (!fs::exists(cfg.source_dir) || !fs::is_directory(cfg.source_dir))
      throw std::runtime_error("dataset directory does not exist: " + cfg.source_dir);

    std::vector<std::string> candidates;
    if (cfg.recursive) {
      for (const auto& e : fs::recursive_directory_iterator(cfg.source_dir))
        if (e.is_regular_file()) candidates.push_back(e.path().generic_string());
    } else {
      for (const auto& e : fs::directory_iterator(cfg.source_dir))
        if (e.is_regular_file()) candidates.push_back(e.path().generic_string());
    }
    std::sort(candidates.begin(), candidates.end());

    size_t cached_bytes = 0;
    for (const auto& path : candidates) {
      try {
        Image8 img = load_image8(path);
        files_.push_back(path);
        // Keep decoded pixels around while they fit; beyond the budget the
        // batch loader falls back to decoding per access.
        if (cached_bytes + img.data.size() <= kCacheBudgetBytes) {
          cached_bytes += img.data.size();
          cache_.push_back(std::move(img));
        } else {
          cache_.emplace_back();
        }
      } catch (const std::exception& e) {
        std::cerr << "warning: skipping unreadable file: " << path << " (" << e.what() << ")\n";
      }
    }
    if (files_.empty())
      throw std::runtime_error("dataset is empty: no decodable images under " + cfg.source_dir);
    if (batches_per_epoch() == 0)
      throw std::runtime_error("dataset smaller than one batch (" + std::to_string(files_.size()) +
                               " images, batch " + std::to_string(cfg.batch_size) + ")");
  }

  size_t image_count() const { return files_.size(); }
  const std::vector<std::string>& files() const { return files_; }

  /// Partial final batches are dropped to keep batch statistics stable.
  long batches_per_epoch() const {
    return static_cast<long>(files_.size()) / cfg_.batch_size;
  }

  /// Fingerprint of the sorted file list; stored in checkpoints so a resumed
  /// run refuses to continue against a different dataset.
  uint64_t fingerprint() const {
    uint64_t h = 0xCBF29CE484222325ull;
    for (const auto& f : files_) h = fnv1a(std::filesystem::path(f).filename().string(), h);
    return h;
  }

  /// The batch consumed at global step `step` (0-based). Random-access.
  std::vector<TrainingPair> batch(long step) const {
    if (step < 0) throw std::invalid_argument("batch step must be >= 0");
    const long bpe = batches_per_epoch();
    const uint64_t epoch = static_cast<uint64_t>(step / bpe);
    const long slot = step % bpe;

    const std::vector<size_t> order = epoch_order(epoch);
    std::vector<TrainingPair> out;
    out.reserve(cfg_.batch_size);
    for (int i = 0; i < cfg_.batch_size; ++i) {
      const size_t idx = order[static_cast<size_t>(slot) * cfg_.batch_size + i];
      const ImageTensor img = cache_[idx].has_value() ? normalize(*cache_[idx]) : load_image(files_[idx]);
      Rng rng = make_rng(cfg_.seed, rng_stream::kTrainingPair, epoch, idx);
      out.push_back(make_training_pair(img, cfg_, rng));
    }
    return out;
  }

  /// Shuffled image order for one epoch.
  std::vector<size_t> epoch_order(uint64_t epoch) const {
    std::vector<size_t> order(files_.size());
    std::iota(order.begin(), order.end(), size_t(0));
    Rng rng = make_rng(cfg_.seed, rng_stream::kEpochShuffle, epoch);
    rng.shuffle(order);
    return order;
  }

  const DatasetConfig& config() const { return cfg_; }

 private:
  static constexpr size_t kCacheBudgetBytes = size_t(512) << 20;

  DatasetConfig cfg_;
  std::vector<std::string> files_;
  std::vector<std::optional<Image8>> cache_;
};

/// Sequential view over Dataset for consumers that just want a stream.
class BatchIterator {
 public:
  explicit BatchIterator(const Dataset& dataset, long start_step = 0)
      : dataset_(dataset), step_(start_step) {}

  std::vector<TrainingPair> next() { return dataset_.batch(step_++); }
  long step() const { return step_; }

 private:
  const Dataset& dataset_;
  long step_;
};

}  // namespace declip
