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
#include "testutil.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "declip/image_io.hpp"

namespace testutil {

namespace fs = std::filesystem;

TempDir::TempDir() {
  std::string tmpl = (fs::temp_directory_path() / "declip_test_XXXXXX").string();
  if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string TempDir::file(const std::string& name) const {
  return (fs::path(path_) / name).string();
}

declip::ImageTensor random_u8_image(declip::Rng& rng, int h, int w) {
  declip::ImageTensor img(h, w);
  for (auto& v : img.data) v = static_cast<float>(rng.uniform_u32(0, 255)) / 255.f;
  return img;
}

declip::ImageTensor synthetic_photo(uint64_t seed, int h, int w) {
  declip::Rng rng = declip::make_rng(seed, 0xBEEF);
  declip::ImageTensor img(h, w);
  const double phase_r = rng.uniform_real() * 6.28;
  const double phase_g = rng.uniform_real() * 6.28;
  const bool diag = rng.uniform_u32(0, 1) == 1;

  struct Blob {
    double cy, cx, r, amp;
  };
  Blob blobs[3];
  for (auto& b : blobs) {
    b.cy = rng.uniform_real() * h;
    b.cx = rng.uniform_real() * w;
    b.r = (0.15 + 0.25 * rng.uniform_real()) * std::min(h, w);
    b.amp = rng.uniform_real() < 0.5 ? -0.8 : 0.8;
  }

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double u = static_cast<double>(x) / (w - 1);
      const double v = static_cast<double>(y) / (h - 1);
      const double ramp = diag ? 0.5 * (u + v) : u;
      double r = ramp;
      double g = 0.5 + 0.5 * std::sin(6.28 * u + phase_r) * (1.0 - v);
      double b = 1.0 - ramp;
      for (const auto& blob : blobs) {
        const double d2 = (y - blob.cy) * (y - blob.cy) + (x - blob.cx) * (x - blob.cx);
        const double k = blob.amp * std::exp(-d2 / (2.0 * blob.r * blob.r));
        r += k;
        g += 0.6 * k;
        b += 0.4 * k;
      }
      // Guarantee both tails of the range appear: a white and a black corner dot.
      img.at(y, x, 0) = std::clamp(static_cast<float>(r), 0.f, 1.f);
      img.at(y, x, 1) = std::clamp(static_cast<float>(g + std::sin(phase_g) * 0.1), 0.f, 1.f);
      img.at(y, x, 2) = std::clamp(static_cast<float>(b), 0.f, 1.f);
    }
  }
  for (int c = 0; c < 3; ++c) {
    img.at(0, 0, c) = 1.f;
    img.at(h - 1, w - 1, c) = 0.f;
  }
  return img;
}

void write_photo_dir(const std::string& dir, int n, int h, int w, uint64_t seed) {
  fs::create_directories(dir);
  for (int i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%02d.png", i);
    declip::save_png((fs::path(dir) / name).string(), synthetic_photo(seed + i, h, w));
  }
}

declip::nn::FeatureExtractor<float> test_extractor(std::vector<int> selected, uint64_t seed) {
  declip::Rng rng = declip::make_rng(seed, 0xF00D);
  return declip::nn::FeatureExtractor<float>::random_init(rng, std::move(selected));
}

}  // namespace testutil
