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

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <stdexcept>
#include <string>

#include "declip/image.hpp"

namespace declip {

/// Decodes PNG/JPEG (anything the codec layer supports) to 8-bit RGB.
/// Grayscale and alpha inputs are converted to plain 3-channel RGB.
inline Image8 load_image8(const std::string& path) {
  cv::Mat mat = cv::imread(path, cv::IMREAD_COLOR);  // BGR, 3 channels
  if (mat.empty()) throw std::runtime_error("cannot decode image: " + path);
  Image8 img(mat.rows, mat.cols, 3);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<cv::Vec3b>(y);
    for (int x = 0; x < mat.cols; ++x) {
      const size_t i = (static_cast<size_t>(y) * mat.cols + x) * 3;
      img.data[i + 0] = row[x][2];  // R
      img.data[i + 1] = row[x][1];  // G
      img.data[i + 2] = row[x][0];  // B
    }
  }
  return img;
}

inline ImageTensor load_image(const std::string& path) { return normalize(load_image8(path)); }

/// Writes lossless PNG. Reconstructions always go out as PNG so the codec
/// cannot re-introduce artifacts in the regions being repaired.
inline void save_png(const std::string& path, const ImageTensor& img) {
  require_valid(img, "save_png");
  const Image8 img8 = denormalize(img);
  cv::Mat mat(img8.height, img8.width, CV_8UC3);
  for (int y = 0; y < img8.height; ++y) {
    auto* row = mat.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img8.width; ++x) {
      const size_t i = (static_cast<size_t>(y) * img8.width + x) * 3;
      row[x][2] = img8.data[i + 0];
      row[x][1] = img8.data[i + 1];
      row[x][0] = img8.data[i + 2];
    }
  }
  if (!cv::imwrite(path, mat)) throw std::runtime_error("cannot write PNG: " + path);
}

}  // namespace declip
