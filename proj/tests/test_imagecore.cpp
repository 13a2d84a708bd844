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
#include <catch2/catch_amalgamated.hpp>

#include "declip/image.hpp"
#include "testutil.hpp"

using namespace declip;
using Catch::Approx;

namespace {

ClipThresholds random_thresholds(Rng& rng) {
  const float hi = static_cast<float>(rng.uniform_u32(175, 255)) / 255.f;
  const float lo = static_cast<float>(rng.uniform_u32(1, 80)) / 255.f;
  return ClipThresholds(lo, hi);
}

}  // namespace

TEST_CASE("normalize maps the 8-bit range onto [0,1]", "[imagecore]") {
  Image8 img(1, 3, 3);
  img.data = {0, 0, 0, 255, 255, 255, 128, 128, 128};
  const ImageTensor out = normalize(img);
  CHECK(out.at(0, 0, 0) == 0.f);
  CHECK(out.at(0, 1, 0) == 1.f);
  CHECK(out.at(0, 2, 0) == Approx(128.0 / 255.0).epsilon(1e-7));
}

TEST_CASE("normalize rejects non-3-channel input", "[imagecore]") {
  Image8 gray(2, 2, 1);
  gray.data.assign(4, 7);
  CHECK_THROWS_AS(normalize(gray), std::invalid_argument);
  Image8 rgba(2, 2, 4);
  rgba.data.assign(16, 7);
  CHECK_THROWS_AS(normalize(rgba), std::invalid_argument);
  Image8 bad(2, 2, 3);
  bad.data.assign(5, 0);  // wrong payload size
  CHECK_THROWS_AS(normalize(bad), std::invalid_argument);
}

TEST_CASE("normalize/denormalize round-trips every 8-bit value", "[imagecore]") {
  Image8 img(16, 16, 3);
  for (int v = 0; v < 256; ++v)
    for (int c = 0; c < 3; ++c) img.data[static_cast<size_t>(v) * 3 + c] = static_cast<uint8_t>(v);
  const Image8 back = denormalize(normalize(img));
  REQUIRE(back.data == img.data);
}

TEST_CASE("apply_clip stretch remaps the surviving range", "[imagecore]") {
  ImageTensor img(1, 3);
  img.data = {0.9f, 0.45f, 0.1f, 0.9f, 0.45f, 0.1f, 0.9f, 0.45f, 0.1f};
  const ClipThresholds t(0.1f, 0.8f);
  const ImageTensor out = apply_clip(img, t, ClipMode::kStretch);
  CHECK(out.at(0, 0, 0) == 1.f);                            // clamped to hi, lands exactly on 1
  CHECK(out.at(0, 0, 1) == Approx(0.5).epsilon(1e-6));      // (0.45-0.1)/0.7
  CHECK(out.at(0, 0, 2) == 0.f);                            // equals lo, lands exactly on 0
}

TEST_CASE("apply_clip plateau inside the range is the identity", "[imagecore]") {
  Rng rng(11);
  ImageTensor img(8, 8);
  for (auto& v : img.data) v = 0.35f + 0.3f * static_cast<float>(rng.uniform_real());
  const ClipThresholds t(0.3f, 0.7f);
  const ImageTensor out = apply_clip(img, t, ClipMode::kPlateau);
  REQUIRE(out.data == img.data);
}

TEST_CASE("thresholds reject inverted or out-of-range bounds", "[imagecore]") {
  CHECK_THROWS_AS(ClipThresholds(0.8f, 0.1f), std::invalid_argument);   // hi <= lo
  CHECK_THROWS_AS(ClipThresholds(0.0f, 0.8f), std::invalid_argument);   // lo below 1/255
  CHECK_THROWS_AS(ClipThresholds(0.5f, 0.8f), std::invalid_argument);   // lo above 80/255
  CHECK_THROWS_AS(ClipThresholds(0.1f, 0.5f), std::invalid_argument);   // hi below 175/255
  CHECK_THROWS_AS(ClipThresholds(0.1f, 1.1f), std::invalid_argument);   // hi above 1
  CHECK_NOTHROW(ClipThresholds(1.f / 255.f, 1.f));
  CHECK_NOTHROW(ClipThresholds(80.f / 255.f, 175.f / 255.f));
}

TEST_CASE("compute_clip_mask flags boundary values", "[imagecore]") {
  const ClipThresholds t(0.2f, 0.8f);
  ImageTensor img(1, 3);
  img.data = {0.8f, 0.5f, 0.2f, 0.81f, 0.5f, 0.19f, 0.5f, 0.5f, 0.5f};
  const ClipMask mask = compute_clip_mask(img, t);
  CHECK(mask.over[0] == 1);   // v == hi counts as over
  CHECK(mask.over[3] == 1);
  CHECK(mask.under[2] == 1);  // v == lo counts as under
  CHECK(mask.under[5] == 1);
  CHECK(mask.over[1] == 0);
  CHECK(mask.under[1] == 0);
  for (size_t i = 6; i < 9; ++i) {
    CHECK(mask.over[i] == 0);
    CHECK(mask.under[i] == 0);
  }
}

TEST_CASE("mask of stretch-clipped output equals mask of original", "[imagecore]") {
  // Brute-force cross-check on 100 random 16x16 images: saturation detected
  // in the clipped result (eps = 0) must coincide with the thresholds mask
  // of the original, pixel for pixel.
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const ImageTensor img = testutil::random_u8_image(rng, 16, 16);
    const ClipThresholds t = random_thresholds(rng);
    const ClipMask expected = compute_clip_mask(img, t);
    const ClipMask detected = detect_saturation(apply_clip(img, t, ClipMode::kStretch), 0.f);
    REQUIRE(detected.over == expected.over);
    REQUIRE(detected.under == expected.under);
  }
}

TEST_CASE("over and under are disjoint for any valid thresholds", "[imagecore]") {
  Rng rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    const ImageTensor img = testutil::random_u8_image(rng, 12, 12);
    const ClipMask mask = compute_clip_mask(img, random_thresholds(rng));
    for (size_t i = 0; i < mask.size(); ++i) REQUIRE((mask.over[i] & mask.under[i]) == 0);
  }
}

TEST_CASE("plateau clipping is idempotent bit-exactly", "[imagecore]") {
  Rng rng(44);
  for (int trial = 0; trial < 50; ++trial) {
    const ImageTensor img = testutil::random_u8_image(rng, 16, 16);
    const ClipThresholds t = random_thresholds(rng);
    const ImageTensor once = apply_clip(img, t, ClipMode::kPlateau);
    const ImageTensor twice = apply_clip(once, t, ClipMode::kPlateau);
    REQUIRE(twice.data == once.data);
  }
}

TEST_CASE("stretch maps lo to 0 and hi to 1 exactly, interior stays interior", "[imagecore]") {
  Rng rng(45);
  for (int trial = 0; trial < 50; ++trial) {
    const ClipThresholds t = random_thresholds(rng);
    ImageTensor img(2, 2);
    img.data = {t.lo, t.hi, 0.5f, 0.4f, 0.45f, 0.5f, t.lo, t.hi, 0.5f, 0.4f, 0.45f, 0.5f};
    const ImageTensor out = apply_clip(img, t, ClipMode::kStretch);
    REQUIRE(out.data[0] == 0.f);
    REQUIRE(out.data[1] == 1.f);
    for (size_t i : {size_t(2), size_t(3), size_t(4), size_t(5)}) {
      REQUIRE(out.data[i] > 0.f);
      REQUIRE(out.data[i] < 1.f);
    }
  }
}

TEST_CASE("detect_saturation basics", "[imagecore]") {
  ImageTensor mid(4, 4);
  for (auto& v : mid.data) v = 0.5f;
  CHECK(detect_saturation(mid, 0.01f).empty());

  ImageTensor white(4, 4);
  for (auto& v : white.data) v = 1.f;
  const ClipMask m = detect_saturation(white);
  CHECK(m.count_over() == white.size());
  CHECK(m.count_under() == 0);

  CHECK_THROWS_AS(detect_saturation(mid, 0.5f), std::invalid_argument);
  CHECK_THROWS_AS(detect_saturation(mid, -0.1f), std::invalid_argument);
}

TEST_CASE("visualize_mask paints only fully saturated pixels", "[imagecore]") {
  Rng rng(46);
  const ImageTensor img = testutil::random_u8_image(rng, 8, 8);

  SECTION("empty mask is the identity, bit-exact") {
    const ClipMask empty(8, 8);
    REQUIRE(visualize_mask(img, empty).data == img.data);
  }

  SECTION("all-over mask paints everything red") {
    ClipMask all(8, 8);
    std::fill(all.over.begin(), all.over.end(), uint8_t(1));
    const ImageTensor out = visualize_mask(img, all);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        CHECK(out.at(y, x, 0) == 1.f);
        CHECK(out.at(y, x, 1) == 0.f);
        CHECK(out.at(y, x, 2) == 0.f);
      }
  }

  SECTION("a pixel saturated in only two channels passes through") {
    ClipMask partial(8, 8);
    partial.over[(3 * 8 + 3) * 3 + 0] = 1;
    partial.over[(3 * 8 + 3) * 3 + 1] = 1;  // blue channel not saturated
    const ImageTensor out = visualize_mask(img, partial);
    REQUIRE(out.data == img.data);
  }

  SECTION("under in all channels paints green") {
    ClipMask under(8, 8);
    for (int c = 0; c < 3; ++c) under.under[(2 * 8 + 5) * 3 + c] = 1;
    const ImageTensor out = visualize_mask(img, under);
    CHECK(out.at(2, 5, 0) == 0.f);
    CHECK(out.at(2, 5, 1) == 1.f);
    CHECK(out.at(2, 5, 2) == 0.f);
  }

  SECTION("dimension mismatch is rejected") {
    const ClipMask wrong(4, 4);
    CHECK_THROWS_AS(visualize_mask(img, wrong), std::invalid_argument);
  }
}

TEST_CASE("resize_bicubic keeps values in range and same-size is identity", "[imagecore]") {
  Rng rng(47);
  const ImageTensor img = testutil::random_u8_image(rng, 10, 14);
  REQUIRE(resize_bicubic(img, 10, 14).data == img.data);

  const ImageTensor up = resize_bicubic(img, 23, 31);
  REQUIRE(up.height == 23);
  REQUIRE(up.width == 31);
  for (float v : up.data) {
    REQUIRE(v >= 0.f);
    REQUIRE(v <= 1.f);
  }

  // A constant image stays constant under resampling.
  ImageTensor flat(6, 6);
  for (auto& v : flat.data) v = 0.25f;
  const ImageTensor flat_up = resize_bicubic(flat, 13, 9);
  for (float v : flat_up.data) REQUIRE(v == Approx(0.25f).margin(1e-6));
}
