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
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "declip/datapipe.hpp"
#include "declip/image.hpp"
#include "declip/losses.hpp"
#include "declip/rng.hpp"

namespace declip {

/// Sentinel for a perfect reconstruction; above any achievable score and
/// keeps reports free of infinities.
constexpr double kPsnrCap = 100.0;

/// Per-entry membership for masked metrics. Membership is per (pixel,
/// channel), matching how clipping itself strikes individual channels.
using Region = std::vector<uint8_t>;

inline Region region_full(const ClipMask& mask) { return Region(mask.size(), 1); }

inline Region region_clipped(const ClipMask& mask) {
  Region r(mask.size(), 0);
  for (size_t i = 0; i < r.size(); ++i) r[i] = (mask.over[i] || mask.under[i]) ? 1 : 0;
  return r;
}

inline Region region_unclipped(const ClipMask& mask) {
  Region r(mask.size(), 0);
  for (size_t i = 0; i < r.size(); ++i) r[i] = (mask.over[i] || mask.under[i]) ? 0 : 1;
  return r;
}

namespace detail {

struct RegionSum {
  double sq_err = 0;
  size_t count = 0;
};

inline RegionSum masked_sq_err(const ImageTensor& a, const ImageTensor& b, const Region& region) {
  RegionSum s;
  for (size_t i = 0; i < a.data.size(); ++i) {
    if (!region[i]) continue;
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    s.sq_err += d * d;
    ++s.count;
  }
  return s;
}

inline double psnr_from_mse(double mse) {
  if (mse <= 0) return kPsnrCap;
  return std::min(10.0 * std::log10(1.0 / mse), kPsnrCap);
}

}  // namespace detail

/// 10 log10(1 / MSE) for [0,1] images; capped at 100 dB.
inline double psnr(const ImageTensor& a, const ImageTensor& b) {
  if (!a.same_dims(b)) throw std::invalid_argument("psnr: dimension mismatch");
  return detail::psnr_from_mse(mse_loss(a, b));
}

/// PSNR over only the (pixel, channel) entries selected by the region.
inline double masked_psnr(const ImageTensor& a, const ImageTensor& b, const Region& region) {
  if (!a.same_dims(b)) throw std::invalid_argument("masked_psnr: dimension mismatch");
  if (region.size() != a.data.size())
    throw std::invalid_argument("masked_psnr: region size mismatch");
  const auto s = detail::masked_sq_err(a, b, region);
  if (s.count == 0) throw std::invalid_argument("masked_psnr: empty region");
  return detail::psnr_from_mse(s.sq_err / static_cast<double>(s.count));
}

/**
 * Region-decomposed quality report. A full-image error number alone hides
 * whether a method actually repaired the saturated areas or quietly damaged
 * the healthy ones, so both regions are scored separately, together with the
 * drift the method introduced on pixels it should have left alone.
 */
struct EvalReport {
  double psnr_full = 0;
  double psnr_clipped_region = 0;
  double psnr_unclipped_region = 0;
  double nonclipped_drift = 0;   // mean |restored - clipped| over unclipped entries
  double clipped_fraction = 0;  // in [0, 1]
};

/// Scores a restoration against its pair. Region PSNRs use the pair's mask;
/// the full-image MSE is the exact count-weighted mean of the region MSEs.
/// An empty region scores the cap (there is nothing to get wrong).
inline EvalReport evaluate_pair(const ImageTensor& restored, const TrainingPair& pair) {
  if (!restored.same_dims(pair.ground_truth))
    throw std::invalid_argument("evaluate_pair: dimension mismatch");

  const Region clipped_region = region_clipped(pair.mask);
  const Region unclipped_region = region_unclipped(pair.mask);
  const auto s_clip = detail::masked_sq_err(restored, pair.ground_truth, clipped_region);
  const auto s_unclip = detail::masked_sq_err(restored, pair.ground_truth, unclipped_region);

  EvalReport r;
  const size_t total = s_clip.count + s_unclip.count;
  r.clipped_fraction = static_cast<double>(s_clip.count) / static_cast<double>(total);
  r.psnr_clipped_region =
      s_clip.count ? detail::psnr_from_mse(s_clip.sq_err / static_cast<double>(s_clip.count)) : kPsnrCap;
  r.psnr_unclipped_region =
      s_unclip.count ? detail::psnr_from_mse(s_unclip.sq_err / static_cast<double>(s_unclip.count))
                     : kPsnrCap;
  r.psnr_full = detail::psnr_from_mse((s_clip.sq_err + s_unclip.sq_err) / static_cast<double>(total));

  double drift = 0;
  size_t n_unclip = 0;
  for (size_t i = 0; i < restored.data.size(); ++i) {
    if (!unclipped_region[i]) continue;
    drift += std::fabs(static_cast<double>(restored.data[i]) - static_cast<double>(pair.clipped.data[i]));
    ++n_unclip;
  }
  r.nonclipped_drift = n_unclip ? drift / static_cast<double>(n_unclip) : 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// Pairwise study harness
// ---------------------------------------------------------------------------

/**
 * One pairwise trial: the reference in the center, the two candidate
 * reconstructions on either side in an order drawn from the trial seed. The
 * answer key records which method ended up on which side.
 */
struct StudyTrial {
  ImageTensor montage;
  std::string trial_id;
  char left_method;   // 'A' or 'B'
  char right_method;  // 'A' or 'B'
  uint64_t seed = 0;
};

/// Montage layout: [left | reference | right] with uniform mid-gray padding
/// bands between panels. Width is 3*W + 2*pad.
inline StudyTrial make_study_trial(const ImageTensor& ground_truth, const ImageTensor& rec_a,
                                   const ImageTensor& rec_b, const std::string& trial_id,
                                   uint64_t seed, int pad = 8) {
  if (!ground_truth.same_dims(rec_a) || !ground_truth.same_dims(rec_b))
    throw std::invalid_argument("make_study_trial: dimension mismatch");
  if (pad < 0) throw std::invalid_argument("make_study_trial: negative padding");

  Rng rng = make_rng(seed, rng_stream::kStudyTrial);
  const bool a_left = rng.uniform_u32(0, 1) == 1;
  const ImageTensor& left = a_left ? rec_a : rec_b;
  const ImageTensor& right = a_left ? rec_b : rec_a;

  const int h = ground_truth.height, w = ground_truth.width;
  StudyTrial trial;
  trial.trial_id = trial_id;
  trial.left_method = a_left ? 'A' : 'B';
  trial.right_method = a_left ? 'B' : 'A';
  trial.seed = seed;
  trial.montage = ImageTensor(h, 3 * w + 2 * pad);
  for (auto& v : trial.montage.data) v = 0.5f;

  const auto blit = [&trial, h, w](const ImageTensor& src, int x0) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) trial.montage.at(y, x0 + x, c) = src.at(y, x, c);
  };
  blit(left, 0);
  blit(ground_truth, w + pad);
  blit(right, 2 * (w + pad));
  return trial;
}

/// What tally needs from each trial; written alongside the montages.
struct StudyKey {
  std::string trial_id;
  std::string image_id;
  char left_method;
  char right_method;
};

struct StudyResponse {
  std::string trial_id;
  char chosen_side;  // 'L' or 'R'
};

struct PreferenceTally {
  std::map<char, size_t> chosen_count;                       // method -> count
  std::map<char, double> preference_rate;                    // method -> fraction
  std::map<std::string, std::map<char, size_t>> per_image;  // image_id -> method -> count
  size_t total = 0;
};

/**
 * Resolves each response against its trial key and reports the fraction of
 * trials each method won, overall and per source image. Multiple responses
 * per trial are expected (one per participant).
 */
inline PreferenceTally tally_preferences(const std::vector<StudyResponse>& responses,
                                         const std::vector<StudyKey>& keys) {
  if (responses.empty()) throw std::invalid_argument("tally_preferences: no responses");
  std::map<std::string, const StudyKey*> by_id;
  for (const auto& k : keys) by_id[k.trial_id] = &k;

  PreferenceTally t;
  t.chosen_count['A'] = 0;
  t.chosen_count['B'] = 0;
  for (const auto& r : responses) {
    const auto it = by_id.find(r.trial_id);
    if (it == by_id.end())
      throw std::invalid_argument("tally_preferences: response for unknown trial '" + r.trial_id + "'");
    if (r.chosen_side != 'L' && r.chosen_side != 'R')
      throw std::invalid_argument("tally_preferences: bad side '" + std::string(1, r.chosen_side) +
                                  "' for trial '" + r.trial_id + "'");
    const char method = r.chosen_side == 'L' ? it->second->left_method : it->second->right_method;
    ++t.chosen_count[method];
    ++t.per_image[it->second->image_id][method];
    ++t.total;
  }
  for (const auto& [method, count] : t.chosen_count)
    t.preference_rate[method] = static_cast<double>(count) / static_cast<double>(t.total);
  return t;
}

}  // namespace declip
