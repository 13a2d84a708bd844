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
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "declip/datapipe.hpp"
#include "declip/losses.hpp"
#include "declip/nn/discriminator.hpp"
#include "declip/nn/generator.hpp"
#include "declip/nn/vgg.hpp"
#include "declip/rng.hpp"
#include "declip/serialize.hpp"

namespace declip {

struct TrainConfig {
  double gen_lr = 1e-3;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::optional<double> disc_lr;  // unset: 0.1 x gen_lr
  double grad_clip_norm = 5.0;
  long steps = 1000;
  LossWeights loss_weights;
  uint64_t seed = 0;
  long checkpoint_every = 100;
  int disc_steps_per_gen = 1;

  double resolved_disc_lr() const { return disc_lr.value_or(0.1 * gen_lr); }

  void validate() const {
    if (gen_lr <= 0) throw std::invalid_argument("gen_lr must be positive");
    if (resolved_disc_lr() <= 0) throw std::invalid_argument("disc_lr must be positive");
    if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1)
      throw std::invalid_argument("adam betas must lie in [0, 1)");
    if (grad_clip_norm <= 0) throw std::invalid_argument("grad_clip_norm must be positive");
    if (steps < 0) throw std::invalid_argument("steps must be >= 0");
    if (checkpoint_every < 1) throw std::invalid_argument("checkpoint_every must be >= 1");
    if (disc_steps_per_gen < 1) throw std::invalid_argument("disc_steps_per_gen must be >= 1");
    loss_weights.validate();
  }
};

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m, v;
  long t = 0;

  void init(const std::vector<nn::ParamRef<T>>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p.value->size(), T(0));
      v.emplace_back(p.value->size(), T(0));
    }
    t = 0;
  }

  void step(const std::vector<nn::ParamRef<T>>& params, double lr, double b1, double b2,
            double eps) {
    ++t;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (size_t i = 0; i < params.size(); ++i) {
      auto& val = *params[i].value;
      const auto& grad = *params[i].grad;
      auto& mi = m[i];
      auto& vi = v[i];
      for (size_t j = 0; j < val.size(); ++j) {
        const double g = static_cast<double>(grad[j]);
        const double mn = b1 * static_cast<double>(mi[j]) + (1.0 - b1) * g;
        const double vn = b2 * static_cast<double>(vi[j]) + (1.0 - b2) * g * g;
        mi[j] = static_cast<T>(mn);
        vi[j] = static_cast<T>(vn);
        val[j] = static_cast<T>(static_cast<double>(val[j]) -
                                lr * (mn / bc1) / (std::sqrt(vn / bc2) + eps));
      }
    }
  }
};

template <typename T>
void sgd_step(const std::vector<nn::ParamRef<T>>& params, double lr) {
  for (const auto& p : params) {
    auto& val = *p.value;
    const auto& grad = *p.grad;
    for (size_t j = 0; j < val.size(); ++j)
      val[j] = static_cast<T>(static_cast<double>(val[j]) - lr * static_cast<double>(grad[j]));
  }
}

template <typename T>
double global_grad_norm(const std::vector<nn::ParamRef<T>>& params) {
  double s = 0;
  for (const auto& p : params)
    for (T g : *p.grad) s += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(s);
}

/// Scales all gradients so the global norm is at most max_norm.
/// Returns the pre-clip norm.
template <typename T>
double clip_gradients(const std::vector<nn::ParamRef<T>>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm && norm > 0) {
    const T scale = static_cast<T>(max_norm / norm);
    for (const auto& p : params)
      for (T& g : *p.grad) g *= scale;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Training state
// ---------------------------------------------------------------------------

template <typename T>
const char* scalar_name();
template <>
inline const char* scalar_name<float>() {
  return "f32";
}
template <>
inline const char* scalar_name<double>() {
  return "f64";
}

template <typename T = float>
struct TrainState {
  TrainConfig cfg;
  nn::Generator<T> gen;
  nn::Discriminator<T> disc;
  AdamState<T> gen_opt;
  long step = 0;
  uint64_t dataset_fingerprint = 0;
  std::string config_json;  // tool config captured into every checkpoint

  TrainState(const TrainConfig& cfg_, const nn::GeneratorConfig& gcfg,
             const nn::DiscriminatorConfig& dcfg)
      : cfg(cfg_), gen(gcfg), disc(dcfg) {
    cfg.validate();
    Rng grng = make_rng(cfg.seed, rng_stream::kGeneratorInit);
    gen.init(grng);
    Rng drng = make_rng(cfg.seed, rng_stream::kDiscriminatorInit);
    disc.init(drng);
    gen_opt.init(gen.trainable_params());
  }

  std::string arch_descriptor() {
    return gen.config().descriptor() + "|" + disc.config().descriptor() + "|" + scalar_name<T>();
  }
};

struct StepMetrics {
  double mse = 0;
  double per = 0;
  double adv = 0;
  double disc = 0;
  double composite = 0;
  double grad_norm = 0;  // generator, before clipping
};

// ---------------------------------------------------------------------------
// Steps
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
[[noreturn]] void abort_non_finite(const char* where, long step, const StepMetrics& m) {
  std::ostringstream os;
  os << where << ": non-finite loss at step " << step << " (mse=" << m.mse << " per=" << m.per
     << " adv=" << m.adv << " disc=" << m.disc << ")";
  throw std::runtime_error(os.str());
}

}  // namespace detail

/**
 * Composite-loss forward and backward for the generator: populates the
 * generator's parameter gradients and returns the loss terms, without
 * touching any parameters. The critic and the feature extractor see
 * gradients flow through them but are never written.
 */
template <typename T>
StepMetrics generator_compute_grads(TrainState<T>& state, nn::FeatureExtractor<T>* vgg,
                                    const Tensor<T>& clipped, const Tensor<T>& ground_truth) {
  const LossWeights& w = state.cfg.loss_weights;
  StepMetrics metrics;

  state.gen.zero_grad();
  auto out = state.gen.forward(clipped, nn::NetMode::kTrain);

  metrics.mse = mse_loss(out.restored, ground_truth);
  Tensor<T> d_restored = mse_loss_grad(out.restored, ground_truth);
  for (auto& g : d_restored.v) g = static_cast<T>(w.alpha * static_cast<double>(g));

  if (w.beta > 0) {
    if (!vgg) throw std::invalid_argument("generator step: perceptual weight > 0 but no feature extractor");
    Tensor<T> d_per;
    metrics.per = perceptual_loss_with_grad(*vgg, out.restored, ground_truth, d_per);
    for (size_t i = 0; i < d_restored.v.size(); ++i)
      d_restored.v[i] += static_cast<T>(w.beta * static_cast<double>(d_per.v[i]));
  }

  if (w.gamma > 0) {
    // Training-mode critic pass on the fake batch, but without disturbing
    // the critic's running statistics: this is not a critic update.
    const auto fake_logits = state.disc.forward(out.restored, /*train=*/true,
                                                /*update_running=*/false);
    metrics.adv = adversarial_generator_loss(fake_logits);
    const auto d_logits = adversarial_generator_loss_grad(fake_logits);
    Tensor<T> d_adv = state.disc.backward(d_logits, /*want_input_grad=*/true,
                                          /*want_param_grads=*/false);
    for (size_t i = 0; i < d_restored.v.size(); ++i)
      d_restored.v[i] += static_cast<T>(w.gamma * static_cast<double>(d_adv.v[i]));
  }

  metrics.composite = composite_loss(w, metrics.mse, metrics.per, metrics.adv);
  if (!std::isfinite(metrics.composite))
    detail::abort_non_finite<T>("generator_step", state.step, metrics);

  state.gen.backward(d_restored);
  return metrics;
}

/// The training-mode composite loss value alone, via the same arithmetic as
/// generator_compute_grads but with no state mutated anywhere.
template <typename T>
double generator_composite_loss(const TrainState<T>& state, const nn::FeatureExtractor<T>* vgg,
                                const Tensor<T>& clipped, const Tensor<T>& ground_truth) {
  const LossWeights& w = state.cfg.loss_weights;
  const auto out = state.gen.forward_detached(clipped);
  const double mse = mse_loss(out.restored, ground_truth);
  double per = 0;
  if (w.beta > 0) {
    if (!vgg) throw std::invalid_argument("generator step: perceptual weight > 0 but no feature extractor");
    per = perceptual_loss(*vgg, out.restored, ground_truth);
  }
  double adv = 0;
  if (w.gamma > 0) {
    const auto fake_logits = state.disc.forward_detached(out.restored);
    adv = adversarial_generator_loss(fake_logits);
  }
  return composite_loss(w, mse, per, adv);
}

/**
 * One generator update: forward, composite loss (pixel + perceptual +
 * adversarial), backward, global-norm gradient clip, Adam. Touches only
 * generator parameters.
 */
template <typename T>
StepMetrics generator_step(TrainState<T>& state, nn::FeatureExtractor<T>* vgg,
                           const Tensor<T>& clipped, const Tensor<T>& ground_truth) {
  StepMetrics metrics = generator_compute_grads(state, vgg, clipped, ground_truth);
  auto params = state.gen.trainable_params();
  metrics.grad_norm = clip_gradients(params, state.cfg.grad_clip_norm);
  if (!std::isfinite(metrics.grad_norm))
    detail::abort_non_finite<T>("generator_step", state.step, metrics);
  state.gen_opt.step(params, state.cfg.gen_lr, state.cfg.adam_beta1, state.cfg.adam_beta2,
                     state.cfg.adam_eps);
  return metrics;
}

/**
 * One critic update by plain SGD on real (ground truth) and detached fake
 * batches. Generator parameters, including its batch-norm statistics, are
 * bit-identical before and after.
 */
template <typename T>
double discriminator_step(TrainState<T>& state, const Tensor<T>& clipped,
                          const Tensor<T>& ground_truth) {
  state.disc.zero_grad();

  // Real pass first, then fake; both update the critic's running stats.
  const auto real_logits = state.disc.forward(ground_truth, /*train=*/true, /*update_running=*/true);
  const auto d_real = discriminator_loss_grad_real(real_logits);
  state.disc.backward(d_real, /*want_input_grad=*/false, /*want_param_grads=*/true);

  const auto fake = state.gen.forward_detached(clipped);
  const auto fake_logits = state.disc.forward(fake.restored, /*train=*/true, /*update_running=*/true);
  const auto d_fake = discriminator_loss_grad_fake(fake_logits);
  state.disc.backward(d_fake, /*want_input_grad=*/false, /*want_param_grads=*/true);

  const double loss = discriminator_loss(real_logits, fake_logits);
  if (!std::isfinite(loss)) {
    StepMetrics m;
    m.disc = loss;
    detail::abort_non_finite<T>("discriminator_step", state.step, m);
  }
  sgd_step(state.disc.trainable_params(), state.cfg.resolved_disc_lr());
  return loss;
}

/// Stacks a batch of training pairs into (clipped, ground_truth) tensors.
template <typename T = float>
std::pair<Tensor<T>, Tensor<T>> batch_tensors(const std::vector<TrainingPair>& batch) {
  if (batch.empty()) throw std::invalid_argument("batch_tensors: empty batch");
  std::vector<ImageTensor> clipped, gt;
  clipped.reserve(batch.size());
  gt.reserve(batch.size());
  for (const auto& p : batch) {
    clipped.push_back(p.clipped);
    gt.push_back(p.ground_truth);
  }
  return {batch_to_tensor<T>(clipped), batch_to_tensor<T>(gt)};
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

constexpr char kCheckpointMagic[8] = {'D', 'C', 'L', 'P', 'C', 'K', 'P', '1'};

template <typename T>
void save_checkpoint(TrainState<T>& state, const std::string& path) {
  BinaryWriter out(path);
  out.bytes(kCheckpointMagic, 8);
  out.u32(1);
  out.str(state.arch_descriptor());
  out.str(state.config_json);
  out.u64(state.cfg.seed);
  out.u64(state.dataset_fingerprint);
  out.u64(static_cast<uint64_t>(state.step));
  out.u64(static_cast<uint64_t>(state.gen_opt.t));

  const auto gen_state = state.gen.state_tensors();
  out.u32(static_cast<uint32_t>(gen_state.size()));
  for (auto* v : gen_state) out.vec(*v);

  const auto disc_state = state.disc.state_tensors();
  out.u32(static_cast<uint32_t>(disc_state.size()));
  for (auto* v : disc_state) out.vec(*v);

  out.u32(static_cast<uint32_t>(state.gen_opt.m.size()));
  for (const auto& v : state.gen_opt.m) out.vec(v);
  for (const auto& v : state.gen_opt.v) out.vec(v);

  out.u64(out.hash());
  out.close();
}

/**
 * Restores a checkpoint into a state built from the same configuration.
 * Mismatched architecture, scalar type or a damaged file are rejected
 * outright rather than silently producing a diverging run. Seed equality is
 * enforced when resuming training (the data stream derives from it) but not
 * for inference-only loads.
 */
template <typename T>
void load_checkpoint(TrainState<T>& state, const std::string& path, bool check_seed = true) {
  BinaryReader in(path);
  char magic[8];
  in.bytes(magic, 8);
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  if (in.u32() != 1) throw std::runtime_error("unsupported checkpoint version: " + path);

  const std::string arch = in.str();
  if (arch != state.arch_descriptor())
    throw std::runtime_error("checkpoint architecture mismatch: file has [" + arch +
                             "], run expects [" + state.arch_descriptor() + "]");
  const std::string config_json = in.str();
  const uint64_t seed = in.u64();
  if (check_seed && seed != state.cfg.seed)
    throw std::runtime_error("checkpoint seed mismatch: file has " + std::to_string(seed) +
                             ", run expects " + std::to_string(state.cfg.seed));
  const uint64_t dataset_fp = in.u64();
  const uint64_t step = in.u64();
  const uint64_t adam_t = in.u64();

  const auto fill = [&in, &path](std::vector<std::vector<T>*> dst) {
    const uint32_t n = in.u32();
    if (n != dst.size()) throw std::runtime_error("checkpoint tensor count mismatch: " + path);
    for (auto* v : dst) {
      auto loaded = in.vec<T>();
      if (loaded.size() != v->size())
        throw std::runtime_error("checkpoint tensor size mismatch: " + path);
      *v = std::move(loaded);
    }
  };
  fill(state.gen.state_tensors());
  fill(state.disc.state_tensors());

  const uint32_t n_opt = in.u32();
  if (n_opt != state.gen_opt.m.size())
    throw std::runtime_error("checkpoint optimizer tensor count mismatch: " + path);
  for (auto& v : state.gen_opt.m) {
    auto loaded = in.vec<T>();
    if (loaded.size() != v.size()) throw std::runtime_error("checkpoint optimizer size mismatch");
    v = std::move(loaded);
  }
  for (auto& v : state.gen_opt.v) {
    auto loaded = in.vec<T>();
    if (loaded.size() != v.size()) throw std::runtime_error("checkpoint optimizer size mismatch");
    v = std::move(loaded);
  }
  in.verify_checksum("checkpoint");

  state.step = static_cast<long>(step);
  state.gen_opt.t = static_cast<long>(adam_t);
  state.dataset_fingerprint = dataset_fp;
  state.config_json = config_json;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainIo {
  std::string checkpoint_dir;
  std::string metrics_path;  // empty: no metrics log
};

inline std::string latest_checkpoint_path(const std::string& checkpoint_dir) {
  return (std::filesystem::path(checkpoint_dir) / "latest.dcp").string();
}

/**
 * Alternating optimization: one generator step, then `disc_steps_per_gen`
 * critic steps per iteration, on the same deterministic batch. Checkpoints
 * land in io.checkpoint_dir every checkpoint_every steps and at the end;
 * per-step loss terms append to the metrics log as plain text lines
 * "step mse per adv disc". A run interrupted between steps resumes from
 * latest.dcp and reproduces the uninterrupted trajectory exactly.
 */
template <typename T = float>
TrainState<T> train(const TrainConfig& tcfg, const DatasetConfig& dcfg,
                    nn::FeatureExtractor<T>* vgg, const TrainIo& io,
                    const std::string& config_json = "", bool resume = true,
                    nn::GeneratorConfig gcfg = {}, nn::DiscriminatorConfig dccfg = {}) {
  tcfg.validate();
  if (tcfg.loss_weights.beta > 0 && !vgg)
    throw std::invalid_argument("train: perceptual weight > 0 requires feature-extractor weights");

  Dataset dataset(dcfg);

  dccfg.input_size = dcfg.crop_size;
  TrainState<T> state(tcfg, gcfg, dccfg);
  state.dataset_fingerprint = dataset.fingerprint();
  state.config_json = config_json;

  namespace fs = std::filesystem;
  if (!io.checkpoint_dir.empty()) fs::create_directories(io.checkpoint_dir);

  const std::string latest = latest_checkpoint_path(io.checkpoint_dir);
  if (resume && !io.checkpoint_dir.empty() && fs::exists(latest)) {
    const uint64_t fresh_fp = state.dataset_fingerprint;
    load_checkpoint(state, latest);
    if (state.dataset_fingerprint != fresh_fp)
      throw std::runtime_error("resume rejected: dataset changed since checkpoint was written");
  }

  std::ofstream metrics;
  if (!io.metrics_path.empty()) {
    metrics.open(io.metrics_path, std::ios::app);
    if (!metrics) throw std::runtime_error("cannot open metrics log: " + io.metrics_path);
  }

  const auto checkpoint = [&](TrainState<T>& s) {
    if (io.checkpoint_dir.empty()) return;
    const std::string numbered =
        (fs::path(io.checkpoint_dir) / ("ckpt_" + std::to_string(s.step) + ".dcp")).string();
    save_checkpoint(s, numbered);
    save_checkpoint(s, latest);
  };

  if (state.step >= tcfg.steps) {
    checkpoint(state);
    return state;
  }

  while (state.step < tcfg.steps) {
    const auto batch = dataset.batch(state.step);
    const auto [clipped, gt] = batch_tensors<T>(batch);

    const StepMetrics gm = generator_step(state, vgg, clipped, gt);
    double disc_loss = 0;
    for (int r = 0; r < tcfg.disc_steps_per_gen; ++r)
      disc_loss = discriminator_step(state, clipped, gt);

    if (metrics.is_open()) {
      // max_digits10 keeps the text log a faithful record of the doubles.
      metrics << state.step << ' ' << std::setprecision(17) << gm.mse << ' ' << gm.per << ' '
              << gm.adv << ' ' << disc_loss << '\n';
      metrics.flush();
    }

    ++state.step;
    if (state.step % tcfg.checkpoint_every == 0 && state.step < tcfg.steps) checkpoint(state);
  }
  checkpoint(state);
  return state;
}

}  // namespace declip
