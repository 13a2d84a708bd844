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

#include <fstream>
#include <json.hpp>
#include <stdexcept>
#include <string>

#include "declip/datapipe.hpp"
#include "declip/serialize.hpp"
#include "declip/trainer.hpp"

namespace declip {

/**
 * Declarative configuration for the command-line tools: one JSON file, every
 * key optional with a documented default, unknown keys rejected. The
 * canonical dump of the loaded config is copied into every checkpoint, so a
 * training run's exact setup is always recoverable from its artifacts.
 */
struct ToolConfig {
  uint64_t seed = 0;
  DatasetConfig dataset;
  TrainConfig train;

  struct Paths {
    std::string vgg_weights;
    std::string checkpoint_dir = "checkpoints";
    std::string output_dir = "out";
  } paths;

  double saturation_eps = 1.0 / 255.0;
  int study_pad = 8;

  static ToolConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error("config parse error in " + path + ": " + e.what());
    }
    return from_json(j);
  }

  static ToolConfig from_json(const nlohmann::json& j) {
    ToolConfig c;
    if (!j.is_object()) throw std::runtime_error("config: top level must be an object");
    for (const auto& [key, value] : j.items()) {
      if (key == "seed") {
        c.seed = get<uint64_t>(value, "seed");
      } else if (key == "dataset") {
        parse_dataset(value, c.dataset);
      } else if (key == "train") {
        parse_train(value, c.train);
      } else if (key == "paths") {
        parse_paths(value, c.paths);
      } else if (key == "eval") {
        parse_eval(value, c);
      } else if (key == "study") {
        parse_study(value, c);
      } else {
        throw std::runtime_error("config: unknown key '" + key + "'");
      }
    }
    c.dataset.seed = c.seed;
    c.train.seed = c.seed;
    c.validate();
    return c;
  }

  void validate() const {
    dataset.validate();
    train.validate();
    if (saturation_eps < 0 || saturation_eps >= 0.5)
      throw std::runtime_error("config: eval.saturation_eps must be in [0, 0.5)");
    if (study_pad < 0) throw std::runtime_error("config: study.pad must be >= 0");
  }

  /// Normalized dump with every key present; independent of the input file's
  /// formatting and key order.
  std::string canonical_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["dataset"]["source_dir"] = dataset.source_dir;
    j["dataset"]["crop_size"] = dataset.crop_size;
    j["dataset"]["batch_size"] = dataset.batch_size;
    j["dataset"]["clip_mode"] = to_string(dataset.clip_mode);
    j["dataset"]["recursive"] = dataset.recursive;
    j["train"]["gen_lr"] = train.gen_lr;
    j["train"]["adam_beta1"] = train.adam_beta1;
    j["train"]["adam_beta2"] = train.adam_beta2;
    j["train"]["adam_eps"] = train.adam_eps;
    if (train.disc_lr.has_value())
      j["train"]["disc_lr"] = *train.disc_lr;
    else
      j["train"]["disc_lr"] = nullptr;
    j["train"]["grad_clip_norm"] = train.grad_clip_norm;
    j["train"]["steps"] = train.steps;
    j["train"]["checkpoint_every"] = train.checkpoint_every;
    j["train"]["disc_steps_per_gen"] = train.disc_steps_per_gen;
    j["train"]["alpha"] = train.loss_weights.alpha;
    j["train"]["beta"] = train.loss_weights.beta;
    j["train"]["gamma"] = train.loss_weights.gamma;
    j["paths"]["vgg_weights"] = paths.vgg_weights;
    j["paths"]["checkpoint_dir"] = paths.checkpoint_dir;
    j["paths"]["output_dir"] = paths.output_dir;
    j["eval"]["saturation_eps"] = saturation_eps;
    j["study"]["pad"] = study_pad;
    return j.dump(2);
  }

  uint64_t fingerprint() const { return fnv1a(canonical_json()); }

 private:
  template <typename T>
  static T get(const nlohmann::json& v, const std::string& path) {
    try {
      return v.get<T>();
    } catch (const nlohmann::json::exception&) {
      throw std::runtime_error("config: bad value type for '" + path + "'");
    }
  }

  static void parse_dataset(const nlohmann::json& j, DatasetConfig& d) {
    if (!j.is_object()) throw std::runtime_error("config: 'dataset' must be an object");
    for (const auto& [key, value] : j.items()) {
      if (key == "source_dir")
        d.source_dir = get<std::string>(value, "dataset.source_dir");
      else if (key == "crop_size")
        d.crop_size = get<int>(value, "dataset.crop_size");
      else if (key == "batch_size")
        d.batch_size = get<int>(value, "dataset.batch_size");
      else if (key == "clip_mode")
        d.clip_mode = clip_mode_from_string(get<std::string>(value, "dataset.clip_mode"));
      else if (key == "recursive")
        d.recursive = get<bool>(value, "dataset.recursive");
      else
        throw std::runtime_error("config: unknown key 'dataset." + key + "'");
    }
  }

  static void parse_train(const nlohmann::json& j, TrainConfig& t) {
    if (!j.is_object()) throw std::runtime_error("config: 'train' must be an object");
    for (const auto& [key, value] : j.items()) {
      if (key == "gen_lr")
        t.gen_lr = get<double>(value, "train.gen_lr");
      else if (key == "adam_beta1")
        t.adam_beta1 = get<double>(value, "train.adam_beta1");
      else if (key == "adam_beta2")
        t.adam_beta2 = get<double>(value, "train.adam_beta2");
      else if (key == "adam_eps")
        t.adam_eps = get<double>(value, "train.adam_eps");
      else if (key == "disc_lr") {
        if (value.is_null())
          t.disc_lr.reset();
        else
          t.disc_lr = get<double>(value, "train.disc_lr");
      } else if (key == "grad_clip_norm")
        t.grad_clip_norm = get<double>(value, "train.grad_clip_norm");
      else if (key == "steps")
        t.steps = get<long>(value, "train.steps");
      else if (key == "checkpoint_every")
        t.checkpoint_every = get<long>(value, "train.checkpoint_every");
      else if (key == "disc_steps_per_gen")
        t.disc_steps_per_gen = get<int>(value, "train.disc_steps_per_gen");
      else if (key == "alpha")
        t.loss_weights.alpha = get<double>(value, "train.alpha");
      else if (key == "beta")
        t.loss_weights.beta = get<double>(value, "train.beta");
      else if (key == "gamma")
        t.loss_weights.gamma = get<double>(value, "train.gamma");
      else
        throw std::runtime_error("config: unknown key 'train." + key + "'");
    }
  }

  static void parse_paths(const nlohmann::json& j, Paths& p) {
    if (!j.is_object()) throw std::runtime_error("config: 'paths' must be an object");
    for (const auto& [key, value] : j.items()) {
      if (key == "vgg_weights")
        p.vgg_weights = get<std::string>(value, "paths.vgg_weights");
      else if (key == "checkpoint_dir")
        p.checkpoint_dir = get<std::string>(value, "paths.checkpoint_dir");
      else if (key == "output_dir")
        p.output_dir = get<std::string>(value, "paths.output_dir");
      else
        throw std::runtime_error("config: unknown key 'paths." + key + "'");
    }
  }

  static void parse_eval(const nlohmann::json& j, ToolConfig& c) {
    if (!j.is_object()) throw std::runtime_error("config: 'eval' must be an object");
    for (const auto& [key, value] : j.items()) {
      if (key == "saturation_eps")
        c.saturation_eps = get<double>(value, "eval.saturation_eps");
      else
        throw std::runtime_error("config: unknown key 'eval." + key + "'");
    }
  }

  static void parse_study(const nlohmann::json& j, ToolConfig& c) {
    if (!j.is_object()) throw std::runtime_error("config: 'study' must be an object");
    for (const auto& [key, value] : j.items()) {
      if (key == "pad")
        c.study_pad = get<int>(value, "study.pad");
      else
        throw std::runtime_error("config: unknown key 'study." + key + "'");
    }
  }
};

}  // namespace declip
