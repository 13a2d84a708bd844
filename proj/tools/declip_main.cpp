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

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "declip/declip.hpp"

namespace fs = std::filesystem;
using namespace declip;

namespace {

struct CommonOpts {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "JSON config file (defaults used when omitted)");
  cmd->add_option("--seed", o.seed, "override the config seed");
  cmd->add_option("--out", o.out_dir, "override the output directory");
}

ToolConfig load_config(const CommonOpts& o) {
  ToolConfig cfg = o.config_path.empty() ? ToolConfig{} : ToolConfig::from_file(o.config_path);
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.dataset.seed = *o.seed;
    cfg.train.seed = *o.seed;
  }
  if (!o.out_dir.empty()) cfg.paths.output_dir = o.out_dir;
  return cfg;
}

/// Sorted decodable images in a directory; unreadable files are skipped with
/// a warning. Errors out if nothing survives.
std::vector<std::string> list_images(const std::string& dir, bool recursive) {
  if (!fs::exists(dir) || !fs::is_directory(dir))
    throw std::runtime_error("input directory does not exist: " + dir);
  std::vector<std::string> files;
  if (recursive) {
    for (const auto& e : fs::recursive_directory_iterator(dir))
      if (e.is_regular_file()) files.push_back(e.path().generic_string());
  } else {
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file()) files.push_back(e.path().generic_string());
  }
  std::sort(files.begin(), files.end());
  std::vector<std::string> good;
  for (const auto& f : files) {
    try {
      load_image8(f);
      good.push_back(f);
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping unreadable file: " << f << " (" << e.what() << ")\n";
    }
  }
  if (good.empty()) throw std::runtime_error("no decodable images under " + dir);
  return good;
}

TrainState<float> make_state(const ToolConfig& cfg) {
  nn::GeneratorConfig gcfg;
  nn::DiscriminatorConfig dcfg;
  dcfg.input_size = cfg.dataset.crop_size;
  return TrainState<float>(cfg.train, gcfg, dcfg);
}

nn::FeatureExtractor<float> load_extractor(const ToolConfig& cfg) {
  if (cfg.paths.vgg_weights.empty())
    throw std::runtime_error(
        "paths.vgg_weights is not set; the perceptual loss needs a local VGG16 weight file "
        "(never downloaded automatically)");
  if (!fs::exists(cfg.paths.vgg_weights))
    throw std::runtime_error("VGG16 weight file not found: " + cfg.paths.vgg_weights);
  return nn::FeatureExtractor<float>::load(cfg.paths.vgg_weights, nn::default_perceptual_layers());
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

// ---------------------------------------------------------------------------

int cmd_synth(const CommonOpts& common, const std::string& in_dir_flag) {
  ToolConfig cfg = load_config(common);
  const std::string in_dir = in_dir_flag.empty() ? cfg.dataset.source_dir : in_dir_flag;
  if (in_dir.empty()) throw std::runtime_error("no input directory (set dataset.source_dir or --in)");
  const auto files = list_images(in_dir, cfg.dataset.recursive);
  fs::create_directories(cfg.paths.output_dir);

  for (size_t idx = 0; idx < files.size(); ++idx) {
    const ImageTensor img = load_image(files[idx]);
    Rng rng = make_rng(cfg.seed, rng_stream::kSynth, idx);
    const ClipThresholds t = sample_thresholds(rng);
    const ImageTensor clipped = apply_clip(img, t, cfg.dataset.clip_mode);
    const ClipMask mask = compute_clip_mask(img, t);

    ImageTensor mask_img(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        // Encode per-pixel coverage: red channel = any over, green = any under.
        bool any_over = false, any_under = false;
        for (int c = 0; c < 3; ++c) {
          const size_t i = (static_cast<size_t>(y) * img.width + x) * 3 + c;
          any_over |= mask.over[i] != 0;
          any_under |= mask.under[i] != 0;
        }
        mask_img.at(y, x, 0) = any_over ? 1.f : 0.f;
        mask_img.at(y, x, 1) = any_under ? 1.f : 0.f;
        mask_img.at(y, x, 2) = 0.f;
      }

    const std::string stem = stem_of(files[idx]);
    const fs::path out(cfg.paths.output_dir);
    save_png((out / (stem + "_clipped.png")).string(), clipped);
    save_png((out / (stem + "_mask.png")).string(), mask_img);
    save_png((out / (stem + "_viz.png")).string(), visualize_mask(clipped, mask));
  }
  std::cout << "synthesized " << files.size() << " clipped image(s) into " << cfg.paths.output_dir
            << "\n";
  return 0;
}

int cmd_train(const CommonOpts& common, bool fresh) {
  ToolConfig cfg = load_config(common);
  if (cfg.dataset.source_dir.empty())
    throw std::runtime_error("dataset.source_dir is not set");

  nn::FeatureExtractor<float> vgg;
  nn::FeatureExtractor<float>* vgg_ptr = nullptr;
  if (cfg.train.loss_weights.beta > 0) {
    vgg = load_extractor(cfg);
    vgg_ptr = &vgg;
  }

  fs::create_directories(cfg.paths.checkpoint_dir);
  TrainIo io;
  io.checkpoint_dir = cfg.paths.checkpoint_dir;
  io.metrics_path = (fs::path(cfg.paths.checkpoint_dir) / "metrics.log").string();

  auto state = train(cfg.train, cfg.dataset, vgg_ptr, io, cfg.canonical_json(), !fresh);
  std::cout << "trained to step " << state.step << "; checkpoints in " << cfg.paths.checkpoint_dir
            << "\n";
  return 0;
}

int cmd_declip(const CommonOpts& common, const std::string& checkpoint,
               std::vector<std::string> inputs, const std::string& in_dir) {
  ToolConfig cfg = load_config(common);
  if (!in_dir.empty()) {
    const auto listed = list_images(in_dir, cfg.dataset.recursive);
    inputs.insert(inputs.end(), listed.begin(), listed.end());
  }
  if (inputs.empty()) throw std::runtime_error("no input images (pass files or --in DIR)");

  TrainState<float> state = make_state(cfg);
  load_checkpoint(state, checkpoint, /*check_seed=*/false);
  fs::create_directories(cfg.paths.output_dir);

  for (const auto& file : inputs) {
    const ImageTensor img = load_image(file);
    const ImageTensor restored = infer_any_size(state.gen, img);
    const std::string out_path =
        (fs::path(cfg.paths.output_dir) / (stem_of(file) + "_declipped.png")).string();
    save_png(out_path, restored);
  }
  std::cout << "declipped " << inputs.size() << " image(s) into " << cfg.paths.output_dir << "\n";
  return 0;
}

int cmd_eval(const CommonOpts& common, const std::string& checkpoint, const std::string& in_dir_flag) {
  ToolConfig cfg = load_config(common);
  const std::string in_dir = in_dir_flag.empty() ? cfg.dataset.source_dir : in_dir_flag;
  if (in_dir.empty()) throw std::runtime_error("no dataset directory (set dataset.source_dir or --in)");
  const auto files = list_images(in_dir, cfg.dataset.recursive);

  TrainState<float> state = make_state(cfg);
  load_checkpoint(state, checkpoint, /*check_seed=*/false);
  fs::create_directories(cfg.paths.output_dir);
  const std::string report_path = (fs::path(cfg.paths.output_dir) / "eval_report.txt").string();
  std::ofstream report(report_path);
  if (!report) throw std::runtime_error("cannot write " + report_path);

  double sum_full = 0, sum_clip = 0, sum_unclip = 0, sum_drift = 0, sum_frac = 0;
  for (size_t idx = 0; idx < files.size(); ++idx) {
    const ImageTensor img = load_image(files[idx]);
    Rng rng = make_rng(cfg.seed, rng_stream::kTrainingPair, 0, idx);
    const TrainingPair pair = make_training_pair(img, cfg.dataset, rng);
    const ImageTensor restored = infer_any_size(state.gen, pair.clipped);
    const EvalReport r = evaluate_pair(restored, pair);

    std::ostringstream row;
    row << "image=" << fs::path(files[idx]).filename().string() << std::setprecision(6)
        << " psnr_full=" << r.psnr_full << " psnr_clipped=" << r.psnr_clipped_region
        << " psnr_unclipped=" << r.psnr_unclipped_region
        << " nonclipped_drift=" << r.nonclipped_drift
        << " clipped_fraction=" << r.clipped_fraction;
    report << row.str() << "\n";
    std::cout << row.str() << "\n";
    sum_full += r.psnr_full;
    sum_clip += r.psnr_clipped_region;
    sum_unclip += r.psnr_unclipped_region;
    sum_drift += r.nonclipped_drift;
    sum_frac += r.clipped_fraction;
  }
  const double n = static_cast<double>(files.size());
  std::ostringstream sum;
  sum << "summary_mean" << std::setprecision(6) << " psnr_full=" << sum_full / n
      << " psnr_clipped=" << sum_clip / n << " psnr_unclipped=" << sum_unclip / n
      << " nonclipped_drift=" << sum_drift / n << " clipped_fraction=" << sum_frac / n;
  report << sum.str() << "\n";
  std::cout << sum.str() << "\n";
  return 0;
}

int cmd_study_make(const CommonOpts& common, const std::string& gt_dir, const std::string& a_dir,
                   const std::string& b_dir) {
  ToolConfig cfg = load_config(common);
  const auto gt_files = list_images(gt_dir, false);
  fs::create_directories(cfg.paths.output_dir);
  const std::string key_path = (fs::path(cfg.paths.output_dir) / "answer_key.tsv").string();
  std::ofstream key(key_path);
  if (!key) throw std::runtime_error("cannot write " + key_path);

  size_t made = 0;
  for (size_t idx = 0; idx < gt_files.size(); ++idx) {
    const std::string name = fs::path(gt_files[idx]).filename().string();
    const fs::path a_path = fs::path(a_dir) / name;
    const fs::path b_path = fs::path(b_dir) / name;
    if (!fs::exists(a_path) || !fs::exists(b_path))
      throw std::runtime_error("missing candidate for " + name + " in " + a_dir + " or " + b_dir);

    const ImageTensor gt = load_image(gt_files[idx]);
    const ImageTensor rec_a = load_image(a_path.string());
    const ImageTensor rec_b = load_image(b_path.string());
    const std::string trial_id = stem_of(name);
    const uint64_t trial_seed = declip::detail::mix64(cfg.seed, idx);
    const StudyTrial trial =
        make_study_trial(gt, rec_a, rec_b, trial_id, trial_seed, cfg.study_pad);
    save_png((fs::path(cfg.paths.output_dir) / ("trial_" + trial_id + ".png")).string(),
             trial.montage);
    key << trial.trial_id << '\t' << name << '\t' << trial.left_method << '\t'
        << trial.right_method << '\n';
    ++made;
  }
  std::cout << "wrote " << made << " trial montage(s) and " << key_path << "\n";
  return 0;
}

int cmd_study_tally(const std::string& key_path, const std::string& responses_path) {
  std::ifstream key_in(key_path);
  if (!key_in) throw std::runtime_error("cannot open answer key: " + key_path);
  std::vector<StudyKey> keys;
  std::string line;
  while (std::getline(key_in, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    StudyKey k;
    std::string left, right;
    if (!(is >> k.trial_id >> k.image_id >> left >> right) || left.size() != 1 || right.size() != 1)
      throw std::runtime_error("malformed answer key line: " + line);
    k.left_method = left[0];
    k.right_method = right[0];
    keys.push_back(std::move(k));
  }

  std::ifstream resp_in(responses_path);
  if (!resp_in) throw std::runtime_error("cannot open responses: " + responses_path);
  std::vector<StudyResponse> responses;
  while (std::getline(resp_in, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    StudyResponse r;
    std::string side;
    if (!(is >> r.trial_id >> side) || side.size() != 1)
      throw std::runtime_error("malformed response line: " + line);
    r.chosen_side = side[0];
    responses.push_back(std::move(r));
  }

  const PreferenceTally tally = tally_preferences(responses, keys);
  for (const auto& [method, count] : tally.chosen_count) {
    const double pct = 100.0 * static_cast<double>(count) / static_cast<double>(tally.total);
    std::cout << "method " << method << ": " << count << "/" << tally.total << " ("
              << std::setprecision(4) << pct << "%)\n";
  }
  std::cout << "per-image:\n";
  for (const auto& [image, counts] : tally.per_image) {
    std::cout << "  " << image;
    for (const auto& [method, count] : counts) std::cout << " " << method << "=" << count;
    std::cout << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"declip: exposure-clip simulation, restoration training and evaluation"};
  app.require_subcommand(1);

  CommonOpts synth_opts, train_opts, declip_opts, eval_opts, study_opts;

  auto* synth = app.add_subcommand("synth", "clip a directory of images; write clipped PNGs, masks and visualizations");
  add_common(synth, synth_opts);
  std::string synth_in;
  synth->add_option("--in", synth_in, "input directory (default: dataset.source_dir)");

  auto* train_cmd = app.add_subcommand("train", "train the restoration networks");
  add_common(train_cmd, train_opts);
  bool train_fresh = false;
  train_cmd->add_flag("--fresh", train_fresh, "ignore an existing checkpoint instead of resuming");

  auto* declip_cmd = app.add_subcommand("declip", "restore images with a trained checkpoint");
  add_common(declip_cmd, declip_opts);
  std::string declip_ckpt, declip_in;
  std::vector<std::string> declip_files;
  declip_cmd->add_option("--checkpoint", declip_ckpt, "checkpoint file")->required();
  declip_cmd->add_option("--in", declip_in, "directory of input images");
  declip_cmd->add_option("images", declip_files, "input image files");

  auto* eval_cmd = app.add_subcommand("eval", "synthesize clipped pairs, restore, report mask-aware metrics");
  add_common(eval_cmd, eval_opts);
  std::string eval_ckpt, eval_in;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--in", eval_in, "dataset directory (default: dataset.source_dir)");

  auto* study = app.add_subcommand("study", "pairwise-study tooling");
  study->require_subcommand(1);
  auto* study_make = study->add_subcommand("make", "emit trial montages and the answer key");
  add_common(study_make, study_opts);
  std::string gt_dir, a_dir, b_dir;
  study_make->add_option("gt_dir", gt_dir, "ground-truth images")->required();
  study_make->add_option("method_a_dir", a_dir, "method A reconstructions")->required();
  study_make->add_option("method_b_dir", b_dir, "method B reconstructions")->required();
  auto* study_tally = study->add_subcommand("tally", "tally a responses file against an answer key");
  std::string key_path, responses_path;
  study_tally->add_option("--keys", key_path, "answer_key.tsv from 'study make'")->required();
  study_tally->add_option("--responses", responses_path, "lines of: trial_id L|R")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(synth_opts, synth_in);
    if (*train_cmd) return cmd_train(train_opts, train_fresh);
    if (*declip_cmd) return cmd_declip(declip_opts, declip_ckpt, declip_files, declip_in);
    if (*eval_cmd) return cmd_eval(eval_opts, eval_ckpt, eval_in);
    if (*study_make) return cmd_study_make(study_opts, gt_dir, a_dir, b_dir);
    if (*study_tally) return cmd_study_tally(key_path, responses_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
