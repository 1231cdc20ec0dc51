// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vqat/config/run_config.hpp"
#include "vqat/core/autodiff.hpp"
#include "vqat/core/common.hpp"
#include "vqat/crop/s2cnet.hpp"
#include "vqat/data/manifest.hpp"
#include "vqat/data/synthetic.hpp"
#include "vqat/losses/losses.hpp"
#include "vqat/metrics/report.hpp"
#include "vqat/quality/model.hpp"
#include "vqat/train/fgm.hpp"

namespace vqat::pipeline {

using nlohmann::json;

// ---- dataset assembly ----

struct DatasetBundle {
  data::DatasetManifest manifest;
  std::shared_ptr<data::FrameSource> source;
  double synthetic_sigma = 0.0;
};

inline DatasetBundle load_dataset(const config::RunConfig& cfg) {
  DatasetBundle bundle;
  if (cfg.dataset.kind == "synthetic") {
    data::SyntheticDataset syn = data::generate_synthetic_dataset(cfg.dataset.synthetic);
    bundle.manifest = std::move(syn.manifest);
    auto mem = std::make_shared<data::MemoryFrameSource>();
    mem->videos = std::move(syn.source.videos);
    bundle.source = mem;
    bundle.synthetic_sigma = syn.sigma_hundred;
  } else {
    bundle.manifest = data::load_manifest(
        cfg.dataset.manifest, data::MosScale{cfg.dataset.mos_min, cfg.dataset.mos_max},
        cfg.dataset.check_paths);
    bundle.source = std::make_shared<data::FileFrameSource>();
  }
  return bundle;
}

// Entries for one split; manifests without split tags put everything in
// "train" and leave "test" empty.
inline std::vector<data::ManifestEntry> split_entries(const data::DatasetManifest& manifest,
                                                      const std::string& split) {
  bool any_tag = false;
  for (const auto& e : manifest.entries)
    if (!e.split.empty()) any_tag = true;
  if (!any_tag) return split == "train" ? manifest.entries : std::vector<data::ManifestEntry>{};
  return manifest.subset(split);
}

// ---- per-frame cropping as a sampling stage ----

// Applies the crop selector to every sampled frame and re-stacks the results
// at a uniform size. The selector runs with fixed parameters; it is a
// sampling policy, not part of the trained quality model.
inline data::FrameStack crop_sampled_frames(const data::FrameStack& frames,
                                            const crop::S2CNetParams& params,
                                            const config::CropSection& section) {
  const int out_h = section.output_height > 0 ? section.output_height : frames.height;
  const int out_w = section.output_width > 0 ? section.output_width : frames.width;
  data::FrameStack out(frames.frames, out_h, out_w, frames.channels);
  crop::StubDetectionProvider provider({}, section.net.feature_dim, section.feature_seed);
  const std::size_t frame_size =
      static_cast<std::size_t>(out_h) * out_w * frames.channels;
  for (int f = 0; f < frames.frames; ++f) {
    data::ImageView view{&frames, f};
    std::vector<crop::Rect> candidates =
        crop::grid_candidates(frames.width, frames.height, section.net);
    std::vector<crop::CropCandidate> scored =
        crop::score_candidates(view, candidates, provider, params, section.net);
    crop::CropCandidate best = crop::select_best_crop(scored);
    data::FrameStack cropped = data::crop_frame(
        view, static_cast<int>(best.box.x1), static_cast<int>(best.box.y1),
        static_cast<int>(best.box.x2), static_cast<int>(best.box.y2));
    data::FrameStack resized = data::resize_bilinear(cropped, out_h, out_w);
    std::copy(resized.data.begin(), resized.data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(frame_size * f));
  }
  return out;
}

// ---- feature preparation ----

struct PreparedVideo {
  std::string video_id;
  double mos_raw = 0.0;
  double mos_unit = 0.0;
  double mos_hundred = 0.0;
  Mat features;  // [F, D]
};

inline std::vector<PreparedVideo> prepare_videos(const std::vector<data::ManifestEntry>& entries,
                                                 const data::FrameSource& source,
                                                 const data::MosScale& scale,
                                                 const quality::FeatureProvider& provider,
                                                 const config::RunConfig& cfg,
                                                 const crop::S2CNetParams* crop_params) {
  std::vector<PreparedVideo> out;
  out.reserve(entries.size());
  for (const auto& entry : entries) {
    data::FrameStack full = source.load(entry);
    data::VideoSample sample = data::make_sample(entry, scale, full, cfg.model.frame_count);
    if (cfg.crop.enabled) {
      require(crop_params != nullptr, "prepare_videos: crop enabled but no crop parameters");
      sample.frames = crop_sampled_frames(sample.frames, *crop_params, cfg.crop);
    }
    quality::FrameFeatures feats = quality::extract_features(sample, provider);
    out.push_back(PreparedVideo{sample.video_id, sample.mos_raw, sample.mos_unit,
                                sample.mos_hundred, std::move(feats.embeddings)});
  }
  return out;
}

// ---- training ----

inline std::vector<train::ParamRef> head_params(quality::DistributionHead& head) {
  return {
      {"head.hidden.weight", &head.w1},
      {"head.hidden.bias", &head.b1},
      {"head.out.weight", &head.w2},
      {"head.out.bias", &head.b2},
  };
}

// Batch objective: mean of the per-video losses under the configured mode.
inline train::LossFn make_loss_fn(const std::vector<PreparedVideo>& videos,
                                  quality::DistributionHead& head, config::LossMode mode,
                                  double sigma_hundred) {
  const quality::ScoreBins bins = quality::ScoreBins::standard();
  return [&videos, &head, mode, sigma_hundred, bins](const train::BatchIndices& batch) {
    require(!batch.empty(), "loss_fn: empty batch");
    ad::Tape tape;
    quality::HeadVars hv = quality::head_inputs(tape, head);
    ad::Var total = tape.scalar(0.0);
    losses::LossBreakdown parts;
    for (int idx : batch) {
      const PreparedVideo& v = videos.at(static_cast<std::size_t>(idx));
      ad::Var probs = quality::predict_distribution_t(tape, tape.constant(v.features), hv);
      losses::FclVars f = losses::fcl_loss_t(tape, probs, v.mos_hundred, sigma_hundred, bins);
      ad::Var contrib = mode == config::LossMode::fcl ? f.fcl
                        : mode == config::LossMode::mae ? f.mae
                                                        : f.bce;
      total = tape.add(total, contrib);
      parts.mae += tape.scalar_value(f.mae);
      parts.bce += tape.scalar_value(f.bce);
      parts.fcl += tape.scalar_value(f.fcl);
    }
    const double m = static_cast<double>(batch.size());
    total = tape.scale(total, 1.0 / m);
    parts.mae /= m;
    parts.bce /= m;
    parts.fcl /= m;
    tape.backward(total);

    train::EvalResult r;
    r.total = tape.scalar_value(total);
    r.parts = parts;
    r.grads = {tape.grad(hv.w1), tape.grad(hv.b1), tape.grad(hv.w2), tape.grad(hv.b2)};
    return r;
  };
}

struct TrainRun {
  config::RunConfig cfg;
  std::string config_hash;
  quality::DistributionHead head;
  double sigma_hundred = 0.0;
  train::TrainResult result;
};

// Called at every configured checkpoint interval with the live weights.
using CheckpointHook =
    std::function<void(int step, const quality::DistributionHead& head, double sigma_hundred)>;

inline TrainRun run_training(const config::RunConfig& cfg,
                             const CheckpointHook& on_checkpoint = {}) {
  TrainRun run;
  run.cfg = cfg;
  run.config_hash = config::config_hash(config::resolved_json(cfg));

  DatasetBundle bundle = load_dataset(cfg);
  std::vector<data::ManifestEntry> train_entries = split_entries(bundle.manifest, "train");
  require(!train_entries.empty(), "train: no training entries in dataset");

  if (cfg.sigma > 0.0) {
    run.sigma_hundred = cfg.sigma;
  } else {
    std::vector<double> mos;
    mos.reserve(train_entries.size());
    for (const auto& e : train_entries) mos.push_back(bundle.manifest.scale.to_hundred(e.mos_raw));
    run.sigma_hundred = losses::dataset_sigma(mos);
  }

  auto provider = quality::FeatureProviderRegistry::instance().create(
      cfg.provider, cfg.model.embedding_dim, cfg.seed);

  crop::S2CNetParams crop_params;
  if (cfg.crop.enabled) crop_params = crop::S2CNetParams::init(cfg.crop.net, cfg.seed);

  std::vector<PreparedVideo> videos =
      prepare_videos(train_entries, *bundle.source, bundle.manifest.scale, *provider, cfg,
                     cfg.crop.enabled ? &crop_params : nullptr);

  run.head = quality::DistributionHead::init(cfg.model, cfg.seed);
  std::vector<train::ParamRef> params = head_params(run.head);
  train::LossFn loss_fn = make_loss_fn(videos, run.head, cfg.loss_mode, run.sigma_hundred);

  train::FgmConfig fgm = cfg.fgm;
  fgm.enabled = cfg.fgm_enabled;
  if (fgm.max_steps == 0) {
    const int steps_per_epoch =
        (static_cast<int>(videos.size()) + fgm.batch_size - 1) / fgm.batch_size;
    fgm.max_steps = cfg.epochs * steps_per_epoch;
  }

  auto optimizer = train::make_optimizer(fgm.optimizer, fgm.learning_rate);
  train::StepHook hook;
  if (on_checkpoint && cfg.output.checkpoint_interval > 0) {
    const int interval = cfg.output.checkpoint_interval;
    hook = [&run, &on_checkpoint, interval](const train::TrainStepRecord& rec) {
      if (!rec.aborted && rec.step % interval == 0)
        on_checkpoint(rec.step, run.head, run.sigma_hundred);
    };
  }
  run.result = train::train(params, static_cast<int>(videos.size()), loss_fn, fgm,
                            mix_seed(cfg.seed, 0x736875ULL), optimizer.get(), hook);
  return run;
}

// ---- checkpoint io ----

inline json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Mat mat_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw std::runtime_error("checkpoint: " + what + " is not a 2-d array");
  Mat m(static_cast<Index>(j.size()), static_cast<Index>(j[0].size()));
  for (Index i = 0; i < m.rows(); ++i) {
    if (static_cast<Index>(j[i].size()) != m.cols())
      throw std::runtime_error("checkpoint: ragged rows in " + what);
    for (Index k = 0; k < m.cols(); ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

inline constexpr const char* kCheckpointFormat = "vqat-checkpoint-v1";

inline json checkpoint_json(const config::RunConfig& cfg, const std::string& config_hash,
                            const quality::DistributionHead& head, double sigma_hundred) {
  json j;
  j["format"] = kCheckpointFormat;
  j["config"] = config::resolved_json(cfg);
  j["config_hash"] = config_hash;
  j["sigma_hundred"] = sigma_hundred;
  j["head"] = {{"hidden_weight", mat_to_json(head.w1)},
               {"hidden_bias", mat_to_json(head.b1)},
               {"out_weight", mat_to_json(head.w2)},
               {"out_bias", mat_to_json(head.b2)}};
  return j;
}

inline json checkpoint_to_json(const TrainRun& run) {
  return checkpoint_json(run.cfg, run.config_hash, run.head, run.sigma_hundred);
}

struct Checkpoint {
  config::RunConfig cfg;
  std::string config_hash;
  quality::DistributionHead head;
  double sigma_hundred = 0.0;
};

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw std::runtime_error("checkpoint: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("checkpoint: invalid JSON in " + path + ": " + e.what());
  }
  if (!j.contains("format") || j.at("format") != kCheckpointFormat)
    throw std::runtime_error("checkpoint: unsupported format in " + path);
  Checkpoint ck;
  ck.cfg = config::parse_config(j.at("config"));
  ck.config_hash = j.at("config_hash").get<std::string>();
  ck.sigma_hundred = j.at("sigma_hundred").get<double>();
  const json& h = j.at("head");
  ck.head.w1 = mat_from_json(h.at("hidden_weight"), "head.hidden_weight");
  ck.head.b1 = mat_from_json(h.at("hidden_bias"), "head.hidden_bias");
  ck.head.w2 = mat_from_json(h.at("out_weight"), "head.out_weight");
  ck.head.b2 = mat_from_json(h.at("out_bias"), "head.out_bias");
  require_shape(ck.head.w1, ck.cfg.model.embedding_dim, ck.cfg.model.hidden_dim,
                "checkpoint head.hidden_weight");
  require_shape(ck.head.w2, ck.cfg.model.hidden_dim, quality::kScoreBinCount,
                "checkpoint head.out_weight");
  return ck;
}

// ---- evaluation ----

inline double predict_score(const PreparedVideo& video, const quality::DistributionHead& head,
                            quality::ScoreScale scale) {
  const quality::ScoreBins bins = quality::ScoreBins::standard();
  quality::ScoreDistribution dist =
      quality::predict_distribution(quality::FrameFeatures{video.features}, head);
  const double unit = quality::predict_video_score(quality::decode_frame_scores(dist, bins));
  return scale == quality::ScoreScale::unit ? unit : 100.0 * unit;
}

struct EvalRun {
  metrics::EvalReport report;
  std::string config_hash;
};

inline EvalRun run_evaluation(const Checkpoint& ck, const std::string& split) {
  DatasetBundle bundle = load_dataset(ck.cfg);
  std::vector<data::ManifestEntry> entries = split_entries(bundle.manifest, split);
  require(!entries.empty(), "eval: no entries in split '" + split + "'");

  auto provider = quality::FeatureProviderRegistry::instance().create(
      ck.cfg.provider, ck.cfg.model.embedding_dim, ck.cfg.seed);
  crop::S2CNetParams crop_params;
  if (ck.cfg.crop.enabled) crop_params = crop::S2CNetParams::init(ck.cfg.crop.net, ck.cfg.seed);

  std::vector<PreparedVideo> videos =
      prepare_videos(entries, *bundle.source, bundle.manifest.scale, *provider, ck.cfg,
                     ck.cfg.crop.enabled ? &crop_params : nullptr);

  std::vector<metrics::PredictionRow> preds;
  std::vector<metrics::GroundTruthRow> truth;
  for (const PreparedVideo& v : videos) {
    preds.push_back({v.video_id, predict_score(v, ck.head, ck.cfg.model.score_scale)});
    truth.push_back({v.video_id, v.mos_raw});
  }
  EvalRun out;
  out.report = metrics::evaluate(preds, truth);
  out.config_hash = ck.config_hash;
  return out;
}

}  // namespace vqat::pipeline
