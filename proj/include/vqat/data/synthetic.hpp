// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "vqat/core/common.hpp"
#include "vqat/core/rng.hpp"
#include "vqat/crop/types.hpp"
#include "vqat/data/frames.hpp"
#include "vqat/data/manifest.hpp"

namespace vqat::data {

// Procedural videos whose quality signal is planted in frame brightness:
// unit quality q maps linearly to pixel intensity, so mean pooling recovers
// it. Per-frame qualities spread symmetrically around the video quality to
// emulate strong inter-frame variation while keeping the video mean fixed.
struct SyntheticConfig {
  int n_videos = 100;
  int n_test = 0;  // taken from n_videos
  std::uint64_t seed = 0;
  int total_frames = 12;
  int height = 16;
  int width = 16;
  int channels = 3;
  double mos_min = 1.0;
  double mos_max = 5.0;
  double max_spread = 0.25;
  double pixel_noise = 0.02;

  void validate() const {
    require(n_videos >= 1, "SyntheticConfig: n_videos must be >= 1");
    require(n_test >= 0 && n_test < n_videos, "SyntheticConfig: n_test must be < n_videos");
    require(total_frames >= 1 && height >= 1 && width >= 1 && channels >= 1,
            "SyntheticConfig: degenerate dimensions");
    require(mos_max > mos_min, "SyntheticConfig: mos range empty");
  }
};

inline double quality_to_intensity(double q) { return 0.25 + 0.5 * q; }

// Frame stack for an explicit per-frame unit-quality sequence.
inline FrameStack make_planted_video(const std::vector<double>& frame_qualities, int height,
                                     int width, int channels, std::uint64_t seed,
                                     double pixel_noise = 0.02) {
  require(!frame_qualities.empty(), "make_planted_video: no frame qualities");
  FrameStack stack(static_cast<int>(frame_qualities.size()), height, width, channels);
  std::mt19937_64 rng(mix_seed(seed, 0x766964ULL));
  std::uniform_real_distribution<double> noise(-pixel_noise, pixel_noise);
  for (int f = 0; f < stack.frames; ++f) {
    const double base = quality_to_intensity(frame_qualities[static_cast<std::size_t>(f)]);
    for (int h = 0; h < height; ++h)
      for (int w = 0; w < width; ++w)
        for (int c = 0; c < channels; ++c) {
          const double channel_offset = 0.02 * (c - (channels - 1) * 0.5);
          stack.at(f, h, w, c) =
              std::clamp(base + channel_offset + noise(rng), 0.0, 1.0);
        }
  }
  return stack;
}

// Zero-mean spread pattern across frames, so the video-mean quality is the
// base quality exactly.
inline std::vector<double> spread_pattern(int frames) {
  std::vector<double> p(static_cast<std::size_t>(frames), 0.0);
  if (frames == 1) return p;
  for (int f = 0; f < frames; ++f)
    p[static_cast<std::size_t>(f)] = -1.0 + 2.0 * f / (frames - 1.0);
  const double mean = std::accumulate(p.begin(), p.end(), 0.0) / frames;
  for (double& v : p) v -= mean;
  return p;
}

struct SyntheticDataset {
  DatasetManifest manifest;  // split tags "train" / "test"
  MemoryFrameSource source;
  double sigma_hundred = 0.0;  // population std of train-split mos on 0-100
};

inline SyntheticDataset generate_synthetic_dataset(const SyntheticConfig& cfg) {
  cfg.validate();
  SyntheticDataset ds;
  ds.manifest.scale = MosScale{cfg.mos_min, cfg.mos_max};

  const int n = cfg.n_videos;
  // Base qualities cover [0, 1] exactly; assignment order is shuffled so both
  // splits span the range.
  std::vector<double> base(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    base[static_cast<std::size_t>(i)] = n == 1 ? 0.5 : static_cast<double>(i) / (n - 1);
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x73796eULL));
  std::shuffle(base.begin(), base.end(), rng);

  std::uniform_real_distribution<double> spread_dist(0.0, cfg.max_spread);
  const std::vector<double> pattern = spread_pattern(cfg.total_frames);

  std::vector<double> train_mos_hundred;
  for (int i = 0; i < n; ++i) {
    const double q = base[static_cast<std::size_t>(i)];
    const double spread = spread_dist(rng);
    std::vector<double> frame_q(static_cast<std::size_t>(cfg.total_frames));
    for (int f = 0; f < cfg.total_frames; ++f)
      frame_q[static_cast<std::size_t>(f)] = q + spread * pattern[static_cast<std::size_t>(f)];

    ManifestEntry entry;
    entry.video_id = "syn" + std::to_string(i);
    entry.path = "memory://" + entry.video_id;
    entry.mos_raw = cfg.mos_min + (cfg.mos_max - cfg.mos_min) * q;
    entry.split = i < n - cfg.n_test ? "train" : "test";
    if (entry.split == "train")
      train_mos_hundred.push_back(ds.manifest.scale.to_hundred(entry.mos_raw));

    ds.source.videos[entry.video_id] =
        make_planted_video(frame_q, cfg.height, cfg.width, cfg.channels,
                           mix_seed(cfg.seed, 0xf00d + static_cast<std::uint64_t>(i)),
                           cfg.pixel_noise);
    ds.manifest.entries.push_back(std::move(entry));
  }

  if (train_mos_hundred.size() >= 2) {
    double mean = std::accumulate(train_mos_hundred.begin(), train_mos_hundred.end(), 0.0) /
                  static_cast<double>(train_mos_hundred.size());
    double var = 0.0;
    for (double s : train_mos_hundred) var += (s - mean) * (s - mean);
    ds.sigma_hundred = std::sqrt(var / static_cast<double>(train_mos_hundred.size()));
  }
  return ds;
}

// ---- crop scenes ----

// One image with a planted bright salient region on a dull background.
// Candidate targets are the fraction of the salient area each candidate
// covers, which is the quantity the crop head is trained to regress.
struct CropScene {
  FrameStack image;  // single frame
  crop::Rect salient;
  std::vector<crop::Rect> object_boxes;  // salient box plus distractors
  std::vector<crop::Rect> candidates;
  Vec targets;
};

inline double rect_coverage(const crop::Rect& cand, const crop::Rect& target) {
  const double ix = std::max(0.0, std::min(cand.x2, target.x2) - std::max(cand.x1, target.x1));
  const double iy = std::max(0.0, std::min(cand.y2, target.y2) - std::max(cand.y1, target.y1));
  return target.area() > 0.0 ? ix * iy / target.area() : 0.0;
}

inline CropScene make_crop_scene(std::uint64_t seed, int size = 32, int n_candidates = 6) {
  require(size >= 16, "make_crop_scene: image too small");
  require(n_candidates >= 2, "make_crop_scene: need at least two candidates");
  CropScene scene;
  std::mt19937_64 rng(mix_seed(seed, 0x63726f70ULL));
  std::uniform_real_distribution<double> bg_noise(0.05, 0.25);
  std::uniform_real_distribution<double> fg_noise(0.75, 0.95);

  scene.image = FrameStack(1, size, size, 3);
  for (int h = 0; h < size; ++h)
    for (int w = 0; w < size; ++w)
      for (int c = 0; c < 3; ++c) scene.image.at(0, h, w, c) = bg_noise(rng);

  // Salient block roughly a third of the image, away from the borders.
  const int block = size / 3;
  std::uniform_int_distribution<int> pos(1, size - block - 1);
  const int sx = pos(rng);
  const int sy = pos(rng);
  scene.salient = crop::Rect{static_cast<double>(sx), static_cast<double>(sy),
                             static_cast<double>(sx + block), static_cast<double>(sy + block)};
  for (int h = sy; h < sy + block; ++h)
    for (int w = sx; w < sx + block; ++w)
      for (int c = 0; c < 3; ++c) scene.image.at(0, h, w, c) = fg_noise(rng);

  scene.object_boxes.push_back(scene.salient);
  // Two dull distractor objects.
  std::uniform_int_distribution<int> dpos(0, size - block);
  for (int k = 0; k < 2; ++k) {
    const int dx = dpos(rng);
    const int dy = dpos(rng);
    scene.object_boxes.push_back(crop::Rect{static_cast<double>(dx), static_cast<double>(dy),
                                            static_cast<double>(dx + block),
                                            static_cast<double>(dy + block)});
  }

  // Candidates: half the image side, scattered; coverage of the salient block
  // becomes the regression target.
  const int cand = size / 2;
  std::uniform_int_distribution<int> cpos(0, size - cand);
  scene.targets.resize(n_candidates);
  for (int k = 0; k < n_candidates; ++k) {
    crop::Rect box;
    if (k == 0) {
      // One candidate always centered on the salient region (clamped).
      const int cx = std::clamp(sx + block / 2 - cand / 2, 0, size - cand);
      const int cy = std::clamp(sy + block / 2 - cand / 2, 0, size - cand);
      box = crop::Rect{static_cast<double>(cx), static_cast<double>(cy),
                       static_cast<double>(cx + cand), static_cast<double>(cy + cand)};
    } else {
      box = crop::Rect{0, 0, 0, 0};
      const int cx = cpos(rng);
      const int cy = cpos(rng);
      box = crop::Rect{static_cast<double>(cx), static_cast<double>(cy),
                       static_cast<double>(cx + cand), static_cast<double>(cy + cand)};
    }
    scene.candidates.push_back(box);
    scene.targets(k) = rect_coverage(box, scene.salient);
  }
  return scene;
}

}  // namespace vqat::data
