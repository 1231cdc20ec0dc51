// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vqat/core/autodiff.hpp"
#include "vqat/core/common.hpp"
#include "vqat/core/rng.hpp"
#include "vqat/data/manifest.hpp"
#include "vqat/quality/feature_provider.hpp"
#include "vqat/quality/score_bins.hpp"

namespace vqat::quality {

enum class ScoreScale { unit, hundred };

inline ScoreScale score_scale_from_string(const std::string& s) {
  if (s == "unit") return ScoreScale::unit;
  if (s == "hundred") return ScoreScale::hundred;
  throw std::invalid_argument("score_scale must be 'unit' or 'hundred', got '" + s + "'");
}

struct QualityModelConfig {
  int embedding_dim = 16;
  int hidden_dim = 32;
  int frame_count = 8;
  ScoreScale score_scale = ScoreScale::unit;

  void validate() const {
    require(embedding_dim >= 1, "QualityModelConfig: embedding_dim must be >= 1");
    require(hidden_dim >= 1, "QualityModelConfig: hidden_dim must be >= 1");
    require(frame_count >= 1, "QualityModelConfig: frame_count must be >= 1");
  }
};

// [F, D] finite embedding matrix.
struct FrameFeatures {
  Mat embeddings;

  int frame_count() const { return static_cast<int>(embeddings.rows()); }
  int dim() const { return static_cast<int>(embeddings.cols()); }
};

inline FrameFeatures extract_features(const data::VideoSample& video,
                                      const FeatureProvider& provider) {
  require(video.frames.frames >= 1, "extract_features: video has no sampled frames");
  Mat emb = provider.features(video.frames);
  if (emb.rows() != video.frames.frames || emb.cols() != provider.dim())
    throw std::runtime_error("feature provider '" + provider.name() + "' returned shape [" +
                             std::to_string(emb.rows()) + ", " + std::to_string(emb.cols()) +
                             "], expected [" + std::to_string(video.frames.frames) + ", " +
                             std::to_string(provider.dim()) + "]");
  for (Index f = 0; f < emb.rows(); ++f) {
    if (!emb.row(f).allFinite())
      throw std::runtime_error("feature provider '" + provider.name() +
                               "' produced non-finite features for frame " + std::to_string(f));
  }
  return FrameFeatures{std::move(emb)};
}

// Per-frame distribution head: one hidden ReLU layer, then 100 independent
// sigmoid bins. Frames pass through independently.
struct DistributionHead {
  Mat w1;  // [D, H]
  Mat b1;  // [1, H]
  Mat w2;  // [H, 100]
  Mat b2;  // [1, 100]

  static DistributionHead init(const QualityModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(mix_seed(seed, 0x68656164ULL));
    DistributionHead h;
    h.w1 = random_normal(cfg.embedding_dim, cfg.hidden_dim, rng,
                         std::sqrt(2.0 / cfg.embedding_dim));
    h.b1 = Mat::Zero(1, cfg.hidden_dim);
    h.w2 = random_normal(cfg.hidden_dim, kScoreBinCount, rng, std::sqrt(1.0 / cfg.hidden_dim));
    h.b2 = Mat::Zero(1, kScoreBinCount);
    return h;
  }

  Mat logits(const Mat& features) const {
    Mat hidden = ((features * w1).rowwise() + RowVec(b1.row(0))).cwiseMax(0.0);
    return (hidden * w2).rowwise() + RowVec(b2.row(0));
  }
};

// Per-bin sigmoid probabilities, shape [F, 100]. Rows deliberately do not sum
// to one; each bin is an independent Bernoulli.
struct ScoreDistribution {
  Mat probs;

  int frame_count() const { return static_cast<int>(probs.rows()); }

  void validate() const {
    require(probs.rows() >= 1, "ScoreDistribution: needs at least one frame");
    require(probs.cols() == kScoreBinCount, "ScoreDistribution: expected 100 bins");
    require((probs.array() >= 0.0).all() && (probs.array() <= 1.0).all(),
            "ScoreDistribution: entries must lie in [0, 1]");
  }
};

inline ScoreDistribution predict_distribution(const FrameFeatures& features,
                                              const DistributionHead& head) {
  require_finite(features.embeddings, "predict_distribution: features");
  Mat logits = head.logits(features.embeddings);
  if (!logits.allFinite())
    throw std::runtime_error("predict_distribution: head produced non-finite logits");
  Mat probs = (1.0 / (1.0 + (-logits.array()).exp())).matrix();
  return ScoreDistribution{std::move(probs)};
}

// Expected-score decode: y_f = sum_i p_fi * s_i / (sum_i p_fi * 100).
// Output lies in [0, 0.99] by construction.
inline Vec decode_frame_scores(const ScoreDistribution& dist, const ScoreBins& bins) {
  dist.validate();
  bins.validate();
  const Mat& p = dist.probs;
  Vec scores(p.rows());
  for (Index f = 0; f < p.rows(); ++f) {
    const double mass = p.row(f).sum();
    if (mass <= 0.0)
      throw std::runtime_error("decode_frame_scores: frame " + std::to_string(f) +
                               " has zero probability mass");
    scores(f) = p.row(f).dot(bins.values) / (mass * 100.0);
  }
  return scores;
}

inline double predict_video_score(const Vec& frame_scores) {
  require(frame_scores.size() >= 1, "predict_video_score: no frame scores");
  return frame_scores.mean();
}

// ---- tape builders ----

// Sigmoid head forward on a tape; returns the [F, 100] probability node.
struct HeadVars {
  ad::Var w1, b1, w2, b2;
};

inline HeadVars head_inputs(ad::Tape& tape, const DistributionHead& head) {
  return HeadVars{tape.input(head.w1), tape.input(head.b1), tape.input(head.w2),
                  tape.input(head.b2)};
}

inline ad::Var predict_distribution_t(ad::Tape& tape, ad::Var features, const HeadVars& head) {
  ad::Var hidden = tape.relu(tape.linear(features, head.w1, head.b1));
  ad::Var logits = tape.linear(hidden, head.w2, head.b2);
  require_finite(tape.value(logits), "predict_distribution: logits");
  return tape.sigmoid(logits);
}

inline ad::Var decode_frame_scores_t(ad::Tape& tape, ad::Var probs, const ScoreBins& bins) {
  const Mat& p = tape.value(probs);
  Mat bins_m = bins.values.replicate(p.rows(), 1);
  for (Index f = 0; f < p.rows(); ++f) {
    if (p.row(f).sum() <= 0.0)
      throw std::runtime_error("decode_frame_scores: frame " + std::to_string(f) +
                               " has zero probability mass");
  }
  ad::Var num = tape.row_sum(tape.mul(probs, tape.constant(bins_m)));
  ad::Var den = tape.scale(tape.row_sum(probs), 100.0);
  return tape.div(num, den);  // [F, 1]
}

}  // namespace vqat::quality
