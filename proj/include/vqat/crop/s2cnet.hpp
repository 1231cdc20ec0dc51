// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "vqat/core/autodiff.hpp"
#include "vqat/core/common.hpp"
#include "vqat/core/rng.hpp"
#include "vqat/crop/attention.hpp"
#include "vqat/crop/graph.hpp"
#include "vqat/crop/types.hpp"
#include "vqat/data/frames.hpp"

namespace vqat::crop {

struct S2CNetConfig {
  int feature_dim = 8;
  int mlp_hidden = 16;
  int max_nodes = 16;          // capacity of the learnable gate
  int top_n = 5;               // detected objects kept per image
  double spatial_exp_sign = 1.0;
  FagMode fag_mode = FagMode::hadamard;
  std::vector<double> scales{0.6, 0.75, 0.9};
  int stride_divisor = 8;

  void validate() const {
    require(feature_dim >= 1 && mlp_hidden >= 1, "S2CNetConfig: dims must be >= 1");
    require(max_nodes >= 2, "S2CNetConfig: max_nodes must be >= 2");
    require(top_n >= 1, "S2CNetConfig: top_n must be >= 1");
    require(spatial_exp_sign == 1.0 || spatial_exp_sign == -1.0,
            "S2CNetConfig: spatial_exp_sign must be +1 or -1");
    require(!scales.empty(), "S2CNetConfig: need at least one candidate scale");
    require(stride_divisor >= 1, "S2CNetConfig: stride_divisor must be >= 1");
  }
};

// ---- detection side ----

struct Detections {
  std::vector<Rect> boxes;
  Mat features;  // [n, d]
  Vec scores;    // provider confidence, descending preferred
};

// Object detection plus region feature extraction for arbitrary boxes. Real
// detectors and RoI feature extractors adapt to this interface; the built-in
// implementations are desk-scale stand-ins.
class DetectionProvider {
 public:
  virtual ~DetectionProvider() = default;
  virtual std::string name() const = 0;
  virtual int feature_dim() const = 0;
  virtual Detections detect(const data::ImageView& image) const = 0;
  virtual Mat region_features(const data::ImageView& image,
                              const std::vector<Rect>& boxes) const = 0;
};

// Channel means over a box plus normalized geometry, pushed through a fixed
// seeded projection. Shared by the built-in providers.
inline Mat roi_pool_features(const data::ImageView& image, const std::vector<Rect>& boxes,
                             int dim, std::uint64_t seed) {
  const int c = image.channels();
  Mat raw(static_cast<Index>(boxes.size()), c + 5);
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    const Rect& box = boxes[b];
    const int x1 = std::max(0, static_cast<int>(std::floor(box.x1)));
    const int y1 = std::max(0, static_cast<int>(std::floor(box.y1)));
    const int x2 = std::min(image.width(), static_cast<int>(std::ceil(box.x2)));
    const int y2 = std::min(image.height(), static_cast<int>(std::ceil(box.y2)));
    require(x2 > x1 && y2 > y1, "roi_pool_features: degenerate box");
    for (int ch = 0; ch < c; ++ch) {
      double sum = 0.0;
      for (int h = y1; h < y2; ++h)
        for (int w = x1; w < x2; ++w) sum += image.at(h, w, ch);
      raw(static_cast<Index>(b), ch) = sum / (static_cast<double>(y2 - y1) * (x2 - x1));
    }
    raw(static_cast<Index>(b), c + 0) = box.center_x() / image.width();
    raw(static_cast<Index>(b), c + 1) = box.center_y() / image.height();
    raw(static_cast<Index>(b), c + 2) = box.width() / image.width();
    raw(static_cast<Index>(b), c + 3) = box.height() / image.height();
    raw(static_cast<Index>(b), c + 4) = box.area() / (image.width() * image.height());
  }
  std::mt19937_64 rng(mix_seed(seed, 0x726f69ULL));
  Mat proj = random_normal(c + 5, dim, rng, 1.0 / std::sqrt(static_cast<double>(c + 5)));
  return raw * proj;
}

// Fixed detections for tests and offline pipelines without a detector.
class StubDetectionProvider final : public DetectionProvider {
 public:
  StubDetectionProvider(std::vector<Rect> boxes, int dim, std::uint64_t seed)
      : boxes_(std::move(boxes)), dim_(dim), seed_(seed) {}

  std::string name() const override { return "stub"; }
  int feature_dim() const override { return dim_; }

  Detections detect(const data::ImageView& image) const override {
    Detections d;
    d.boxes = boxes_;
    if (!boxes_.empty()) d.features = roi_pool_features(image, boxes_, dim_, seed_);
    d.scores = Vec::LinSpaced(static_cast<Index>(boxes_.size()), 1.0,
                              boxes_.empty() ? 1.0 : 1.0 / static_cast<double>(boxes_.size()));
    return d;
  }

  Mat region_features(const data::ImageView& image,
                      const std::vector<Rect>& boxes) const override {
    return roi_pool_features(image, boxes, dim_, seed_);
  }

 private:
  std::vector<Rect> boxes_;
  int dim_;
  std::uint64_t seed_;
};

// Loads per-image detections from a sidecar JSON file:
//   {"boxes": [[x1,y1,x2,y2], ...], "features": [[...], ...], "scores": [...]}
class SidecarDetectionProvider final : public DetectionProvider {
 public:
  SidecarDetectionProvider(const std::string& path, int dim, std::uint64_t seed)
      : dim_(dim), seed_(seed) {
    std::ifstream in(path);
    if (!in.good()) throw std::runtime_error("detection sidecar: cannot open " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const std::exception& e) {
      throw std::runtime_error("detection sidecar: invalid JSON in " + path + ": " + e.what());
    }
    if (!j.contains("boxes") || !j.contains("features") || !j.contains("scores"))
      throw std::runtime_error("detection sidecar: missing boxes/features/scores in " + path);
    const auto& jb = j["boxes"];
    const auto& jf = j["features"];
    const auto& js = j["scores"];
    if (jb.size() != jf.size() || jb.size() != js.size())
      throw std::runtime_error("detection sidecar: boxes/features/scores lengths differ in " +
                               path);
    det_.boxes.reserve(jb.size());
    for (const auto& b : jb) {
      if (b.size() != 4) throw std::runtime_error("detection sidecar: box needs 4 coordinates");
      det_.boxes.push_back(Rect{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                                b[3].get<double>()});
    }
    if (!jf.empty()) {
      const Index d = static_cast<Index>(jf[0].size());
      if (d != dim_)
        throw std::runtime_error("detection sidecar: feature dim " + std::to_string(d) +
                                 " does not match configured dim " + std::to_string(dim_));
      det_.features.resize(static_cast<Index>(jf.size()), d);
      for (Index i = 0; i < det_.features.rows(); ++i) {
        if (static_cast<Index>(jf[i].size()) != d)
          throw std::runtime_error("detection sidecar: ragged feature rows in " + path);
        for (Index k = 0; k < d; ++k) det_.features(i, k) = jf[i][k].get<double>();
      }
    }
    det_.scores.resize(static_cast<Index>(js.size()));
    for (Index i = 0; i < det_.scores.size(); ++i) det_.scores(i) = js[i].get<double>();
  }

  std::string name() const override { return "sidecar"; }
  int feature_dim() const override { return dim_; }

  Detections detect(const data::ImageView&) const override { return det_; }

  Mat region_features(const data::ImageView& image,
                      const std::vector<Rect>& boxes) const override {
    return roi_pool_features(image, boxes, dim_, seed_);
  }

 private:
  Detections det_;
  int dim_;
  std::uint64_t seed_;
};

// Top-N detections by provider confidence. Zero detections fall back to a
// single whole-image node so the graph never degenerates.
inline Detections detect_objects(const data::ImageView& image, const DetectionProvider& provider,
                                 int top_n) {
  require(top_n >= 1, "detect_objects: top_n must be >= 1");
  Detections all = provider.detect(image);
  if (all.boxes.empty()) {
    Detections whole;
    whole.boxes = {Rect{0.0, 0.0, static_cast<double>(image.width()),
                        static_cast<double>(image.height())}};
    whole.features = provider.region_features(image, whole.boxes);
    whole.scores = Vec::Ones(1);
    return whole;
  }
  std::vector<Index> order(all.boxes.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return all.scores(a) > all.scores(b); });
  const Index keep = std::min<Index>(top_n, static_cast<Index>(order.size()));
  Detections out;
  out.features.resize(keep, all.features.cols());
  out.scores.resize(keep);
  for (Index i = 0; i < keep; ++i) {
    out.boxes.push_back(all.boxes[static_cast<std::size_t>(order[i])]);
    out.features.row(i) = all.features.row(order[i]);
    out.scores(i) = all.scores(order[i]);
  }
  return out;
}

// Object nodes plus the candidate node (always last).
inline GraphNodeSet build_node_set(const data::ImageView& image, const Detections& objects,
                                   const Rect& candidate, const DetectionProvider& provider) {
  GraphNodeSet nodes;
  const Index n = objects.features.rows();
  Mat cand_feat = provider.region_features(image, {candidate});
  nodes.features.resize(n + 1, objects.features.cols());
  nodes.features.topRows(n) = objects.features;
  nodes.features.row(n) = cand_feat.row(0);
  nodes.boxes = objects.boxes;
  nodes.boxes.push_back(candidate);
  nodes.centers.resize(n + 1, 2);
  for (Index i = 0; i <= n; ++i) {
    nodes.centers(i, 0) = nodes.boxes[static_cast<std::size_t>(i)].center_x();
    nodes.centers(i, 1) = nodes.boxes[static_cast<std::size_t>(i)].center_y();
  }
  nodes.validate(image.width(), image.height());
  return nodes;
}

// ---- scorer parameters ----

struct S2CNetParams {
  LinearMap app_left, app_right;  // d -> d
  LinearMap pos_m, pos_n;         // 2 -> 2
  Mat gate;                       // [max_nodes, d] or [d, d] for projection mode
  AttentionParams attention;      // d -> d each
  LinearMap mlp_hidden;           // d -> h
  LinearMap mlp_out;              // h -> 1

  static S2CNetParams init(const S2CNetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(mix_seed(seed, 0x73326332ULL));
    const int d = cfg.feature_dim;
    auto make_linear = [&](int in, int out, double stddev) {
      return LinearMap{random_normal(in, out, rng, stddev), Mat::Zero(1, out)};
    };
    S2CNetParams p;
    const double ws = 1.0 / std::sqrt(static_cast<double>(d));
    p.app_left = make_linear(d, d, ws);
    p.app_right = make_linear(d, d, ws);
    // Near-identity center projections keep the adjacency exponential tame.
    p.pos_m = LinearMap{Mat::Identity(2, 2) + random_normal(2, 2, rng, 0.05),
                        Mat::Zero(1, 2)};
    p.pos_n = LinearMap{Mat::Identity(2, 2) + random_normal(2, 2, rng, 0.05),
                        Mat::Zero(1, 2)};
    if (cfg.fag_mode == FagMode::hadamard)
      p.gate = Mat::Ones(cfg.max_nodes, d) + random_normal(cfg.max_nodes, d, rng, 0.1);
    else
      p.gate = Mat::Identity(d, d) + random_normal(d, d, rng, 0.1);
    p.attention.query = make_linear(d, d, ws);
    p.attention.key = make_linear(d, d, ws);
    p.attention.value = make_linear(d, d, ws);
    p.mlp_hidden = make_linear(d, cfg.mlp_hidden, std::sqrt(2.0 / d));
    p.mlp_out = make_linear(cfg.mlp_hidden, 1, 1.0 / std::sqrt(static_cast<double>(cfg.mlp_hidden)));
    return p;
  }
};

struct S2CNetVars {
  LinearMapVars app_left, app_right, pos_m, pos_n;
  ad::Var gate;
  AttentionVars attention;
  LinearMapVars mlp_hidden, mlp_out;
};

inline S2CNetVars s2cnet_inputs(ad::Tape& tape, const S2CNetParams& params) {
  S2CNetVars v;
  v.app_left = linear_inputs(tape, params.app_left);
  v.app_right = linear_inputs(tape, params.app_right);
  v.pos_m = linear_inputs(tape, params.pos_m);
  v.pos_n = linear_inputs(tape, params.pos_n);
  v.gate = tape.input(params.gate);
  v.attention = attention_inputs(tape, params.attention);
  v.mlp_hidden = linear_inputs(tape, params.mlp_hidden);
  v.mlp_out = linear_inputs(tape, params.mlp_out);
  return v;
}

// Full scorer forward for one node set. Centers are normalized to the unit
// square before the spatial matrix so the adjacency exponential stays
// bounded for pixel-scale inputs.
inline ad::Var score_node_set_t(ad::Tape& tape, const S2CNetVars& v, ad::Var features,
                                ad::Var centers_unit, const S2CNetConfig& cfg) {
  const Index n = tape.value(features).rows();
  require(n >= 2, "score_node_set: need at least one object node plus the candidate");
  ad::Var m_a = appearance_similarity_t(tape, features, v.app_left, v.app_right);
  ad::Var m_p = spatial_matrix_t(tape, centers_unit, v.pos_m, v.pos_n);
  ad::Var adj = adjacency_t(tape, m_a, m_p, cfg.spatial_exp_sign);
  ad::Var gate = v.gate;
  if (cfg.fag_mode == FagMode::hadamard) {
    require(n <= tape.value(v.gate).rows(),
            "score_node_set: node count exceeds configured max_nodes");
    gate = tape.rows(v.gate, 0, n);
  }
  ad::Var gated = feature_aggregation_gate_t(tape, adj, features, gate, cfg.fag_mode);
  ad::Var updated = graph_self_attention_t(tape, gated, features, m_a, m_p, v.attention);
  ad::Var pooled = tape.matmul(
      tape.constant(Mat::Constant(1, n, 1.0 / static_cast<double>(n))), updated);
  ad::Var hidden = tape.relu(apply_linear_t(tape, pooled, v.mlp_hidden));
  return apply_linear_t(tape, hidden, v.mlp_out);  // [1, 1]
}

inline Mat unit_centers(const GraphNodeSet& nodes, const data::ImageView& image) {
  Mat c = nodes.centers;
  c.col(0) /= static_cast<double>(image.width());
  c.col(1) /= static_cast<double>(image.height());
  return c;
}

// One aesthetic score per candidate; deterministic for fixed parameters.
inline std::vector<CropCandidate> score_candidates(const data::ImageView& image,
                                                   const std::vector<Rect>& candidates,
                                                   const DetectionProvider& provider,
                                                   const S2CNetParams& params,
                                                   const S2CNetConfig& cfg) {
  require(!candidates.empty(), "score_candidates: empty candidate list");
  Detections objects = detect_objects(image, provider, cfg.top_n);
  std::vector<CropCandidate> out;
  out.reserve(candidates.size());
  for (const Rect& c : candidates) {
    GraphNodeSet nodes = build_node_set(image, objects, c, provider);
    ad::Tape tape;
    S2CNetVars v = s2cnet_inputs(tape, params);
    ad::Var score = score_node_set_t(tape, v, tape.constant(nodes.features),
                                     tape.constant(unit_centers(nodes, image)), cfg);
    out.push_back(CropCandidate{c, tape.scalar_value(score)});
  }
  return out;
}

// Argmax by score; ties resolve to the lowest index.
inline CropCandidate select_best_crop(const std::vector<CropCandidate>& scored) {
  require(!scored.empty(), "select_best_crop: empty candidate list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scored.size(); ++i)
    if (scored[i].score > scored[best].score) best = i;
  return scored[best];
}

// Aspect-preserving anchor grid over the configured scales, strided by
// 1/stride_divisor of each image side. Flush right/bottom anchors included.
inline std::vector<Rect> grid_candidates(int img_w, int img_h, const S2CNetConfig& cfg) {
  std::vector<Rect> out;
  for (double s : cfg.scales) {
    const int w = std::max(1, static_cast<int>(std::lround(img_w * s)));
    const int h = std::max(1, static_cast<int>(std::lround(img_h * s)));
    const int sx = std::max(1, img_w / cfg.stride_divisor);
    const int sy = std::max(1, img_h / cfg.stride_divisor);
    std::vector<int> xs, ys;
    for (int x = 0; x + w <= img_w; x += sx) xs.push_back(x);
    if (xs.empty() || xs.back() != img_w - w) xs.push_back(img_w - w);
    for (int y = 0; y + h <= img_h; y += sy) ys.push_back(y);
    if (ys.empty() || ys.back() != img_h - h) ys.push_back(img_h - h);
    for (int y : ys)
      for (int x : xs)
        out.push_back(Rect{static_cast<double>(x), static_cast<double>(y),
                           static_cast<double>(x + w), static_cast<double>(y + h)});
  }
  return out;
}

// ---- crop head training loss ----

inline constexpr double kRankMargin = 0.1;

// Weighted smooth-L1 (weight 1 + |t - mean(t)|, beta = 1) plus a pairwise
// hinge on every ordered target pair.
inline double crop_train_loss(const Vec& pred, const Vec& target) {
  require(pred.size() == target.size(), "crop_train_loss: length mismatch");
  require(pred.size() >= 1, "crop_train_loss: empty inputs");
  const double t_mean = target.mean();
  double sl1 = 0.0;
  for (Index i = 0; i < pred.size(); ++i) {
    const double w = 1.0 + std::abs(target(i) - t_mean);
    const double r = std::abs(pred(i) - target(i));
    sl1 += w * (r < 1.0 ? 0.5 * r * r : r - 0.5);
  }
  sl1 /= static_cast<double>(pred.size());

  double rank = 0.0;
  int pairs = 0;
  for (Index i = 0; i < pred.size(); ++i) {
    for (Index j = 0; j < pred.size(); ++j) {
      if (target(i) > target(j)) {
        rank += std::max(0.0, kRankMargin - (pred(i) - pred(j)));
        ++pairs;
      }
    }
  }
  if (pairs > 0) rank /= static_cast<double>(pairs);
  return sl1 + rank;
}

inline ad::Var crop_train_loss_t(ad::Tape& tape, const std::vector<ad::Var>& pred,
                                 const Vec& target) {
  require(static_cast<Index>(pred.size()) == target.size(), "crop_train_loss: length mismatch");
  require(!pred.empty(), "crop_train_loss: empty inputs");
  const double t_mean = target.mean();
  ad::Var sl1 = tape.scalar(0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double w = 1.0 + std::abs(target(static_cast<Index>(i)) - t_mean);
    ad::Var r = tape.sub(pred[i], tape.scalar(target(static_cast<Index>(i))));
    const double rv = std::abs(tape.scalar_value(r));
    ad::Var term = rv < 1.0 ? tape.scale(tape.mul(r, r), 0.5)
                            : tape.sub(tape.abs(r), tape.scalar(0.5));
    sl1 = tape.add(sl1, tape.scale(term, w));
  }
  sl1 = tape.scale(sl1, 1.0 / static_cast<double>(pred.size()));

  ad::Var rank = tape.scalar(0.0);
  int pairs = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t j = 0; j < pred.size(); ++j) {
      if (target(static_cast<Index>(i)) > target(static_cast<Index>(j))) {
        ad::Var diff = tape.sub(pred[i], pred[j]);
        rank = tape.add(rank, tape.max_zero(tape.sub(tape.scalar(kRankMargin), diff)));
        ++pairs;
      }
    }
  }
  if (pairs > 0) rank = tape.scale(rank, 1.0 / static_cast<double>(pairs));
  return tape.add(sl1, rank);
}

}  // namespace vqat::crop
