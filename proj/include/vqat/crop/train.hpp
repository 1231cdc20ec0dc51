// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "vqat/core/autodiff.hpp"
#include "vqat/core/common.hpp"
#include "vqat/crop/s2cnet.hpp"
#include "vqat/data/frames.hpp"
#include "vqat/train/optimizer.hpp"

namespace vqat::crop {

struct CropTrainExample {
  data::FrameStack image;  // single frame
  std::vector<Rect> objects;
  std::vector<Rect> candidates;
  Vec targets;
};

struct CropTrainOptions {
  int epochs = 30;
  double learning_rate = 0.02;
  std::uint64_t feature_seed = 0;
  std::string optimizer = "adam";
};

namespace detail {
inline std::vector<std::pair<Mat*, ad::Var>> bind_params(S2CNetParams& p, const S2CNetVars& v) {
  return {
      {&p.app_left.weight, v.app_left.weight},   {&p.app_left.bias, v.app_left.bias},
      {&p.app_right.weight, v.app_right.weight}, {&p.app_right.bias, v.app_right.bias},
      {&p.pos_m.weight, v.pos_m.weight},         {&p.pos_m.bias, v.pos_m.bias},
      {&p.pos_n.weight, v.pos_n.weight},         {&p.pos_n.bias, v.pos_n.bias},
      {&p.gate, v.gate},
      {&p.attention.query.weight, v.attention.query.weight},
      {&p.attention.query.bias, v.attention.query.bias},
      {&p.attention.key.weight, v.attention.key.weight},
      {&p.attention.key.bias, v.attention.key.bias},
      {&p.attention.value.weight, v.attention.value.weight},
      {&p.attention.value.bias, v.attention.value.bias},
      {&p.mlp_hidden.weight, v.mlp_hidden.weight}, {&p.mlp_hidden.bias, v.mlp_hidden.bias},
      {&p.mlp_out.weight, v.mlp_out.weight},       {&p.mlp_out.bias, v.mlp_out.bias},
  };
}
}  // namespace detail

// Regresses candidate targets with the combined smooth-L1 + ranking loss.
// One gradient step per example per epoch. Returns the mean loss of the
// final epoch.
inline double train_crop_head(S2CNetParams& params, const std::vector<CropTrainExample>& examples,
                              const S2CNetConfig& cfg, const CropTrainOptions& opts) {
  require(!examples.empty(), "train_crop_head: no examples");
  cfg.validate();
  auto optimizer = train::make_optimizer(opts.optimizer, opts.learning_rate);

  double last_epoch_loss = 0.0;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (const CropTrainExample& ex : examples) {
      data::ImageView view{&ex.image, 0};
      StubDetectionProvider provider(ex.objects, cfg.feature_dim, opts.feature_seed);
      Detections objects = detect_objects(view, provider, cfg.top_n);

      ad::Tape tape;
      S2CNetVars vars = s2cnet_inputs(tape, params);
      std::vector<ad::Var> scores;
      scores.reserve(ex.candidates.size());
      for (const Rect& c : ex.candidates) {
        GraphNodeSet nodes = build_node_set(view, objects, c, provider);
        scores.push_back(score_node_set_t(tape, vars, tape.constant(nodes.features),
                                          tape.constant(unit_centers(nodes, view)), cfg));
      }
      ad::Var loss = crop_train_loss_t(tape, scores, ex.targets);
      tape.backward(loss);
      epoch_loss += tape.scalar_value(loss);

      auto bindings = detail::bind_params(params, vars);
      std::vector<Mat*> tensors;
      std::vector<Mat> grads;
      tensors.reserve(bindings.size());
      grads.reserve(bindings.size());
      for (auto& [tensor, var] : bindings) {
        tensors.push_back(tensor);
        grads.push_back(tape.grad(var));
      }
      optimizer->apply(tensors, grads);
    }
    last_epoch_loss = epoch_loss / static_cast<double>(examples.size());
  }
  return last_epoch_loss;
}

}  // namespace vqat::crop
