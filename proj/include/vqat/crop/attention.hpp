// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "vqat/core/autodiff.hpp"
#include "vqat/core/common.hpp"
#include "vqat/crop/graph.hpp"

namespace vqat::crop {

enum class FagMode { hadamard, projection };

inline FagMode fag_mode_from_string(const std::string& s) {
  if (s == "hadamard") return FagMode::hadamard;
  if (s == "projection") return FagMode::projection;
  throw std::invalid_argument("fag_mode must be 'hadamard' or 'projection', got '" + s + "'");
}

// Feature aggregation gate. Default mixes gated node features through the
// adjacency: X' = ReLU(A (Z elementwise* X)) with Z shaped like X. The
// projection variant reads the gate as a [d, d] map: X' = ReLU(A X W).
inline Mat feature_aggregation_gate(const Mat& adjacency_m, const Mat& features, const Mat& gate,
                                    FagMode mode = FagMode::hadamard) {
  const Index n = features.rows();
  require(adjacency_m.rows() == n && adjacency_m.cols() == n,
          "feature_aggregation_gate: adjacency must be [(N+1), (N+1)]");
  if (mode == FagMode::hadamard) {
    require(gate.rows() == n && gate.cols() == features.cols(),
            "feature_aggregation_gate: gate must match feature shape");
    return (adjacency_m * gate.cwiseProduct(features)).cwiseMax(0.0);
  }
  require(gate.rows() == features.cols() && gate.cols() == features.cols(),
          "feature_aggregation_gate: projection gate must be [d, d]");
  return (adjacency_m * features * gate).cwiseMax(0.0);
}

struct AttentionParams {
  LinearMap query;  // d -> d
  LinearMap key;
  LinearMap value;

  static AttentionParams identity(Index dim) {
    return AttentionParams{LinearMap::identity(dim), LinearMap::identity(dim),
                           LinearMap::identity(dim)};
  }
};

// Graph-aware self-attention: softmax(Q K^T / sqrt(d) + M_a + M_p) V, with
// Q from the gated features and K, V from the original node features.
inline Mat graph_self_attention(const Mat& gated, const Mat& features, const Mat& similarity,
                                const Mat& spatial, const AttentionParams& params) {
  const Index n = features.rows();
  const double d = static_cast<double>(features.cols());
  require(gated.rows() == n && gated.cols() == features.cols(),
          "graph_self_attention: gated features must match node features");
  require(similarity.rows() == n && similarity.cols() == n &&
              spatial.rows() == n && spatial.cols() == n,
          "graph_self_attention: bias matrices must be [(N+1), (N+1)]");
  Mat q = params.query.apply(gated);
  Mat k = params.key.apply(features);
  Mat v = params.value.apply(features);
  Mat logits = q * k.transpose() / std::sqrt(d) + similarity + spatial;
  Mat weights(n, n);
  for (Index i = 0; i < n; ++i) {
    RowVec row = logits.row(i);
    RowVec e = (row.array() - row.maxCoeff()).exp();
    weights.row(i) = e / e.sum();
  }
  return weights * v;
}

// ---- tape builders ----

inline ad::Var feature_aggregation_gate_t(ad::Tape& tape, ad::Var adjacency_v, ad::Var features,
                                          ad::Var gate, FagMode mode = FagMode::hadamard) {
  if (mode == FagMode::hadamard)
    return tape.relu(tape.matmul(adjacency_v, tape.mul(gate, features)));
  return tape.relu(tape.matmul(tape.matmul(adjacency_v, features), gate));
}

struct AttentionVars {
  LinearMapVars query, key, value;
};

inline AttentionVars attention_inputs(ad::Tape& tape, const AttentionParams& params) {
  return AttentionVars{linear_inputs(tape, params.query), linear_inputs(tape, params.key),
                       linear_inputs(tape, params.value)};
}

inline ad::Var graph_self_attention_t(ad::Tape& tape, ad::Var gated, ad::Var features,
                                      ad::Var similarity, ad::Var spatial,
                                      const AttentionVars& params) {
  const double d = static_cast<double>(tape.value(features).cols());
  ad::Var q = apply_linear_t(tape, gated, params.query);
  ad::Var k = apply_linear_t(tape, features, params.key);
  ad::Var v = apply_linear_t(tape, features, params.value);
  ad::Var logits = tape.add(
      tape.add(tape.scale(tape.matmul(q, tape.transpose(k)), 1.0 / std::sqrt(d)), similarity),
      spatial);
  return tape.matmul(tape.softmax_rows(logits), v);
}

}  // namespace vqat::crop
