// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>

#include "vqat/core/autodiff.hpp"
#include "vqat/core/common.hpp"
#include "vqat/crop/types.hpp"

namespace vqat::crop {

// Adjacency denominators below this magnitude abort instead of renormalizing.
inline constexpr double kAdjacencyDenEps = 1e-12;

struct LinearMap {
  Mat weight;  // [in, out]
  Mat bias;    // [1, out]

  Mat apply(const Mat& x) const { return (x * weight).rowwise() + RowVec(bias.row(0)); }

  static LinearMap identity(Index dim) {
    return LinearMap{Mat::Identity(dim, dim), Mat::Zero(1, dim)};
  }
};

// Pairwise feature correlation in the embedding space:
// M_a(i,j) = left(x_i) . right(x_j) / sqrt(d). Generally asymmetric.
inline Mat appearance_similarity(const Mat& features, const LinearMap& left,
                                 const LinearMap& right) {
  require_finite(features, "appearance_similarity: features");
  Mat l = left.apply(features);
  Mat r = right.apply(features);
  return l * r.transpose() / std::sqrt(static_cast<double>(features.cols()));
}

// Squared distance between projected box centers:
// M_p(i,j) = || (W_m p_i + b_m) - (W_n p_j + b_n) ||^2.
inline Mat spatial_matrix(const Mat& centers, const LinearMap& proj_m, const LinearMap& proj_n) {
  require_finite(centers, "spatial_matrix: centers");
  require(centers.cols() == 2, "spatial_matrix: centers must be [(N+1), 2]");
  Mat u = proj_m.apply(centers);
  Mat v = proj_n.apply(centers);
  Vec su = u.rowwise().squaredNorm();
  Vec sv = v.rowwise().squaredNorm();
  Mat mp = (-2.0 * u * v.transpose());
  mp.colwise() += su;
  mp.rowwise() += RowVec(sv);
  return mp.cwiseMax(0.0);  // squared norms; clears cancellation dust
}

struct GraphParams {
  LinearMap app_left, app_right;  // d -> d feature projections
  LinearMap pos_m, pos_n;         // 2 -> k center projections
};

// Row-normalized similarity * exp(sign * spatial). The literal formula uses
// sign = +1; sign = -1 decays with distance instead.
inline Mat adjacency(const Mat& similarity, const Mat& spatial, double exp_sign = 1.0) {
  require(similarity.rows() == similarity.cols(), "adjacency: similarity must be square");
  require(spatial.rows() == similarity.rows() && spatial.cols() == similarity.cols(),
          "adjacency: shape mismatch between similarity and spatial");
  Mat numer = similarity.cwiseProduct((exp_sign * spatial.array()).exp().matrix());
  Mat a(numer.rows(), numer.cols());
  for (Index i = 0; i < numer.rows(); ++i) {
    const double den = numer.row(i).sum();
    if (std::abs(den) < kAdjacencyDenEps)
      throw std::runtime_error("adjacency: vanishing denominator in row " + std::to_string(i));
    a.row(i) = numer.row(i) / den;
  }
  return a;
}

// All three relation matrices for one node set.
inline CropGraph build_crop_graph(const Mat& features, const Mat& centers,
                                  const GraphParams& params, double exp_sign = 1.0) {
  CropGraph g;
  g.similarity = appearance_similarity(features, params.app_left, params.app_right);
  g.spatial = spatial_matrix(centers, params.pos_m, params.pos_n);
  g.adjacency = adjacency(g.similarity, g.spatial, exp_sign);
  return g;
}

// ---- tape builders ----

struct LinearMapVars {
  ad::Var weight, bias;
};

inline LinearMapVars linear_inputs(ad::Tape& tape, const LinearMap& map) {
  return LinearMapVars{tape.input(map.weight), tape.input(map.bias)};
}

inline ad::Var apply_linear_t(ad::Tape& tape, ad::Var x, const LinearMapVars& map) {
  return tape.linear(x, map.weight, map.bias);
}

inline ad::Var appearance_similarity_t(ad::Tape& tape, ad::Var features, const LinearMapVars& left,
                                       const LinearMapVars& right) {
  const double d = static_cast<double>(tape.value(features).cols());
  ad::Var l = apply_linear_t(tape, features, left);
  ad::Var r = apply_linear_t(tape, features, right);
  return tape.scale(tape.matmul(l, tape.transpose(r)), 1.0 / std::sqrt(d));
}

inline ad::Var spatial_matrix_t(ad::Tape& tape, ad::Var centers, const LinearMapVars& proj_m,
                                const LinearMapVars& proj_n) {
  const Index n = tape.value(centers).rows();
  ad::Var u = apply_linear_t(tape, centers, proj_m);
  ad::Var v = apply_linear_t(tape, centers, proj_n);
  ad::Var su = tape.row_sum(tape.mul(u, u));                    // [n, 1]
  ad::Var sv = tape.row_sum(tape.mul(v, v));                    // [n, 1]
  ad::Var cross = tape.scale(tape.matmul(u, tape.transpose(v)), -2.0);
  ad::Var mp = tape.add(tape.add(cross, tape.broadcast_col(su, n)),
                        tape.broadcast_row(tape.transpose(sv), n));
  return tape.max_zero(mp);
}

inline ad::Var adjacency_t(ad::Tape& tape, ad::Var similarity, ad::Var spatial,
                           double exp_sign = 1.0) {
  const Index n = tape.value(similarity).rows();
  require(n == tape.value(similarity).cols(), "adjacency: similarity must be square");
  require(tape.value(spatial).rows() == n && tape.value(spatial).cols() == n,
          "adjacency: shape mismatch between similarity and spatial");
  ad::Var numer = tape.mul(similarity, tape.exp(tape.scale(spatial, exp_sign)));
  ad::Var den = tape.row_sum(numer);
  const Mat& den_v = tape.value(den);
  for (Index i = 0; i < den_v.rows(); ++i) {
    if (std::abs(den_v(i, 0)) < kAdjacencyDenEps)
      throw std::runtime_error("adjacency: vanishing denominator in row " + std::to_string(i));
  }
  return tape.div(numer, tape.broadcast_col(den, n));
}

}  // namespace vqat::crop
