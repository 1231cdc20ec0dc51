// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "support/oracles.hpp"
#include "vqat/crop/attention.hpp"
#include "vqat/crop/graph.hpp"

using namespace vqat;
using crop::AttentionParams;
using crop::LinearMap;

namespace {
LinearMap random_linear(Index in, Index out, std::mt19937_64& rng) {
  return LinearMap{oracle::random_mat(in, out, rng), oracle::random_mat(1, out, rng)};
}
}  // namespace

TEST_CASE("appearance similarity: identity maps on orthogonal unit features") {
  const Index d = 4;
  Mat feats = Mat::Identity(d, d);  // orthonormal rows
  Mat ma = crop::appearance_similarity(feats, LinearMap::identity(d), LinearMap::identity(d));
  REQUIRE(ma.isApprox(Mat::Identity(d, d) / 2.0, 1e-12));  // 1/sqrt(4)

  Mat zeros = Mat::Zero(3, d);
  Mat ma0 = crop::appearance_similarity(zeros, LinearMap::identity(d), LinearMap::identity(d));
  REQUIRE(ma0.cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("appearance similarity matches the double-loop oracle") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 3, d = 5;
    Mat feats = oracle::random_mat(n, d, rng);
    LinearMap left = random_linear(d, d, rng);
    LinearMap right = random_linear(d, d, rng);
    Mat got = crop::appearance_similarity(feats, left, right);
    Mat want = oracle::appearance(feats, left.weight, left.bias, right.weight, right.bias);
    REQUIRE(oracle::rel_error(got, want) < 1e-9);
  }
}

TEST_CASE("spatial matrix closed forms") {
  // Identical projections for every node -> all zeros.
  Mat centers(2, 2);
  centers << 1.0, 2.0, 5.0, -3.0;
  LinearMap to_zero{Mat::Zero(2, 2), Mat::Zero(1, 2)};
  REQUIRE(crop::spatial_matrix(centers, to_zero, to_zero).cwiseAbs().maxCoeff() < 1e-15);

  // Identity maps, centers (0,0) and (3,4): off-diagonal 3-4-5 squared.
  Mat c2(2, 2);
  c2 << 0.0, 0.0, 3.0, 4.0;
  Mat mp = crop::spatial_matrix(c2, LinearMap::identity(2), LinearMap::identity(2));
  REQUIRE(mp(0, 1) == Catch::Approx(25.0).margin(1e-12));
  REQUIRE(mp(1, 0) == Catch::Approx(25.0).margin(1e-12));
  REQUIRE(mp(0, 0) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("spatial matrix is non-negative and matches the oracle") {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 100; ++trial) {
    Mat centers = oracle::random_mat(4, 2, rng, -5.0, 5.0);
    LinearMap pm = random_linear(2, 2, rng);
    LinearMap pn = random_linear(2, 2, rng);
    Mat got = crop::spatial_matrix(centers, pm, pn);
    REQUIRE(got.minCoeff() >= 0.0);
    Mat want = oracle::spatial(centers, pm.weight, pm.bias, pn.weight, pn.bias);
    REQUIRE(oracle::rel_error(got, want) < 1e-9);
  }
}

TEST_CASE("adjacency: uniform two-node case and row sums") {
  Mat ones = Mat::Ones(2, 2);
  Mat zeros = Mat::Zero(2, 2);
  Mat a = crop::adjacency(ones, zeros);
  REQUIRE(a(0, 0) == Catch::Approx(0.5));
  REQUIRE(a(0, 1) == Catch::Approx(0.5));
  REQUIRE(a(1, 0) == Catch::Approx(0.5));

  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 1000; ++trial) {
    const Index n = 2 + trial % 4;
    Mat ma = oracle::random_mat(n, n, rng, 0.1, 1.0);  // positive similarities
    Mat mp = oracle::random_mat(n, n, rng, 0.0, 2.0);
    Mat adj = crop::adjacency(ma, mp);
    for (Index i = 0; i < n; ++i) REQUIRE(adj.row(i).sum() == Catch::Approx(1.0).margin(1e-6));
  }
}

TEST_CASE("adjacency matches the naive oracle including the sign switch") {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 4;
    Mat ma = oracle::random_mat(n, n, rng, 0.05, 1.0);
    Mat mp = oracle::random_mat(n, n, rng, 0.0, 2.0);
    const double sign = trial % 2 == 0 ? 1.0 : -1.0;
    Mat got = crop::adjacency(ma, mp, sign);
    Mat want = oracle::adjacency(ma, mp, sign);
    REQUIRE(oracle::rel_error(got, want) < 1e-9);
  }
}

TEST_CASE("build_crop_graph satisfies the type invariants") {
  std::mt19937_64 rng(57);
  crop::GraphParams params{random_linear(5, 5, rng), random_linear(5, 5, rng),
                           random_linear(2, 2, rng), random_linear(2, 2, rng)};
  for (int trial = 0; trial < 50; ++trial) {
    Mat feats = oracle::random_mat(4, 5, rng, 0.1, 1.0);
    Mat centers = oracle::random_mat(4, 2, rng, 0.0, 1.0);
    crop::CropGraph g = crop::build_crop_graph(feats, centers, params);
    REQUIRE(g.spatial.minCoeff() >= 0.0);
    for (Index i = 0; i < g.adjacency.rows(); ++i)
      REQUIRE(g.adjacency.row(i).sum() == Catch::Approx(1.0).margin(1e-6));
    REQUIRE(g.similarity.rows() == 4);
  }
}

TEST_CASE("adjacency reports the row with a vanishing denominator") {
  Mat ma(2, 2), mp = Mat::Zero(2, 2);
  ma << 1.0, -1.0,  // row 0 cancels exactly
      1.0, 1.0;
  REQUIRE_THROWS_WITH(crop::adjacency(ma, mp), Catch::Matchers::ContainsSubstring("row 0"));
}

TEST_CASE("FAG identity aggregation and stochastic mixing") {
  const Index n = 3, d = 4;
  std::mt19937_64 rng(59);
  Mat x = oracle::random_mat(n, d, rng, -1.0, 1.0);
  Mat ones = Mat::Ones(n, d);

  // A = I, Z = 1 -> ReLU(X).
  Mat got = crop::feature_aggregation_gate(Mat::Identity(n, n), x, ones);
  REQUIRE(got.isApprox(x.cwiseMax(0.0), 1e-12));

  // Row-stochastic A with non-negative X: rows are convex combinations.
  Mat xp = oracle::random_mat(n, d, rng, 0.0, 1.0);
  Mat a = oracle::random_mat(n, n, rng, 0.1, 1.0);
  for (Index i = 0; i < n; ++i) a.row(i) /= a.row(i).sum();
  Mat mixed = crop::feature_aggregation_gate(a, xp, ones);
  REQUIRE(mixed.minCoeff() >= 0.0);
  for (Index k = 0; k < d; ++k) {
    REQUIRE(mixed.col(k).maxCoeff() <= xp.col(k).maxCoeff() + 1e-12);
    REQUIRE(mixed.col(k).minCoeff() >= xp.col(k).minCoeff() - 1e-12);
  }
}

TEST_CASE("FAG matches the loop oracle and rejects bad shapes") {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 3, d = 4;
    Mat a = oracle::random_mat(n, n, rng);
    Mat x = oracle::random_mat(n, d, rng);
    Mat z = oracle::random_mat(n, d, rng);
    Mat got = crop::feature_aggregation_gate(a, x, z);
    REQUIRE(got.minCoeff() >= 0.0);
    REQUIRE(oracle::rel_error(got, oracle::fag_hadamard(a, x, z)) < 1e-9);
  }
  REQUIRE_THROWS_AS(
      crop::feature_aggregation_gate(Mat::Ones(2, 2), Mat::Ones(3, 4), Mat::Ones(3, 4)),
      std::invalid_argument);
  REQUIRE_THROWS_AS(
      crop::feature_aggregation_gate(Mat::Ones(3, 3), Mat::Ones(3, 4), Mat::Ones(2, 4)),
      std::invalid_argument);
}

TEST_CASE("attention with zero query averages the value rows") {
  const Index n = 4, d = 3;
  std::mt19937_64 rng(67);
  Mat x = oracle::random_mat(n, d, rng);
  Mat zeros = Mat::Zero(n, n);
  Mat out = crop::graph_self_attention(Mat::Zero(n, d), x, zeros, zeros,
                                       AttentionParams::identity(d));
  RowVec mean = x.colwise().mean();
  for (Index i = 0; i < n; ++i) REQUIRE((out.row(i) - mean).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("attention weights row-sum to one and match the oracle") {
  std::mt19937_64 rng(71);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 3, d = 4;
    Mat gated = oracle::random_mat(n, d, rng, 0.0, 1.0);
    Mat x = oracle::random_mat(n, d, rng);
    Mat ma = oracle::random_mat(n, n, rng);
    Mat mp = oracle::random_mat(n, n, rng, 0.0, 2.0);
    AttentionParams params;
    params.query = random_linear(d, d, rng);
    params.key = random_linear(d, d, rng);
    params.value = random_linear(d, d, rng);

    Mat got = crop::graph_self_attention(gated, x, ma, mp, params);
    Mat want = oracle::attention(gated, x, ma, mp, params.query.weight, params.query.bias,
                                 params.key.weight, params.key.bias, params.value.weight,
                                 params.value.bias);
    REQUIRE(oracle::rel_error(got, want) < 1e-8);
  }
}

TEST_CASE("tape versions agree with the plain graph operations") {
  std::mt19937_64 rng(73);
  const Index n = 4, d = 5;
  Mat feats = oracle::random_mat(n, d, rng);
  Mat centers = oracle::random_mat(n, 2, rng);
  LinearMap l = random_linear(d, d, rng), r = random_linear(d, d, rng);
  LinearMap pm = random_linear(2, 2, rng), pn = random_linear(2, 2, rng);

  ad::Tape tape;
  ad::Var f = tape.constant(feats);
  ad::Var c = tape.constant(centers);
  ad::Var ma = crop::appearance_similarity_t(tape, f, crop::linear_inputs(tape, l),
                                             crop::linear_inputs(tape, r));
  ad::Var mp = crop::spatial_matrix_t(tape, c, crop::linear_inputs(tape, pm),
                                      crop::linear_inputs(tape, pn));
  REQUIRE(oracle::rel_error(tape.value(ma), crop::appearance_similarity(feats, l, r)) < 1e-12);
  REQUIRE(oracle::rel_error(tape.value(mp), crop::spatial_matrix(centers, pm, pn)) < 1e-12);

  Mat ma_pos = oracle::random_mat(n, n, rng, 0.1, 1.0);
  Mat mp_pos = oracle::random_mat(n, n, rng, 0.0, 1.5);
  ad::Var adj = crop::adjacency_t(tape, tape.constant(ma_pos), tape.constant(mp_pos));
  REQUIRE(oracle::rel_error(tape.value(adj), crop::adjacency(ma_pos, mp_pos)) < 1e-12);
}

TEST_CASE("adjacency, FAG and attention gradients match finite differences") {
  std::mt19937_64 rng(79);
  const Index n = 3, d = 4;
  for (int trial = 0; trial < 20; ++trial) {
    Mat ma0 = oracle::random_mat(n, n, rng, 0.2, 1.0);
    Mat mp0 = oracle::random_mat(n, n, rng, 0.0, 1.5);
    Mat cw = oracle::random_mat(n, n, rng);

    {  // adjacency w.r.t. both inputs
      ad::Tape tape;
      ad::Var ma = tape.input(ma0);
      ad::Var mp = tape.input(mp0);
      ad::Var loss = tape.sum(tape.mul(crop::adjacency_t(tape, ma, mp), tape.constant(cw)));
      tape.backward(loss);
      auto eval_ma = [&](const Mat& probe) {
        return crop::adjacency(probe, mp0).cwiseProduct(cw).sum();
      };
      auto eval_mp = [&](const Mat& probe) {
        return crop::adjacency(ma0, probe).cwiseProduct(cw).sum();
      };
      REQUIRE(oracle::rel_error(tape.grad(ma), oracle::finite_diff(eval_ma, ma0)) < 1e-4);
      REQUIRE(oracle::rel_error(tape.grad(mp), oracle::finite_diff(eval_mp, mp0)) < 1e-4);
    }

    Mat x0 = oracle::random_mat(n, d, rng);
    Mat z0 = oracle::random_mat(n, d, rng);
    Mat a0 = oracle::random_mat(n, n, rng);
    Mat cd = oracle::random_mat(n, d, rng);
    {  // FAG w.r.t. features
      ad::Tape tape;
      ad::Var x = tape.input(x0);
      ad::Var out = crop::feature_aggregation_gate_t(tape, tape.constant(a0), x,
                                                     tape.constant(z0));
      ad::Var loss = tape.sum(tape.mul(out, tape.constant(cd)));
      tape.backward(loss);
      auto eval = [&](const Mat& probe) {
        return crop::feature_aggregation_gate(a0, probe, z0).cwiseProduct(cd).sum();
      };
      REQUIRE(oracle::rel_error(tape.grad(x), oracle::finite_diff(eval, x0)) < 1e-4);
    }

    {  // attention w.r.t. gated input and node features
      Mat gated0 = oracle::random_mat(n, d, rng, 0.0, 1.0);
      AttentionParams params;
      params.query = random_linear(d, d, rng);
      params.key = random_linear(d, d, rng);
      params.value = random_linear(d, d, rng);
      ad::Tape tape;
      ad::Var gated = tape.input(gated0);
      ad::Var x = tape.input(x0);
      ad::Var out = crop::graph_self_attention_t(tape, gated, x, tape.constant(ma0),
                                                 tape.constant(mp0),
                                                 crop::attention_inputs(tape, params));
      ad::Var loss = tape.sum(tape.mul(out, tape.constant(cd)));
      tape.backward(loss);
      auto eval_gated = [&](const Mat& probe) {
        return crop::graph_self_attention(probe, x0, ma0, mp0, params).cwiseProduct(cd).sum();
      };
      auto eval_x = [&](const Mat& probe) {
        return crop::graph_self_attention(gated0, probe, ma0, mp0, params).cwiseProduct(cd).sum();
      };
      REQUIRE(oracle::rel_error(tape.grad(gated), oracle::finite_diff(eval_gated, gated0)) < 1e-4);
      REQUIRE(oracle::rel_error(tape.grad(x), oracle::finite_diff(eval_x, x0)) < 1e-4);
    }
  }
}
