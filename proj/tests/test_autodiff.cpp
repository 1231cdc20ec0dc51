// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "support/oracles.hpp"
#include "vqat/core/autodiff.hpp"

using vqat::Mat;
using vqat::ad::Tape;
using vqat::ad::Var;

namespace {

// Gradient check for a scalar-valued tape program against finite differences
// over a plain re-evaluation.
template <typename Build>
void check_gradient(const Mat& x0, const Build& build, double tol = 1e-6) {
  Tape tape;
  Var x = tape.input(x0);
  Var loss = build(tape, x);
  tape.backward(loss);
  Mat analytic = tape.grad(x);

  auto eval = [&](const Mat& probe) {
    Tape t;
    Var px = t.input(probe);
    return t.scalar_value(build(t, px));
  };
  Mat numeric = oracle::finite_diff(eval, x0);
  REQUIRE(oracle::rel_error(analytic, numeric) < tol);
}

}  // namespace

TEST_CASE("elementwise ops and reductions differentiate correctly") {
  std::mt19937_64 rng(11);
  Mat x0 = oracle::random_mat(3, 4, rng, 0.2, 2.0);

  check_gradient(x0, [](Tape& t, Var x) { return t.sum(t.mul(x, x)); });
  check_gradient(x0, [](Tape& t, Var x) { return t.mean(t.exp(t.scale(x, 0.3))); });
  check_gradient(x0, [](Tape& t, Var x) { return t.sum(t.log(x)); });
  check_gradient(x0, [](Tape& t, Var x) { return t.sum(t.sigmoid(x)); });
  check_gradient(x0, [](Tape& t, Var x) {
    return t.sum(t.div(x, t.add_scalar(t.mul(x, x), 1.0)));
  });
  check_gradient(x0, [](Tape& t, Var x) { return t.sum(t.abs(t.add_scalar(x, -1.0))); });
}

TEST_CASE("matmul, transpose and broadcasts differentiate correctly") {
  std::mt19937_64 rng(12);
  Mat x0 = oracle::random_mat(3, 5, rng);
  Mat w = oracle::random_mat(5, 2, rng);
  Mat b = oracle::random_mat(1, 2, rng);

  check_gradient(x0, [&](Tape& t, Var x) {
    return t.sum(t.linear(x, t.constant(w), t.constant(b)));
  });
  check_gradient(x0, [&](Tape& t, Var x) {
    return t.sum(t.matmul(t.transpose(x), x));
  });
  check_gradient(x0, [](Tape& t, Var x) {
    return t.sum(t.mul(t.broadcast_col(t.row_sum(x), 5), x));
  });
  check_gradient(x0, [](Tape& t, Var x) {
    return t.sum(t.mul(t.broadcast_row(t.col_sum(x), 3), x));
  });
  check_gradient(x0, [](Tape& t, Var x) { return t.sum(t.rows(x, 1, 2)); });
}

TEST_CASE("relu, clamp and softmax differentiate away from kinks") {
  std::mt19937_64 rng(13);
  Mat x0 = oracle::random_mat(4, 4, rng, 0.1, 1.5);
  x0(0, 0) = -0.7;  // exercise the inactive side
  x0(2, 3) = -1.2;

  check_gradient(x0, [](Tape& t, Var x) { return t.sum(t.relu(x)); });
  check_gradient(x0, [](Tape& t, Var x) { return t.sum(t.mul(t.clamp(x, 0.0, 1.0), x)); });

  Mat w = oracle::random_mat(4, 4, rng);
  check_gradient(x0, [&](Tape& t, Var x) {
    return t.sum(t.mul(t.softmax_rows(x), t.constant(w)));
  });
}

TEST_CASE("gradients accumulate over reused nodes") {
  Mat x0(1, 1);
  x0(0, 0) = 3.0;
  Tape t;
  Var x = t.input(x0);
  Var y = t.add(t.mul(x, x), x);  // x^2 + x, dy/dx = 2x + 1 = 7
  t.backward(y);
  REQUIRE(t.grad(x)(0, 0) == Catch::Approx(7.0).epsilon(1e-12));
}

TEST_CASE("constants receive no gradient and backward requires a scalar root") {
  Tape t;
  Var c = t.constant(Mat::Ones(2, 2));
  Var x = t.input(Mat::Ones(2, 2));
  Var loss = t.sum(t.mul(c, x));
  t.backward(loss);
  REQUIRE(t.grad(x).isApprox(Mat::Ones(2, 2)));

  Var non_scalar = t.add(x, x);
  REQUIRE_THROWS_AS(t.backward(non_scalar), std::invalid_argument);
}

TEST_CASE("shape mismatches are rejected") {
  Tape t;
  Var a = t.input(Mat::Ones(2, 3));
  Var b = t.input(Mat::Ones(3, 2));
  REQUIRE_THROWS_AS(t.add(a, b), std::invalid_argument);
  REQUIRE_THROWS_AS(t.mul(a, b), std::invalid_argument);
  REQUIRE_THROWS_AS(t.matmul(a, a), std::invalid_argument);
}
