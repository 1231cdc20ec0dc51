// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vqat/core/common.hpp"

namespace vqat::ad {

// Reverse-mode differentiation over dense double matrices.
//
// A Tape owns a growing list of nodes; every operation appends one node whose
// value is computed eagerly and whose backward closure scatters the incoming
// gradient to its parents. Node creation order is a valid topological order,
// so backward() is a single reverse sweep.

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  // Differentiable leaf (model parameter or checked input).
  Var input(Mat value) { return push(std::move(value), true, {}); }

  // Data that never needs a gradient (labels, masks, fixed coefficients).
  Var constant(Mat value) { return push(std::move(value), false, {}); }

  Var scalar(double v) {
    Mat m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  const Mat& value(Var v) const { return node(v).value; }

  double scalar_value(Var v) const {
    const Mat& m = node(v).value;
    require(m.rows() == 1 && m.cols() == 1, "scalar_value: node is not 1x1");
    return m(0, 0);
  }

  // Gradient of the last backward() root with respect to v.
  const Mat& grad(Var v) const { return node(v).grad; }

  void backward(Var root) {
    const Node& r = node(root);
    require(r.value.rows() == 1 && r.value.cols() == 1, "backward: root must be a 1x1 scalar");
    for (Node& n : nodes_) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    nodes_[static_cast<std::size_t>(root.id)].grad(0, 0) = 1.0;
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.requires_grad && n.backprop) n.backprop(*this);
    }
  }

  // ---- elementwise ----

  Var add(Var a, Var b) {
    check_same_shape(a, b, "add");
    Mat out = value(a) + value(b);
    return binary(a, b, std::move(out), [](Tape& t, Var a, Var b, const Mat& g) {
      t.accumulate(a, g);
      t.accumulate(b, g);
    });
  }

  Var sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    Mat out = value(a) - value(b);
    return binary(a, b, std::move(out), [](Tape& t, Var a, Var b, const Mat& g) {
      t.accumulate(a, g);
      t.accumulate(b, -g);
    });
  }

  Var mul(Var a, Var b) {
    check_same_shape(a, b, "mul");
    Mat out = value(a).cwiseProduct(value(b));
    return binary(a, b, std::move(out), [](Tape& t, Var a, Var b, const Mat& g) {
      t.accumulate(a, g.cwiseProduct(t.value(b)));
      t.accumulate(b, g.cwiseProduct(t.value(a)));
    });
  }

  Var div(Var a, Var b) {
    check_same_shape(a, b, "div");
    Mat out = value(a).cwiseQuotient(value(b));
    return binary(a, b, std::move(out), [](Tape& t, Var a, Var b, const Mat& g) {
      const Mat& vb = t.value(b);
      t.accumulate(a, g.cwiseQuotient(vb));
      t.accumulate(b, -g.cwiseProduct(t.value(a)).cwiseQuotient(vb.cwiseProduct(vb)));
    });
  }

  Var scale(Var a, double s) {
    Mat out = value(a) * s;
    return unary(a, std::move(out), [s](Tape& t, Var a, const Mat& g) { t.accumulate(a, s * g); });
  }

  Var add_scalar(Var a, double s) {
    Mat out = value(a).array() + s;
    return unary(a, std::move(out), [](Tape& t, Var a, const Mat& g) { t.accumulate(a, g); });
  }

  Var exp(Var a) {
    Mat out = value(a).array().exp();
    Var r = unary(a, std::move(out), {});
    set_backprop(r, [a, r](Tape& t) { t.accumulate(a, t.grad(r).cwiseProduct(t.value(r))); });
    return r;
  }

  Var log(Var a) {
    Mat out = value(a).array().log();
    return unary(a, std::move(out), [](Tape& t, Var a, const Mat& g) {
      t.accumulate(a, g.cwiseQuotient(t.value(a)));
    });
  }

  Var relu(Var a) {
    Mat out = value(a).cwiseMax(0.0);
    return unary(a, std::move(out), [](Tape& t, Var a, const Mat& g) {
      const Mat& va = t.value(a);
      t.accumulate(a, (va.array() > 0.0).select(g, Mat::Zero(g.rows(), g.cols())));
    });
  }

  Var sigmoid(Var a) {
    Mat out = (1.0 / (1.0 + (-value(a).array()).exp())).matrix();
    Var r = unary(a, std::move(out), {});
    set_backprop(r, [a, r](Tape& t) {
      const Mat& s = t.value(r);
      t.accumulate(a, t.grad(r).cwiseProduct(s.cwiseProduct(Mat::Ones(s.rows(), s.cols()) - s)));
    });
    return r;
  }

  Var abs(Var a) {
    Mat out = value(a).cwiseAbs();
    return unary(a, std::move(out), [](Tape& t, Var a, const Mat& g) {
      t.accumulate(a, g.cwiseProduct(t.value(a).unaryExpr(
                          [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); })));
    });
  }

  // Subgradient 0 where the clamp is active.
  Var clamp(Var a, double lo, double hi) {
    Mat out = value(a).cwiseMax(lo).cwiseMin(hi);
    return unary(a, std::move(out), [lo, hi](Tape& t, Var a, const Mat& g) {
      const Mat& va = t.value(a);
      Mat masked = g;
      for (Index i = 0; i < va.rows(); ++i)
        for (Index j = 0; j < va.cols(); ++j)
          if (va(i, j) <= lo || va(i, j) >= hi) masked(i, j) = 0.0;
      t.accumulate(a, masked);
    });
  }

  Var max_zero(Var a) { return clamp_below(a, 0.0); }

  // ---- linear algebra ----

  Var matmul(Var a, Var b) {
    require(value(a).cols() == value(b).rows(), "matmul: inner dimensions disagree");
    Mat out = value(a) * value(b);
    return binary(a, b, std::move(out), [](Tape& t, Var a, Var b, const Mat& g) {
      t.accumulate(a, g * t.value(b).transpose());
      t.accumulate(b, t.value(a).transpose() * g);
    });
  }

  Var transpose(Var a) {
    Mat out = value(a).transpose();
    return unary(a, std::move(out),
                 [](Tape& t, Var a, const Mat& g) { t.accumulate(a, g.transpose()); });
  }

  Var rows(Var a, Index start, Index count) {
    require(start >= 0 && count >= 0 && start + count <= value(a).rows(),
            "rows: block out of range");
    Mat out = value(a).middleRows(start, count);
    return unary(a, std::move(out), [start, count](Tape& t, Var a, const Mat& g) {
      Mat full = Mat::Zero(t.value(a).rows(), t.value(a).cols());
      full.middleRows(start, count) = g;
      t.accumulate(a, full);
    });
  }

  // ---- reductions and broadcasts ----

  Var sum(Var a) {
    Mat out(1, 1);
    out(0, 0) = value(a).sum();
    return unary(a, std::move(out), [](Tape& t, Var a, const Mat& g) {
      t.accumulate(a, Mat::Constant(t.value(a).rows(), t.value(a).cols(), g(0, 0)));
    });
  }

  Var mean(Var a) {
    const double n = static_cast<double>(value(a).size());
    return scale(sum(a), 1.0 / n);
  }

  Var row_sum(Var a) {  // [r, c] -> [r, 1]
    Mat out = value(a).rowwise().sum();
    return unary(a, std::move(out), [](Tape& t, Var a, const Mat& g) {
      t.accumulate(a, g.replicate(1, t.value(a).cols()));
    });
  }

  Var col_sum(Var a) {  // [r, c] -> [1, c]
    Mat out = value(a).colwise().sum();
    return unary(a, std::move(out), [](Tape& t, Var a, const Mat& g) {
      t.accumulate(a, g.replicate(t.value(a).rows(), 1));
    });
  }

  Var broadcast_col(Var a, Index cols) {  // [r, 1] -> [r, cols]
    require(value(a).cols() == 1, "broadcast_col: source must be a column vector");
    Mat out = value(a).replicate(1, cols);
    return unary(a, std::move(out),
                 [](Tape& t, Var a, const Mat& g) { t.accumulate(a, g.rowwise().sum()); });
  }

  Var broadcast_row(Var a, Index rows) {  // [1, c] -> [rows, c]
    require(value(a).rows() == 1, "broadcast_row: source must be a row vector");
    Mat out = value(a).replicate(rows, 1);
    return unary(a, std::move(out),
                 [](Tape& t, Var a, const Mat& g) { t.accumulate(a, g.colwise().sum()); });
  }

  // Row-wise softmax with max subtraction.
  Var softmax_rows(Var a) {
    const Mat& va = value(a);
    Mat out(va.rows(), va.cols());
    for (Index i = 0; i < va.rows(); ++i) {
      RowVec r = va.row(i);
      RowVec e = (r.array() - r.maxCoeff()).exp();
      out.row(i) = e / e.sum();
    }
    Var r = unary(a, std::move(out), {});
    set_backprop(r, [a, r](Tape& t) {
      const Mat& s = t.value(r);
      const Mat& g = t.grad(r);
      Mat ga(s.rows(), s.cols());
      for (Index i = 0; i < s.rows(); ++i) {
        const double dot = g.row(i).dot(s.row(i));
        ga.row(i) = s.row(i).cwiseProduct((g.row(i).array() - dot).matrix());
      }
      t.accumulate(a, ga);
    });
    return r;
  }

  // X [n, in] * W [in, out] + bias [1, out] broadcast over rows.
  Var linear(Var x, Var weight, Var bias) {
    Var xw = matmul(x, weight);
    return add(xw, broadcast_row(bias, value(xw).rows()));
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    std::function<void(Tape&)> backprop;
  };

  std::vector<Node> nodes_;

  Var clamp_below(Var a, double lo) {
    Mat out = value(a).cwiseMax(lo);
    return unary(a, std::move(out), [lo](Tape& t, Var a, const Mat& g) {
      const Mat& va = t.value(a);
      t.accumulate(a, (va.array() > lo).select(g, Mat::Zero(g.rows(), g.cols())));
    });
  }

  const Node& node(Var v) const {
    require(v.id >= 0 && static_cast<std::size_t>(v.id) < nodes_.size(), "invalid tape variable");
    return nodes_[static_cast<std::size_t>(v.id)];
  }

  Var push(Mat value, bool requires_grad, std::function<void(Tape&)> backprop) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  void set_backprop(Var v, std::function<void(Tape&)> fn) {
    nodes_[static_cast<std::size_t>(v.id)].backprop = std::move(fn);
  }

  void accumulate(Var v, const Mat& g) {
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (!n.requires_grad) return;
    n.grad += g;
  }

  Var unary(Var a, Mat out, std::function<void(Tape&, Var, const Mat&)> back) {
    bool rg = node(a).requires_grad;
    Var r = push(std::move(out), rg, {});
    if (rg && back) {
      set_backprop(r, [a, r, back = std::move(back)](Tape& t) { back(t, a, t.grad(r)); });
    }
    return r;
  }

  Var binary(Var a, Var b, Mat out, std::function<void(Tape&, Var, Var, const Mat&)> back) {
    bool rg = node(a).requires_grad || node(b).requires_grad;
    Var r = push(std::move(out), rg, {});
    if (rg && back) {
      set_backprop(r, [a, b, r, back = std::move(back)](Tape& t) { back(t, a, b, t.grad(r)); });
    }
    return r;
  }

  void check_same_shape(Var a, Var b, const std::string& op) const {
    const Mat& va = value(a);
    const Mat& vb = value(b);
    if (va.rows() != vb.rows() || va.cols() != vb.cols()) {
      throw std::invalid_argument(op + ": shape mismatch [" + std::to_string(va.rows()) + ", " +
                                  std::to_string(va.cols()) + "] vs [" + std::to_string(vb.rows()) +
                                  ", " + std::to_string(vb.cols()) + "]");
    }
  }
};

}  // namespace vqat::ad
