// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "vqat/core/common.hpp"

namespace vqat::train {

// Applies a combined gradient to a parameter list. Parameter order must stay
// stable across steps.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual std::string name() const = 0;
  virtual void apply(std::vector<Mat*>& params, const std::vector<Mat>& grads) = 0;
};

// Literal descent step: w <- w - lr * g.
class SgdOptimizer final : public Optimizer {
 public:
  explicit SgdOptimizer(double lr) : lr_(lr) { require(lr > 0.0, "sgd: lr must be positive"); }

  std::string name() const override { return "sgd"; }

  void apply(std::vector<Mat*>& params, const std::vector<Mat>& grads) override {
    require(params.size() == grads.size(), "sgd: parameter/gradient count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) *params[i] -= lr_ * grads[i];
  }

 private:
  double lr_;
};

class AdamOptimizer final : public Optimizer {
 public:
  explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    require(lr > 0.0, "adam: lr must be positive");
  }

  std::string name() const override { return "adam"; }

  void apply(std::vector<Mat*>& params, const std::vector<Mat>& grads) override {
    require(params.size() == grads.size(), "adam: parameter/gradient count mismatch");
    if (m_.empty()) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_.push_back(Mat::Zero(params[i]->rows(), params[i]->cols()));
        v_.push_back(Mat::Zero(params[i]->rows(), params[i]->cols()));
      }
    }
    require(m_.size() == params.size(), "adam: parameter count changed between steps");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseProduct(grads[i]);
      Mat mhat = m_[i] / bc1;
      Mat vhat = v_[i] / bc2;
      *params[i] -= lr_ * mhat.cwiseQuotient((vhat.array().sqrt() + eps_).matrix());
    }
  }

 private:
  double lr_;
  double beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<Mat> m_, v_;
};

inline std::unique_ptr<Optimizer> make_optimizer(const std::string& name, double lr) {
  if (name == "sgd") return std::make_unique<SgdOptimizer>(lr);
  if (name == "adam") return std::make_unique<AdamOptimizer>(lr);
  throw std::invalid_argument("unknown optimizer '" + name + "' (expected sgd or adam)");
}

}  // namespace vqat::train
