// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "vqat/core/common.hpp"
#include "vqat/losses/losses.hpp"
#include "vqat/train/optimizer.hpp"

namespace vqat::train {

// Gradient tensors with norm below this are left unperturbed.
inline constexpr double kGradNormEps = 1e-12;

enum class NormScope { per_tensor, global };

inline NormScope norm_scope_from_string(const std::string& s) {
  if (s == "per_tensor") return NormScope::per_tensor;
  if (s == "global") return NormScope::global;
  throw std::invalid_argument("norm_scope must be 'per_tensor' or 'global', got '" + s + "'");
}

struct FgmConfig {
  // enabled=false drops the perturbation and the second pass entirely (plain
  // single-gradient training); epsilon=0 with enabled=true still runs both
  // passes and sums their gradients.
  bool enabled = true;
  double epsilon = 0.0;
  NormScope norm_scope = NormScope::per_tensor;
  // Substring patterns; parameters whose name contains one are NOT perturbed.
  std::vector<std::string> exclude_patterns{"bias", "norm"};
  double learning_rate = 0.1;
  int batch_size = 1;
  int max_steps = 0;
  double convergence_tol = 1e-4;
  int convergence_window = 50;
  double max_abort_fraction = 0.01;
  std::string optimizer = "sgd";

  void validate() const {
    require(epsilon >= 0.0, "FgmConfig: epsilon must be >= 0");
    require(learning_rate > 0.0, "FgmConfig: learning_rate must be > 0");
    require(batch_size >= 1, "FgmConfig: batch_size must be >= 1");
    require(max_steps >= 0, "FgmConfig: max_steps must be >= 0");
    require(convergence_window >= 1, "FgmConfig: convergence_window must be >= 1");
  }

  bool perturbs(const std::string& param_name) const {
    for (const std::string& pat : exclude_patterns)
      if (!pat.empty() && param_name.find(pat) != std::string::npos) return false;
    return true;
  }
};

// Named view of one trainable tensor.
struct ParamRef {
  std::string name;
  Mat* tensor = nullptr;
};

// Loss evaluation at the model's current weights: scalar objective plus one
// gradient per parameter, aligned with the parameter list.
struct EvalResult {
  double total = 0.0;
  losses::LossBreakdown parts;
  std::vector<Mat> grads;
};

using BatchIndices = std::vector<int>;
using LossFn = std::function<EvalResult(const BatchIndices&)>;

// delta = epsilon * g / ||g||, per tensor or over the concatenated gradient.
// Tensors with vanishing gradients receive delta = 0.
inline std::vector<Mat> compute_perturbation(const std::vector<Mat>& gradients, double epsilon,
                                             NormScope scope) {
  require(epsilon >= 0.0, "compute_perturbation: epsilon must be >= 0");
  for (const Mat& g : gradients) require_finite(g, "compute_perturbation: gradient");
  std::vector<Mat> deltas;
  deltas.reserve(gradients.size());
  if (scope == NormScope::per_tensor) {
    for (const Mat& g : gradients) {
      const double norm = g.norm();
      deltas.push_back(norm < kGradNormEps ? Mat::Zero(g.rows(), g.cols()).eval()
                                           : Mat((epsilon / norm) * g));
    }
  } else {
    double sq = 0.0;
    for (const Mat& g : gradients) sq += g.squaredNorm();
    const double norm = std::sqrt(sq);
    for (const Mat& g : gradients)
      deltas.push_back(norm < kGradNormEps ? Mat::Zero(g.rows(), g.cols()).eval()
                                           : Mat((epsilon / norm) * g));
  }
  return deltas;
}

// Saved weights plus the perturbations applied on top of them.
struct PerturbationState {
  std::vector<std::string> names;
  std::vector<Mat> snapshot;
  std::vector<Mat> deltas;
};

struct FgmStepReport {
  EvalResult clean;
  EvalResult adversarial;
  std::vector<std::pair<std::string, double>> delta_norms;
  bool aborted = false;
};

namespace detail {
inline bool finite_eval(const EvalResult& r) {
  if (!std::isfinite(r.total)) return false;
  for (const Mat& g : r.grads)
    if (!g.allFinite()) return false;
  return true;
}
}  // namespace detail

// One adversarial training step:
//   clean pass at w, perturb filtered weights by delta, adversarial pass at
//   w + delta, restore w, then descend along the summed gradients.
// A non-finite loss or gradient on either pass aborts the step and restores
// the pre-step weights exactly.
inline FgmStepReport fgm_step(std::vector<ParamRef>& params, const BatchIndices& batch,
                              const LossFn& loss_fn, const FgmConfig& cfg,
                              Optimizer* optimizer = nullptr) {
  cfg.validate();
  require(!batch.empty(), "fgm_step: empty batch");
  for (const ParamRef& p : params) require(p.tensor != nullptr, "fgm_step: null parameter");

  FgmStepReport report;
  PerturbationState state;
  state.names.reserve(params.size());
  state.snapshot.reserve(params.size());
  for (const ParamRef& p : params) {
    state.names.push_back(p.name);
    state.snapshot.push_back(*p.tensor);
  }
  auto restore_all = [&]() {
    for (std::size_t i = 0; i < params.size(); ++i) *params[i].tensor = state.snapshot[i];
  };

  report.clean = loss_fn(batch);
  require(report.clean.grads.size() == params.size(),
          "fgm_step: gradient count does not match parameter count");
  if (!detail::finite_eval(report.clean)) {
    restore_all();
    report.aborted = true;
    return report;
  }

  if (!cfg.enabled) {
    // Plain descent on the clean gradient.
    std::vector<Mat*> tensors;
    tensors.reserve(params.size());
    for (ParamRef& p : params) tensors.push_back(p.tensor);
    if (optimizer != nullptr) {
      optimizer->apply(tensors, report.clean.grads);
    } else {
      SgdOptimizer(cfg.learning_rate).apply(tensors, report.clean.grads);
    }
    report.adversarial = report.clean;
    for (const ParamRef& p : params) {
      if (!p.tensor->allFinite()) {
        restore_all();
        report.aborted = true;
        return report;
      }
    }
    return report;
  }

  // Perturbation over the filtered subset only.
  std::vector<std::size_t> filtered;
  std::vector<Mat> filtered_grads;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (cfg.perturbs(params[i].name)) {
      filtered.push_back(i);
      filtered_grads.push_back(report.clean.grads[i]);
    }
  }
  std::vector<Mat> deltas = compute_perturbation(filtered_grads, cfg.epsilon, cfg.norm_scope);
  state.deltas.assign(params.size(), Mat());
  for (std::size_t k = 0; k < filtered.size(); ++k) {
    state.deltas[filtered[k]] = deltas[k];
    *params[filtered[k]].tensor += deltas[k];
    report.delta_norms.emplace_back(params[filtered[k]].name, deltas[k].norm());
  }

  report.adversarial = loss_fn(batch);
  // Perturbed weights never outlive the step.
  for (std::size_t k = 0; k < filtered.size(); ++k)
    *params[filtered[k]].tensor = state.snapshot[filtered[k]];

  if (report.adversarial.grads.size() != params.size() ||
      !detail::finite_eval(report.adversarial)) {
    restore_all();
    report.aborted = true;
    return report;
  }

  std::vector<Mat> combined(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    combined[i] = report.clean.grads[i] + report.adversarial.grads[i];

  std::vector<Mat*> tensors;
  tensors.reserve(params.size());
  for (ParamRef& p : params) tensors.push_back(p.tensor);
  if (optimizer != nullptr) {
    optimizer->apply(tensors, combined);
  } else {
    SgdOptimizer(cfg.learning_rate).apply(tensors, combined);
  }

  for (const ParamRef& p : params) {
    if (!p.tensor->allFinite()) {
      restore_all();
      report.aborted = true;
      return report;
    }
  }
  return report;
}

struct TrainStepRecord {
  int step = 0;
  double clean_loss = 0.0;
  double adv_loss = 0.0;
  losses::LossBreakdown clean_parts;
  std::vector<std::pair<std::string, double>> delta_norms;
  double lr = 0.0;
  bool aborted = false;
};

struct TrainResult {
  std::vector<TrainStepRecord> log;
  int steps_run = 0;
  int steps_aborted = 0;
  bool converged = false;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

inline void check_abort_rate(const TrainResult& result, const FgmConfig& cfg) {
  if (result.steps_run == 0) return;
  const double rate =
      static_cast<double>(result.steps_aborted) / static_cast<double>(result.steps_run);
  if (rate > cfg.max_abort_fraction)
    throw std::runtime_error("train: " + std::to_string(result.steps_aborted) + " of " +
                             std::to_string(result.steps_run) +
                             " steps aborted; run considered divergent");
}

// Invoked after each completed step; wired to interval checkpointing.
using StepHook = std::function<void(const TrainStepRecord&)>;

// Epoch loop with a seeded shuffle. Stops at max_steps or when the mean loss
// over the trailing window moves by less than convergence_tol relative to the
// previous window. More than max_abort_fraction aborted steps fails the run.
inline TrainResult train(std::vector<ParamRef>& params, int dataset_size, const LossFn& loss_fn,
                         const FgmConfig& cfg, std::uint64_t shuffle_seed,
                         Optimizer* optimizer = nullptr, const StepHook& on_step = {}) {
  cfg.validate();
  require(dataset_size >= 1, "train: empty dataset");

  TrainResult result;
  std::mt19937_64 rng(shuffle_seed);
  std::vector<int> order(static_cast<std::size_t>(dataset_size));
  std::iota(order.begin(), order.end(), 0);

  std::deque<double> window;
  bool first = true;
  int step = 0;
  while (step < cfg.max_steps) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t pos = 0; pos < order.size() && step < cfg.max_steps; pos += cfg.batch_size) {
      BatchIndices batch(order.begin() + static_cast<std::ptrdiff_t>(pos),
                         order.begin() +
                             static_cast<std::ptrdiff_t>(
                                 std::min(pos + cfg.batch_size, order.size())));
      FgmStepReport rep = fgm_step(params, batch, loss_fn, cfg, optimizer);
      ++step;

      TrainStepRecord rec;
      rec.step = step;
      rec.clean_loss = rep.clean.total;
      rec.adv_loss = rep.adversarial.total;
      rec.clean_parts = rep.clean.parts;
      rec.delta_norms = rep.delta_norms;
      rec.lr = cfg.learning_rate;
      rec.aborted = rep.aborted;
      result.log.push_back(rec);
      if (on_step) on_step(rec);

      if (rep.aborted) {
        ++result.steps_aborted;
      } else {
        if (first) {
          result.initial_loss = rep.clean.total;
          first = false;
        }
        result.final_loss = rep.clean.total;
        window.push_back(rep.clean.total);
        if (static_cast<int>(window.size()) > 2 * cfg.convergence_window) window.pop_front();
        if (static_cast<int>(window.size()) == 2 * cfg.convergence_window) {
          double prev = 0.0, curr = 0.0;
          for (int i = 0; i < cfg.convergence_window; ++i) {
            prev += window[static_cast<std::size_t>(i)];
            curr += window[static_cast<std::size_t>(i + cfg.convergence_window)];
          }
          prev /= cfg.convergence_window;
          curr /= cfg.convergence_window;
          if (std::abs(curr - prev) / std::max(std::abs(prev), 1e-12) < cfg.convergence_tol) {
            result.converged = true;
            result.steps_run = step;
            check_abort_rate(result, cfg);
            return result;
          }
        }
      }
    }
  }
  result.steps_run = step;
  check_abort_rate(result, cfg);
  return result;
}

}  // namespace vqat::train
