// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "vqat/core/autodiff.hpp"
#include "vqat/core/common.hpp"
#include "vqat/quality/model.hpp"
#include "vqat/quality/score_bins.hpp"

namespace vqat::losses {

// Probabilities are clamped to [kProbEps, 1 - kProbEps] before logs.
inline constexpr double kProbEps = 1e-7;

// Smallest sigma for which every Gaussian label stays below 1.
inline double min_sigma() { return 1.0 / std::sqrt(2.0 * std::numbers::pi); }

struct LossBreakdown {
  double mae = 0.0;
  double bce = 0.0;
  double fcl = 0.0;
};

// |mean(frame_scores) - y| on the unit scale.
inline double mae_loss(const Vec& frame_scores, double target_unit) {
  require(frame_scores.size() >= 1, "mae_loss: no frame scores");
  return std::abs(frame_scores.mean() - target_unit);
}

// Gaussian soft labels over the score bins, identical for every frame:
// d_fi = 1/(sigma sqrt(2 pi)) * exp(-(s_i - y)^2 / (2 sigma^2)).
struct GaussianLabelField {
  Mat labels;  // [F, 100]
  double sigma = 0.0;
};

inline GaussianLabelField gaussian_labels(double target_hundred, double sigma,
                                          const quality::ScoreBins& bins, int frame_count) {
  bins.validate();
  require(frame_count >= 1, "gaussian_labels: frame count must be >= 1");
  if (!(sigma > min_sigma()))
    throw std::invalid_argument("gaussian_labels: sigma must exceed 1/sqrt(2*pi) ~= 0.3989, got " +
                                std::to_string(sigma));
  const double norm = 1.0 / (sigma * std::sqrt(2.0 * std::numbers::pi));
  RowVec row(quality::kScoreBinCount);
  for (int i = 0; i < quality::kScoreBinCount; ++i) {
    const double d = bins.values(i) - target_hundred;
    row(i) = norm * std::exp(-d * d / (2.0 * sigma * sigma));
  }
  GaussianLabelField field;
  field.labels = row.replicate(frame_count, 1);
  field.sigma = sigma;
  return field;
}

// Soft-target binary cross entropy averaged over all F*100 bins.
inline double bce_loss(const quality::ScoreDistribution& dist, const GaussianLabelField& labels) {
  const Mat& p_raw = dist.probs;
  const Mat& d = labels.labels;
  if (p_raw.rows() != d.rows() || p_raw.cols() != d.cols())
    throw std::invalid_argument("bce_loss: distribution shape [" + std::to_string(p_raw.rows()) +
                                ", " + std::to_string(p_raw.cols()) + "] vs labels [" +
                                std::to_string(d.rows()) + ", " + std::to_string(d.cols()) + "]");
  Mat p = p_raw.cwiseMax(kProbEps).cwiseMin(1.0 - kProbEps);
  Mat term = -(d.cwiseProduct(p.array().log().matrix()) +
               (Mat::Ones(d.rows(), d.cols()) - d)
                   .cwiseProduct((1.0 - p.array()).log().matrix()));
  return term.mean();
}

// Population standard deviation of the ground-truth scores; feeds the label
// sigma once per run.
inline double dataset_sigma(const std::vector<double>& scores_hundred) {
  require(scores_hundred.size() >= 2, "dataset_sigma: need at least two scores");
  double mean = 0.0;
  for (double s : scores_hundred) mean += s;
  mean /= static_cast<double>(scores_hundred.size());
  double var = 0.0;
  for (double s : scores_hundred) var += (s - mean) * (s - mean);
  var /= static_cast<double>(scores_hundred.size());
  return std::sqrt(var);
}

// Frame consistency loss: the exact product of the MAE and BCE terms. The
// target arrives on the 0-100 scale; the MAE comparison divides it by 100 to
// match the decoded range.
inline LossBreakdown fcl_loss(const quality::ScoreDistribution& dist, double target_hundred,
                              double sigma, const quality::ScoreBins& bins) {
  Vec frame_scores = quality::decode_frame_scores(dist, bins);
  LossBreakdown out;
  out.mae = mae_loss(frame_scores, target_hundred / 100.0);
  out.bce = bce_loss(dist, gaussian_labels(target_hundred, sigma, bins, dist.frame_count()));
  out.fcl = out.mae * out.bce;
  return out;
}

// ---- tape builders ----

inline ad::Var mae_loss_t(ad::Tape& tape, ad::Var frame_scores, double target_unit) {
  require(tape.value(frame_scores).size() >= 1, "mae_loss: no frame scores");
  return tape.abs(tape.sub(tape.mean(frame_scores), tape.scalar(target_unit)));
}

inline ad::Var bce_loss_t(ad::Tape& tape, ad::Var probs, const GaussianLabelField& labels) {
  const Mat& p = tape.value(probs);
  if (p.rows() != labels.labels.rows() || p.cols() != labels.labels.cols())
    throw std::invalid_argument("bce_loss: shape mismatch between distribution and labels");
  ad::Var d = tape.constant(labels.labels);
  ad::Var one_minus_d = tape.constant(Mat::Ones(p.rows(), p.cols()) - labels.labels);
  ad::Var pc = tape.clamp(probs, kProbEps, 1.0 - kProbEps);
  ad::Var one_minus_p = tape.sub(tape.constant(Mat::Ones(p.rows(), p.cols())), pc);
  ad::Var ll = tape.add(tape.mul(d, tape.log(pc)), tape.mul(one_minus_d, tape.log(one_minus_p)));
  return tape.scale(tape.mean(ll), -1.0);
}

struct FclVars {
  ad::Var mae, bce, fcl;
};

inline FclVars fcl_loss_t(ad::Tape& tape, ad::Var probs, double target_hundred, double sigma,
                          const quality::ScoreBins& bins) {
  ad::Var frame_scores = quality::decode_frame_scores_t(tape, probs, bins);
  FclVars out;
  out.mae = mae_loss_t(tape, frame_scores, target_hundred / 100.0);
  out.bce = bce_loss_t(
      tape, probs,
      gaussian_labels(target_hundred, sigma, bins,
                      static_cast<int>(tape.value(probs).rows())));
  out.fcl = tape.mul(out.mae, out.bce);
  return out;
}

}  // namespace vqat::losses
