// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "vqat/core/common.hpp"
#include "vqat/metrics/correlation.hpp"

namespace vqat::metrics {

struct PredictionRow {
  std::string video_id;
  double score = 0.0;
};

struct GroundTruthRow {
  std::string video_id;
  double mos = 0.0;
};

struct EvalReport {
  std::vector<std::pair<PredictionRow, double>> per_video;  // prediction, ground truth
  double plcc = 0.0;
  double srocc = 0.0;
  double krocc = 0.0;
  double mean = 0.0;
  int n = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["plcc"] = plcc;
    j["srocc"] = srocc;
    j["krocc"] = krocc;
    j["mean"] = mean;
    j["n"] = n;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [pred, gt] : per_video) {
      rows.push_back({{"video_id", pred.video_id}, {"prediction", pred.score},
                      {"ground_truth", gt}});
    }
    j["per_video"] = rows;
    return j;
  }
};

namespace detail {
inline std::string join_ids(const std::vector<std::string>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ", ";
    out += ids[i];
  }
  return out;
}
}  // namespace detail

// Joins predictions to ground truth by video id (order-independent) and
// computes the three correlations plus their mean. Duplicate or unmatched
// ids fail with the offending ids listed.
inline EvalReport evaluate(const std::vector<PredictionRow>& predictions,
                           const std::vector<GroundTruthRow>& ground_truth) {
  std::map<std::string, double> gt;
  std::vector<std::string> dup_gt;
  for (const auto& row : ground_truth)
    if (!gt.emplace(row.video_id, row.mos).second) dup_gt.push_back(row.video_id);
  if (!dup_gt.empty())
    throw std::runtime_error("evaluate: duplicate ground-truth ids: " + detail::join_ids(dup_gt));

  std::set<std::string> seen;
  std::vector<std::string> dup_pred, missing;
  for (const auto& row : predictions) {
    if (!seen.insert(row.video_id).second) dup_pred.push_back(row.video_id);
    if (gt.find(row.video_id) == gt.end()) missing.push_back(row.video_id);
  }
  if (!dup_pred.empty())
    throw std::runtime_error("evaluate: duplicate prediction ids: " + detail::join_ids(dup_pred));
  if (!missing.empty())
    throw std::runtime_error("evaluate: prediction ids missing from ground truth: " +
                             detail::join_ids(missing));
  if (seen.size() != gt.size()) {
    std::vector<std::string> uncovered;
    for (const auto& [id, _] : gt)
      if (seen.find(id) == seen.end()) uncovered.push_back(id);
    throw std::runtime_error("evaluate: ground-truth ids without predictions: " +
                             detail::join_ids(uncovered));
  }

  EvalReport report;
  std::vector<double> x, y;
  // Deterministic order: sorted ids via the ground-truth map.
  std::map<std::string, const PredictionRow*> by_id;
  for (const auto& row : predictions) by_id[row.video_id] = &row;
  for (const auto& [id, mos] : gt) {
    const PredictionRow* p = by_id.at(id);
    report.per_video.emplace_back(*p, mos);
    x.push_back(p->score);
    y.push_back(mos);
  }
  report.n = static_cast<int>(x.size());
  report.plcc = plcc(x, y);
  report.srocc = srocc(x, y);
  report.krocc = krocc(x, y);
  report.mean = (report.plcc + report.srocc + report.krocc) / 3.0;
  return report;
}

}  // namespace vqat::metrics
