// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace vqat {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;
using Index = Eigen::Index;

inline bool all_finite(const Mat& m) {
  return m.allFinite();
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline void require_finite(const Mat& m, const std::string& what) {
  if (!m.allFinite()) throw std::invalid_argument(what + " contains non-finite values");
}

inline void require_shape(const Mat& m, Index rows, Index cols, const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw std::invalid_argument(what + " has shape [" + std::to_string(m.rows()) + ", " +
                                std::to_string(m.cols()) + "], expected [" + std::to_string(rows) +
                                ", " + std::to_string(cols) + "]");
  }
}

}  // namespace vqat
