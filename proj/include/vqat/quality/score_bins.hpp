// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "vqat/core/common.hpp"

namespace vqat::quality {

inline constexpr int kScoreBinCount = 100;

// The fixed score ladder 0..99 the distribution head predicts over.
struct ScoreBins {
  RowVec values;  // values[i] == i

  static ScoreBins standard() {
    ScoreBins b;
    b.values = RowVec::LinSpaced(kScoreBinCount, 0.0, kScoreBinCount - 1.0);
    return b;
  }

  void validate() const {
    require(values.size() == kScoreBinCount, "ScoreBins: expected exactly 100 bins");
    for (int i = 0; i < kScoreBinCount; ++i)
      require(values(i) == static_cast<double>(i), "ScoreBins: values must be 0..99 in order");
  }
};

}  // namespace vqat::quality
