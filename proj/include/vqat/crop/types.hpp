// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "vqat/core/common.hpp"

namespace vqat::crop {

struct Rect {
  double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x1 + x2); }
  double center_y() const { return 0.5 * (y1 + y2); }

  bool inside(double img_w, double img_h) const {
    return x1 >= 0.0 && y1 >= 0.0 && x2 <= img_w && y2 <= img_h && width() > 0.0 && height() > 0.0;
  }
};

// N object nodes plus one crop-candidate node, candidate listed last.
struct GraphNodeSet {
  Mat features;               // [(N+1), d]
  Mat centers;                // [(N+1), 2]
  std::vector<Rect> boxes;    // size N+1

  int node_count() const { return static_cast<int>(features.rows()); }
  int object_count() const { return node_count() - 1; }

  void validate(double img_w, double img_h) const {
    require(features.rows() >= 2, "GraphNodeSet: needs at least one object and the candidate");
    require(features.cols() >= 1, "GraphNodeSet: feature dim must be >= 1");
    require(centers.rows() == features.rows() && centers.cols() == 2,
            "GraphNodeSet: centers must be [(N+1), 2]");
    require(boxes.size() == static_cast<std::size_t>(features.rows()),
            "GraphNodeSet: box count must match node count");
    for (const Rect& b : boxes)
      require(b.inside(img_w, img_h), "GraphNodeSet: box outside image bounds");
  }
};

// The three per-image relation matrices.
struct CropGraph {
  Mat similarity;  // M_a, [(N+1), (N+1)]
  Mat spatial;     // M_p, entries >= 0
  Mat adjacency;   // A, rows sum to 1
};

struct CropCandidate {
  Rect box;
  double score = 0.0;
};

}  // namespace vqat::crop
