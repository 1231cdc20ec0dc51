// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "vqat/core/common.hpp"

namespace vqat::metrics {

namespace detail {

inline void check_pair(const std::vector<double>& x, const std::vector<double>& y,
                       const char* what) {
  require(x.size() == y.size(), std::string(what) + ": length mismatch");
  require(x.size() >= 2, std::string(what) + ": need at least two samples");
  auto constant = [](const std::vector<double>& v) {
    for (double e : v)
      if (e != v.front()) return false;
    return true;
  };
  if (constant(x) || constant(y))
    throw std::invalid_argument(std::string(what) + ": undefined for constant input");
}

// Average ranks for ties, 1-based.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace detail

// Pearson linear correlation of the raw values.
inline double plcc(const std::vector<double>& x, const std::vector<double>& y) {
  detail::check_pair(x, y, "plcc");
  return detail::pearson(x, y);
}

// Spearman: Pearson correlation of average-rank vectors.
inline double srocc(const std::vector<double>& x, const std::vector<double>& y) {
  detail::check_pair(x, y, "srocc");
  return detail::pearson(detail::average_ranks(x), detail::average_ranks(y));
}

// Kendall tau-b with tie correction.
inline double krocc(const std::vector<double>& x, const std::vector<double>& y) {
  detail::check_pair(x, y, "krocc");
  const std::size_t n = x.size();
  long long concordant = 0, discordant = 0;
  long long ties_x = 0, ties_y = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0.0 && dy == 0.0) continue;
      if (dx == 0.0) {
        ++ties_x;
      } else if (dy == 0.0) {
        ++ties_y;
      } else if ((dx > 0.0) == (dy > 0.0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const double n0 = 0.5 * static_cast<double>(n) * (static_cast<double>(n) - 1.0);
  // tie counts per distinct value group
  auto tie_pairs = [](const std::vector<double>& v) {
    std::vector<double> s = v;
    std::sort(s.begin(), s.end());
    double total = 0.0;
    std::size_t i = 0;
    while (i < s.size()) {
      std::size_t j = i;
      while (j + 1 < s.size() && s[j + 1] == s[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      total += 0.5 * t * (t - 1.0);
      i = j + 1;
    }
    return total;
  };
  const double n1 = tie_pairs(x);
  const double n2 = tie_pairs(y);
  const double denom = std::sqrt((n0 - n1) * (n0 - n2));
  require(denom > 0.0, "krocc: undefined for constant input");
  return (static_cast<double>(concordant) - static_cast<double>(discordant)) / denom;
}

}  // namespace vqat::metrics
