#pragma once

// Brute-force reference implementations for the metric suite. Written from the
// definitions, sharing no code with src/metrics.cpp.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "hdmap/grid.hpp"
#include "hdmap/vector_map.hpp"

namespace oracle {

inline std::vector<double> iou(const hdmap::Grid2D& a, const hdmap::Grid2D& b) {
  std::vector<double> out;
  for (std::size_t ch = 0; ch < a.channels(); ++ch) {
    std::vector<std::size_t> sa, sb, both, either;
    for (std::size_t r = 0; r < a.height(); ++r) {
      for (std::size_t c = 0; c < a.width(); ++c) {
        const std::size_t key = r * a.width() + c;
        if (a.at(r, c, ch) != 0.0) sa.push_back(key);
        if (b.at(r, c, ch) != 0.0) sb.push_back(key);
      }
    }
    std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(both));
    std::set_union(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(either));
    if (sa.empty() && sb.empty()) {
      out.push_back(1.0);
    } else {
      out.push_back(double(both.size()) / double(either.size()));
    }
  }
  return out;
}

inline double directed(const std::vector<Eigen::Vector2d>& a, const std::vector<Eigen::Vector2d>& b,
                       double cap) {
  if (a.empty() || b.empty()) return cap;
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::vector<double> d;
    for (std::size_t j = 0; j < b.size(); ++j) {
      d.push_back(std::sqrt((a[i].x() - b[j].x()) * (a[i].x() - b[j].x()) +
                            (a[i].y() - b[j].y()) * (a[i].y() - b[j].y())));
    }
    total += *std::min_element(d.begin(), d.end());
  }
  return total / double(a.size());
}

inline double average_cd(const std::vector<Eigen::Vector2d>& a, const std::vector<Eigen::Vector2d>& b,
                         double cap) {
  return 0.5 * (directed(a, b, cap) + directed(b, a, cap));
}

/// Ranked greedy matching followed by the 10-point interpolated PR curve.
inline double ap(const std::vector<double>& confidence, const std::vector<std::vector<double>>& cd,
                 std::size_t num_gt, double threshold) {
  if (num_gt == 0) return 0.0;
  std::vector<std::size_t> order(confidence.size());
  std::iota(order.begin(), order.end(), 0);
  // Insertion sort, descending, stable on ties.
  for (std::size_t i = 1; i < order.size(); ++i) {
    for (std::size_t j = i; j > 0 && confidence[order[j]] > confidence[order[j - 1]]; --j) {
      std::swap(order[j], order[j - 1]);
    }
  }
  std::vector<bool> taken(num_gt, false);
  std::vector<double> precision, recall_tp;
  std::size_t tp = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const std::size_t p = order[rank];
    std::size_t best = num_gt;
    for (std::size_t g = 0; g < num_gt; ++g) {
      if (!taken[g] && (best == num_gt || cd[p][g] < cd[p][best])) best = g;
    }
    if (best < num_gt && cd[p][best] < threshold) {
      taken[best] = true;
      ++tp;
    }
    precision.push_back(double(tp) / double(rank + 1));
    recall_tp.push_back(double(tp));
  }
  double sum = 0.0;
  for (int k = 1; k <= 10; ++k) {
    double best = 0.0;
    for (std::size_t i = 0; i < precision.size(); ++i) {
      if (10.0 * recall_tp[i] >= double(k) * double(num_gt)) best = std::max(best, precision[i]);
    }
    sum += best;
  }
  return sum / 10.0;
}

}  // namespace oracle
