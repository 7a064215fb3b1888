#include "hdmap/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace hdmap {

std::vector<std::size_t> trace_segment(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                                       std::size_t rows, std::size_t cols) {
  std::vector<std::size_t> cells;
  auto emit = [&](long r, long c) {
    if (r < 0 || c < 0 || r >= static_cast<long>(rows) || c >= static_cast<long>(cols)) return;
    cells.push_back(static_cast<std::size_t>(r) * cols + static_cast<std::size_t>(c));
  };
  // Shift so that cell k spans [k, k + 1).
  const Eigen::Vector2d p0 = a + Eigen::Vector2d::Constant(0.5);
  const Eigen::Vector2d p1 = b + Eigen::Vector2d::Constant(0.5);
  long r = static_cast<long>(std::floor(p0.x()));
  long c = static_cast<long>(std::floor(p0.y()));
  const long r_end = static_cast<long>(std::floor(p1.x()));
  const long c_end = static_cast<long>(std::floor(p1.y()));
  const Eigen::Vector2d d = p1 - p0;
  const long step_r = d.x() > 0 ? 1 : (d.x() < 0 ? -1 : 0);
  const long step_c = d.y() > 0 ? 1 : (d.y() < 0 ? -1 : 0);
  constexpr double kInf = std::numeric_limits<double>::infinity();
  double t_max_r = kInf, t_max_c = kInf, t_delta_r = kInf, t_delta_c = kInf;
  if (step_r != 0) {
    const double next = step_r > 0 ? std::floor(p0.x()) + 1.0 : std::floor(p0.x());
    t_max_r = (next - p0.x()) / d.x();
    t_delta_r = std::abs(1.0 / d.x());
  }
  if (step_c != 0) {
    const double next = step_c > 0 ? std::floor(p0.y()) + 1.0 : std::floor(p0.y());
    t_max_c = (next - p0.y()) / d.y();
    t_delta_c = std::abs(1.0 / d.y());
  }
  emit(r, c);
  const long max_steps = std::abs(r_end - r) + std::abs(c_end - c);
  for (long i = 0; i < max_steps; ++i) {
    if (t_max_r < t_max_c) {
      r += step_r;
      t_max_r += t_delta_r;
    } else {
      c += step_c;
      t_max_c += t_delta_c;
    }
    emit(r, c);
  }
  return cells;
}

std::vector<std::size_t> stroke_polyline(const std::vector<Eigen::Vector2d>& pts,
                                         std::size_t thickness, std::size_t rows, std::size_t cols) {
  if (thickness == 0) throw std::invalid_argument("stroke_polyline: thickness must be >= 1");
  std::vector<std::uint8_t> seen(rows * cols, 0);
  std::vector<std::size_t> out;
  const long lo = -static_cast<long>((thickness - 1) / 2);
  const long hi = static_cast<long>(thickness / 2);
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    for (std::size_t cell : trace_segment(pts[i], pts[i + 1], rows, cols)) {
      const long r0 = static_cast<long>(cell / cols);
      const long c0 = static_cast<long>(cell % cols);
      for (long dr = lo; dr <= hi; ++dr) {
        for (long dc = lo; dc <= hi; ++dc) {
          const long r = r0 + dr;
          const long c = c0 + dc;
          if (r < 0 || c < 0 || r >= static_cast<long>(rows) || c >= static_cast<long>(cols)) continue;
          const std::size_t idx = static_cast<std::size_t>(r) * cols + static_cast<std::size_t>(c);
          if (seen[idx] == 0) {
            seen[idx] = 1;
            out.push_back(idx);
          }
        }
      }
    }
  }
  return out;
}

std::vector<Eigen::Vector2d> to_raster(const std::vector<Eigen::Vector2d>& ego, const BevConfig& bev) {
  std::vector<Eigen::Vector2d> out;
  out.reserve(ego.size());
  for (const auto& p : ego) out.push_back(bev.to_raster(p));
  return out;
}

std::vector<Eigen::Vector2d> resample_polyline(const std::vector<Eigen::Vector2d>& pts,
                                               double spacing) {
  if (!(spacing > 0.0)) throw std::invalid_argument("resample_polyline: spacing must be positive");
  if (pts.size() < 2) return pts;
  double total = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) total += (pts[i] - pts[i - 1]).norm();
  const auto n = static_cast<std::size_t>(std::floor(total / spacing + 1e-9));
  std::vector<Eigen::Vector2d> out;
  out.reserve(n + 2);
  out.push_back(pts.front());
  std::size_t seg = 1;
  double seg_start = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    const double s = static_cast<double>(k) * spacing;
    if (s >= total - 1e-12) break;
    while (seg + 1 < pts.size() && seg_start + (pts[seg] - pts[seg - 1]).norm() < s) {
      seg_start += (pts[seg] - pts[seg - 1]).norm();
      ++seg;
    }
    const double len = (pts[seg] - pts[seg - 1]).norm();
    const double t = len > 0.0 ? std::clamp((s - seg_start) / len, 0.0, 1.0) : 0.0;
    out.push_back(pts[seg - 1] + t * (pts[seg] - pts[seg - 1]));
  }
  out.push_back(pts.back());
  return out;
}

}  // namespace hdmap
