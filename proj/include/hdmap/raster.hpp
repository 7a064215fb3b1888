#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

#include "hdmap/geometry.hpp"

namespace hdmap {

/// Cells crossed by the segment a -> b, both given in continuous raster
/// coordinates (row, col) with cell centres on integers. Grid-line walk in
/// the style of Amanatides & Woo; cells outside the raster are skipped.
std::vector<std::size_t> trace_segment(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                                       std::size_t rows, std::size_t cols);

/// Cells of a polyline (raster coordinates) stroked with a square brush of
/// `thickness` cells. Each cell appears once, in first-visit order.
std::vector<std::size_t> stroke_polyline(const std::vector<Eigen::Vector2d>& pts,
                                         std::size_t thickness, std::size_t rows, std::size_t cols);

/// Polyline points converted from ego metres into raster coordinates.
std::vector<Eigen::Vector2d> to_raster(const std::vector<Eigen::Vector2d>& ego, const BevConfig& bev);

/// Arc-length resampling at `spacing`, always keeping both endpoints. The
/// final gap may be shorter than `spacing`.
std::vector<Eigen::Vector2d> resample_polyline(const std::vector<Eigen::Vector2d>& pts,
                                               double spacing);

}  // namespace hdmap
