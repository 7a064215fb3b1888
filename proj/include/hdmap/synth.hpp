#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hdmap/bevnet.hpp"
#include "hdmap/geometry.hpp"
#include "hdmap/pillars.hpp"
#include "hdmap/vector_map.hpp"

namespace hdmap {

/// Parameters of the synthetic road generator.
struct SceneSpec {
  std::uint64_t seed = 0;
  std::size_t lanes_min = 1;
  std::size_t lanes_max = 3;
  double curvature_max = 0.01;       // 1/m, drawn uniformly in [-max, max]
  double lane_width = 3.5;           // m
  double crossing_probability = 0.3;
  double point_density = 4.0;        // points per m^2
  double boundary_bump = 0.15;       // m, curb ridge height
  double lateral_jitter = 0.5;       // m, road placement noise
  double heading_jitter = 0.1;       // rad
  double point_noise = 0.02;         // m, z noise
  double image_noise = 0.05;         // additive per channel
  std::size_t point_features = 0;    // K extra per-point features

  void validate() const;
};

/// Stroke widths in cells, indexed by class_index().
struct RasterStyle {
  std::array<std::size_t, kNumClasses> thickness = {1, 3, 1};
  std::size_t num_directions = 36;
  double direction_step = 4.0;  // pixels
};

struct Scene {
  VectorMap map;
  LabelPack labels;
  std::vector<Grid2D> cameras;  // one rendering per rig camera, channels = classes
  PointCloud points;
};

/// Splits a polyline into the pieces lying inside the axis-aligned rectangle,
/// inserting the boundary crossing points.
std::vector<std::vector<Eigen::Vector2d>> clip_polyline(const std::vector<Eigen::Vector2d>& pts,
                                                        double x_min, double x_max, double y_min,
                                                        double y_max);

/// Rasterizes classes, instance ids (1-based in element order) and direction
/// targets. Elements that draw no cell are skipped and reported in `warnings`.
LabelPack rasterize_vector_map(const VectorMap& vm, const BevConfig& bev,
                               const RasterStyle& style = {},
                               std::vector<std::string>* warnings = nullptr);

/// Renders each camera by casting every pixel onto z = 0 and sampling the
/// semantic raster there (nearest cell), plus Gaussian noise.
Grid2D render_camera(const CameraModel& cam, const LabelPack& labels, const BevConfig& bev,
                     double noise, std::mt19937_64& rng);

/// Seed of scene `index` in a dataset generated from `base`.
std::uint64_t scene_seed(std::uint64_t base, std::size_t index);

/// Builds a complete scene, fully determined by spec.seed.
Scene gen_scene(const SceneSpec& spec, const BevConfig& bev, std::span<const CameraModel> rig,
                const RasterStyle& style = {});

/// Distance from a point to a polyline.
double distance_to_polyline(const Eigen::Vector2d& p, const std::vector<Eigen::Vector2d>& line);

/// Ideal network outputs derived from labels: one-hot class probabilities,
/// per-instance embeddings on scaled axis vertices (distinct instances are at
/// least 2 * delta_d apart in L1), and exact direction probabilities.
struct IdealGrids {
  Grid2D seg;
  Grid2D embedding;
  Grid2D direction;
};

IdealGrids ideal_grids(const LabelPack& labels, std::size_t embedding_dim, double delta_d);

}  // namespace hdmap
