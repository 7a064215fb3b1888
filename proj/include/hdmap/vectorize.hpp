#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

#include "hdmap/geometry.hpp"
#include "hdmap/grid.hpp"
#include "hdmap/vector_map.hpp"

namespace hdmap {

struct ForegroundPoint {
  std::size_t row = 0;
  std::size_t col = 0;
  double confidence = 0.0;
  std::vector<double> embedding;
};

inline constexpr std::int32_t kNoise = -1;

/// DBSCAN in embedding space under the L1 norm. Points are scanned in the
/// given order, which fixes cluster numbering and border-point ownership.
/// Returns a cluster id per point, kNoise for noise.
std::vector<std::int32_t> dbscan(const std::vector<ForegroundPoint>& points, double eps,
                                 std::size_t min_pts);

/// Kernel shapes are (kernel_h, kernel_w). The average pools pick which max
/// pool decides a cell: a wide response means a line running along rows.
struct NmsKernels {
  std::size_t max_along_cols[2] = {1, 5};
  std::size_t max_along_rows[2] = {5, 1};
  std::size_t avg_wide[2] = {5, 9};
  std::size_t avg_tall[2] = {9, 5};
};

/// Keeps a point when its confidence equals the max across the line's
/// estimated orientation; the orientation comes from comparing two
/// anisotropic average pools. Pools run on a raster holding only this
/// cluster's confidences. Ties survive.
std::vector<ForegroundPoint> directional_nms(const std::vector<ForegroundPoint>& cluster,
                                             const NmsKernels& kernels = {});

/// Shared walk state for one cluster: the pool of unvisited points and the two
/// direction slots of every point.
class ConnectState {
 public:
  /// `direction` holds per-cell direction probabilities (N_d channels).
  ConnectState(const std::vector<ForegroundPoint>& points, const Grid2D& direction);

  std::size_t size() const { return points_.size(); }
  bool alive(std::size_t i) const { return alive_[i] != 0; }
  std::size_t alive_count() const { return alive_count_; }
  /// Bins of the two directions of point i: argmax and its opposite.
  std::size_t bin(std::size_t i, int slot) const { return slot == 0 ? bins_[i] : (bins_[i] + nd_ / 2) % nd_; }
  bool taken(std::size_t i, int slot) const { return taken_[2 * i + static_cast<std::size_t>(slot)] != 0; }
  Eigen::Vector2d position(std::size_t i) const {
    return {static_cast<double>(points_[i].row), static_cast<double>(points_[i].col)};
  }
  std::size_t num_directions() const { return nd_; }

  void take(std::size_t i, int slot) { taken_[2 * i + static_cast<std::size_t>(slot)] = 1; }
  void remove(std::size_t i);

 private:
  std::vector<ForegroundPoint> points_;
  std::vector<std::size_t> bins_;
  std::vector<std::uint8_t> alive_;
  std::vector<std::uint8_t> taken_;
  std::size_t alive_count_ = 0;
  std::size_t nd_ = 0;
};

/// Greedy one-direction walk from `start`; returns point indices in walk
/// order, starting with `start`.
std::vector<std::size_t> connect_one_direction(std::size_t start, ConnectState& state, double step,
                                               double dist_threshold);

/// Seeds at the most confident point (first in input order on ties), walks
/// both ways and joins the walks into one ordered point list. Returns
/// std::nullopt when fewer than two points survive.
std::optional<std::vector<std::size_t>> connect_line(const std::vector<ForegroundPoint>& points,
                                                     const Grid2D& direction, double step,
                                                     double dist_threshold);

struct VectorizeParams {
  double foreground_threshold = 0.5;
  double eps = 1.0;
  std::size_t min_pts = 3;
  double step = 4.0;             // pixels
  double dist_threshold = 8.0;   // pixels
  /// Moves each vertex along the normal of its predicted direction onto the
  /// centroid of the cluster cells within step - 1 pixels. Centres vertices
  /// on strokes wider than one cell.
  bool refine = true;
  NmsKernels nms;
};

struct VectorizeStats {
  std::size_t clusters = 0;
  std::size_t noise_points = 0;
  std::size_t dropped = 0;  // clusters that collapsed to a single point
};

/// Dense predictions to polylines. `seg` holds class probabilities with
/// background in channel 0; `direction` holds direction probabilities.
VectorMap vectorize(const Grid2D& seg, const Grid2D& embedding, const Grid2D& direction,
                    const BevConfig& bev, const VectorizeParams& params = {},
                    VectorizeStats* stats = nullptr);

}  // namespace hdmap
