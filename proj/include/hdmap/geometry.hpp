#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hdmap/grid.hpp"

namespace hdmap {

// Conventions
//   ego frame:    +x forward, +y left, +z up (metres)
//   camera frame: +z viewing direction, +x right, +y down
//   pixels:       (u, v) = (column, row); integer coordinates are pixel centres
//   BEV raster:   row index grows with x, column index grows with y

struct CameraModel {
  std::string name;
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // camera -> ego
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();   // camera origin in ego
  std::size_t width = 0;   // image size in pixels; 0 means 2 * cx + 1
  std::size_t height = 0;  // 0 means 2 * cy + 1

  std::size_t image_width() const;
  std::size_t image_height() const;

  /// Throws std::invalid_argument for non-positive focal lengths or a
  /// rotation that is not proper orthonormal within 1e-9.
  void validate() const;
};

/// Camera-to-ego rotation for a camera whose optical axis has the given yaw
/// (radians, counter-clockwise from +x) and is tilted `pitch_down` radians
/// below the horizon, with zero roll.
Eigen::Matrix3d camera_rotation(double yaw, double pitch_down);

struct BevConfig {
  double x_min = -30.0;
  double x_max = 30.0;
  double y_min = -15.0;
  double y_max = 15.0;
  double pitch = 0.15;

  std::size_t rows() const;
  std::size_t cols() const;
  void validate() const;

  Eigen::Vector2d cell_center(double row, double col) const {
    return {x_min + (row + 0.5) * pitch, y_min + (col + 0.5) * pitch};
  }
  /// Continuous (row, col) raster coordinate of an ego point; cell centres
  /// land on integers.
  Eigen::Vector2d to_raster(const Eigen::Vector2d& xy) const {
    return {(xy.x() - x_min) / pitch - 0.5, (xy.y() - y_min) / pitch - 0.5};
  }
  /// Cell containing the point under half-open [min, max) binning.
  std::optional<std::pair<std::size_t, std::size_t>> cell_of(double x, double y) const;
  double diagonal() const;

  bool operator==(const BevConfig&) const = default;
};

struct MaskedGrid {
  Grid2D grid;
  std::vector<std::uint8_t> valid;  // one byte per cell
};

enum class Interpolation { kBilinear, kNearest };

struct PixelProjection {
  double u = 0.0;
  double v = 0.0;
  bool in_front = false;
};

PixelProjection project_ego_to_pixel(const CameraModel& cam, const Eigen::Vector3d& point);

/// Intersects the viewing ray through pixel (u, v) with the ground plane z = 0.
std::optional<Eigen::Vector2d> ipm_pixel_to_ground(const CameraModel& cam, double u, double v);

/// Sparse linear map from a source raster to a destination raster. Each
/// destination cell is either invalid or a weighted sum of source cells.
/// Applied channel by channel; the transpose routes gradients backwards.
class Resampler {
 public:
  struct Tap {
    std::uint32_t src;
    double weight;
  };

  Resampler() = default;
  Resampler(std::size_t src_h, std::size_t src_w, std::size_t dst_h, std::size_t dst_w);

  /// Adds a destination cell sampled at continuous source coordinate
  /// (row, col). Marks it invalid when outside [0, h-1] x [0, w-1].
  void add_sample(std::size_t dst, double row, double col, Interpolation interp);
  void add_invalid(std::size_t dst);

  MaskedGrid apply(const Grid2D& src) const;
  /// Gradient of sum(upstream * apply(src)) with respect to src.
  Grid2D apply_transpose(const Grid2D& upstream) const;

  std::size_t src_height() const { return src_h_; }
  std::size_t src_width() const { return src_w_; }
  std::size_t dst_height() const { return dst_h_; }
  std::size_t dst_width() const { return dst_w_; }
  const std::vector<std::uint8_t>& valid() const { return valid_; }

 private:
  std::size_t src_h_ = 0, src_w_ = 0, dst_h_ = 0, dst_w_ = 0;
  std::vector<std::uint8_t> valid_;
  std::vector<std::uint32_t> begin_;  // per destination cell, index into taps_
  std::vector<std::uint32_t> end_;
  std::vector<Tap> taps_;
};

Resampler make_ipm_resampler(const CameraModel& cam, std::size_t img_h, std::size_t img_w,
                             const BevConfig& bev, Interpolation interp = Interpolation::kBilinear);

/// IPM baseline: every BEV cell centre on z = 0 is projected into the
/// perspective grid and sampled there.
MaskedGrid ipm_warp_grid(const CameraModel& cam, const Grid2D& persp, const BevConfig& bev,
                         Interpolation interp = Interpolation::kBilinear);

/// A metric raster lying on the ground plane with its own origin and heading.
/// Rows advance along the frame's forward axis, columns along its left axis.
struct PlanarFrame {
  Eigen::Vector2d origin = Eigen::Vector2d::Zero();  // ego metres
  double heading = 0.0;                              // radians, ego +x to frame forward
  double forward_min = 0.0;
  double left_min = 0.0;
  double pitch = 1.0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  Eigen::Vector2d to_ego(double row, double col) const;
  Eigen::Vector2d to_raster(const Eigen::Vector2d& ego) const;
};

PlanarFrame bev_frame(const BevConfig& bev);

/// Extent of a camera's top-down feature raster, measured from the camera's
/// ground footprint along its ground-projected viewing direction.
struct TopDownExtent {
  double forward_min = 1.0;
  double forward_max = 31.0;
  double left_min = -15.0;
  double left_max = 15.0;
  double pitch = 0.6;

  std::size_t rows() const;
  std::size_t cols() const;
};

/// Planar frame for a camera: origin at the camera footprint, heading taken
/// from the optical axis projected onto z = 0.
PlanarFrame camera_ground_frame(const CameraModel& cam, const TopDownExtent& extent);

/// Tilt of the optical axis below or above the horizon, radians.
double camera_tilt(const CameraModel& cam);

Resampler make_frame_resampler(const PlanarFrame& src, const PlanarFrame& dst,
                               Interpolation interp = Interpolation::kBilinear);

struct CameraWarpOptions {
  Interpolation interp = Interpolation::kBilinear;
  double max_tilt = 0.7853981633974483;  // warn beyond 45 degrees
};

/// Moves a camera-frame top-down raster into ego BEV using the planar part of
/// the extrinsics. Appends a warning to `warnings` (when given) if the camera
/// tilt exceeds `options.max_tilt`.
MaskedGrid camera_frame_to_bev(const CameraModel& cam, const Grid2D& cam_topdown,
                               const TopDownExtent& extent, const BevConfig& bev,
                               const CameraWarpOptions& options = {},
                               std::vector<std::string>* warnings = nullptr);

/// Inverse of camera_frame_to_bev.
MaskedGrid bev_to_camera_frame(const CameraModel& cam, const Grid2D& bev_grid,
                               const BevConfig& bev, const TopDownExtent& extent,
                               Interpolation interp = Interpolation::kBilinear);

/// Per-cell mean over the views that are valid there; zero where none is.
Grid2D fuse_cameras(std::span<const MaskedGrid> views);

/// Number of valid views per cell, as used by fuse_cameras.
std::vector<std::uint32_t> fusion_counts(std::span<const MaskedGrid> views);

/// Four cameras (front, left, rear, right) at 1.6 m, 10 degrees down,
/// 128x64 images with a 90 degree horizontal field of view.
std::vector<CameraModel> default_rig();

}  // namespace hdmap
