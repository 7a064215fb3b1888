#include "hdmap/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace hdmap {

std::size_t CameraModel::image_width() const {
  return width != 0 ? width : static_cast<std::size_t>(std::lround(2.0 * cx + 1.0));
}

std::size_t CameraModel::image_height() const {
  return height != 0 ? height : static_cast<std::size_t>(std::lround(2.0 * cy + 1.0));
}

void CameraModel::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw std::invalid_argument("camera '" + name + "': focal lengths must be positive");
  }
  if (!rotation.allFinite() || !translation.allFinite() || !std::isfinite(cx) ||
      !std::isfinite(cy)) {
    throw std::invalid_argument("camera '" + name + "': non-finite parameters");
  }
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (ortho > 1e-9 || std::abs(rotation.determinant() - 1.0) > 1e-9) {
    throw std::invalid_argument("camera '" + name +
                                "': rotation is not orthonormal with determinant +1");
  }
}

Eigen::Matrix3d camera_rotation(double yaw, double pitch_down) {
  const Eigen::Vector3d z(std::cos(yaw) * std::cos(pitch_down), std::sin(yaw) * std::cos(pitch_down),
                          -std::sin(pitch_down));
  const Eigen::Vector3d x(std::sin(yaw), -std::cos(yaw), 0.0);
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix3d r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return r;
}

std::size_t BevConfig::rows() const {
  return static_cast<std::size_t>(std::lround((x_max - x_min) / pitch));
}

std::size_t BevConfig::cols() const {
  return static_cast<std::size_t>(std::lround((y_max - y_min) / pitch));
}

void BevConfig::validate() const {
  if (!std::isfinite(x_min) || !std::isfinite(x_max) || !std::isfinite(y_min) ||
      !std::isfinite(y_max) || !std::isfinite(pitch)) {
    throw std::invalid_argument("BEV config: non-finite value");
  }
  if (!(x_max > x_min) || !(y_max > y_min) || !(pitch > 0.0)) {
    throw std::invalid_argument("BEV config: need x_max > x_min, y_max > y_min and pitch > 0");
  }
  if (rows() == 0 || cols() == 0) throw std::invalid_argument("BEV config: empty raster");
}

std::optional<std::pair<std::size_t, std::size_t>> BevConfig::cell_of(double x, double y) const {
  if (!(x >= x_min) || !(x < x_max) || !(y >= y_min) || !(y < y_max)) return std::nullopt;
  const double fr = std::floor((x - x_min) / pitch);
  const double fc = std::floor((y - y_min) / pitch);
  if (fr < 0.0 || fc < 0.0) return std::nullopt;
  const auto r = static_cast<std::size_t>(fr);
  const auto c = static_cast<std::size_t>(fc);
  if (r >= rows() || c >= cols()) return std::nullopt;
  return std::make_pair(r, c);
}

double BevConfig::diagonal() const { return std::hypot(x_max - x_min, y_max - y_min); }

PixelProjection project_ego_to_pixel(const CameraModel& cam, const Eigen::Vector3d& point) {
  const Eigen::Vector3d pc = cam.rotation.transpose() * (point - cam.translation);
  PixelProjection out;
  out.in_front = pc.z() > 0.0;
  if (pc.z() == 0.0) {
    out.u = out.v = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  out.u = cam.fx * pc.x() / pc.z() + cam.cx;
  out.v = cam.fy * pc.y() / pc.z() + cam.cy;
  return out;
}

std::optional<Eigen::Vector2d> ipm_pixel_to_ground(const CameraModel& cam, double u, double v) {
  const Eigen::Vector3d ray_cam((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);
  const Eigen::Vector3d ray = cam.rotation * ray_cam;
  if (std::abs(ray.z()) <= 1e-12 * ray.norm()) return std::nullopt;
  const double s = -cam.translation.z() / ray.z();
  if (!(s > 0.0)) return std::nullopt;
  const Eigen::Vector3d hit = cam.translation + s * ray;
  return Eigen::Vector2d(hit.x(), hit.y());
}

// ---------------------------------------------------------------------------

Resampler::Resampler(std::size_t src_h, std::size_t src_w, std::size_t dst_h, std::size_t dst_w)
    : src_h_(src_h),
      src_w_(src_w),
      dst_h_(dst_h),
      dst_w_(dst_w),
      valid_(dst_h * dst_w, 0),
      begin_(dst_h * dst_w, 0),
      end_(dst_h * dst_w, 0) {}

void Resampler::add_invalid(std::size_t dst) {
  valid_.at(dst) = 0;
  begin_[dst] = end_[dst] = static_cast<std::uint32_t>(taps_.size());
}

void Resampler::add_sample(std::size_t dst, double row, double col, Interpolation interp) {
  const double max_r = static_cast<double>(src_h_) - 1.0;
  const double max_c = static_cast<double>(src_w_) - 1.0;
  // Rounding noise from rotations must not drop the border cells.
  constexpr double kSnap = 1e-9;
  if (row < 0.0 && row > -kSnap) row = 0.0;
  if (col < 0.0 && col > -kSnap) col = 0.0;
  if (row > max_r && row < max_r + kSnap) row = max_r;
  if (col > max_c && col < max_c + kSnap) col = max_c;
  if (src_h_ == 0 || src_w_ == 0 || !(row >= 0.0) || !(row <= max_r) || !(col >= 0.0) ||
      !(col <= max_c)) {
    add_invalid(dst);
    return;
  }
  valid_.at(dst) = 1;
  begin_[dst] = static_cast<std::uint32_t>(taps_.size());
  if (interp == Interpolation::kNearest) {
    const auto r = static_cast<std::size_t>(std::lround(row));
    const auto c = static_cast<std::size_t>(std::lround(col));
    taps_.push_back({static_cast<std::uint32_t>(r * src_w_ + c), 1.0});
  } else {
    const auto r0 = static_cast<std::size_t>(std::floor(row));
    const auto c0 = static_cast<std::size_t>(std::floor(col));
    const std::size_t r1 = std::min(r0 + 1, src_h_ - 1);
    const std::size_t c1 = std::min(c0 + 1, src_w_ - 1);
    const double fr = row - static_cast<double>(r0);
    const double fc = col - static_cast<double>(c0);
    const double w[4] = {(1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc), fr * fc};
    const std::size_t idx[4] = {r0 * src_w_ + c0, r0 * src_w_ + c1, r1 * src_w_ + c0,
                                r1 * src_w_ + c1};
    for (int k = 0; k < 4; ++k) {
      if (w[k] != 0.0) taps_.push_back({static_cast<std::uint32_t>(idx[k]), w[k]});
    }
  }
  end_[dst] = static_cast<std::uint32_t>(taps_.size());
}

MaskedGrid Resampler::apply(const Grid2D& src) const {
  if (src.height() != src_h_ || src.width() != src_w_) {
    throw std::invalid_argument("Resampler::apply: source raster has the wrong shape");
  }
  const std::size_t nc = src.channels();
  MaskedGrid out{Grid2D(dst_h_, dst_w_, nc), valid_};
  for (std::size_t d = 0; d < valid_.size(); ++d) {
    if (valid_[d] == 0) continue;
    auto dst = out.grid.cell(d);
    for (std::uint32_t t = begin_[d]; t < end_[d]; ++t) {
      auto s = src.cell(taps_[t].src);
      for (std::size_t c = 0; c < nc; ++c) dst[c] += taps_[t].weight * s[c];
    }
  }
  return out;
}

Grid2D Resampler::apply_transpose(const Grid2D& upstream) const {
  if (upstream.height() != dst_h_ || upstream.width() != dst_w_) {
    throw std::invalid_argument("Resampler::apply_transpose: upstream raster has the wrong shape");
  }
  const std::size_t nc = upstream.channels();
  Grid2D out(src_h_, src_w_, nc);
  for (std::size_t d = 0; d < valid_.size(); ++d) {
    if (valid_[d] == 0) continue;
    auto g = upstream.cell(d);
    for (std::uint32_t t = begin_[d]; t < end_[d]; ++t) {
      auto s = out.cell(taps_[t].src);
      for (std::size_t c = 0; c < nc; ++c) s[c] += taps_[t].weight * g[c];
    }
  }
  return out;
}

Resampler make_ipm_resampler(const CameraModel& cam, std::size_t img_h, std::size_t img_w,
                             const BevConfig& bev, Interpolation interp) {
  bev.validate();
  Resampler rs(img_h, img_w, bev.rows(), bev.cols());
  for (std::size_t r = 0; r < bev.rows(); ++r) {
    for (std::size_t c = 0; c < bev.cols(); ++c) {
      const std::size_t d = r * bev.cols() + c;
      const Eigen::Vector2d xy = bev.cell_center(static_cast<double>(r), static_cast<double>(c));
      const PixelProjection px = project_ego_to_pixel(cam, {xy.x(), xy.y(), 0.0});
      if (!px.in_front) {
        rs.add_invalid(d);
        continue;
      }
      rs.add_sample(d, px.v, px.u, interp);
    }
  }
  return rs;
}

MaskedGrid ipm_warp_grid(const CameraModel& cam, const Grid2D& persp, const BevConfig& bev,
                         Interpolation interp) {
  if (persp.empty()) throw std::invalid_argument("ipm_warp_grid: empty perspective grid");
  return make_ipm_resampler(cam, persp.height(), persp.width(), bev, interp).apply(persp);
}

// ---------------------------------------------------------------------------

Eigen::Vector2d PlanarFrame::to_ego(double row, double col) const {
  const double f = forward_min + (row + 0.5) * pitch;
  const double l = left_min + (col + 0.5) * pitch;
  const Eigen::Vector2d fwd(std::cos(heading), std::sin(heading));
  const Eigen::Vector2d left(-std::sin(heading), std::cos(heading));
  return origin + f * fwd + l * left;
}

Eigen::Vector2d PlanarFrame::to_raster(const Eigen::Vector2d& ego) const {
  const Eigen::Vector2d rel = ego - origin;
  const Eigen::Vector2d fwd(std::cos(heading), std::sin(heading));
  const Eigen::Vector2d left(-std::sin(heading), std::cos(heading));
  return {(rel.dot(fwd) - forward_min) / pitch - 0.5, (rel.dot(left) - left_min) / pitch - 0.5};
}

PlanarFrame bev_frame(const BevConfig& bev) {
  PlanarFrame f;
  f.forward_min = bev.x_min;
  f.left_min = bev.y_min;
  f.pitch = bev.pitch;
  f.rows = bev.rows();
  f.cols = bev.cols();
  return f;
}

std::size_t TopDownExtent::rows() const {
  return static_cast<std::size_t>(std::lround((forward_max - forward_min) / pitch));
}

std::size_t TopDownExtent::cols() const {
  return static_cast<std::size_t>(std::lround((left_max - left_min) / pitch));
}

namespace {

double ground_heading(const CameraModel& cam) {
  Eigen::Vector2d axis(cam.rotation(0, 2), cam.rotation(1, 2));
  if (axis.norm() < 1e-9) {
    // Looking straight down: image "up" (-y) gives the heading.
    axis = Eigen::Vector2d(-cam.rotation(0, 1), -cam.rotation(1, 1));
  }
  return std::atan2(axis.y(), axis.x());
}

}  // namespace

PlanarFrame camera_ground_frame(const CameraModel& cam, const TopDownExtent& extent) {
  if (!(extent.forward_max > extent.forward_min) || !(extent.left_max > extent.left_min) ||
      !(extent.pitch > 0.0)) {
    throw std::invalid_argument("camera top-down extent is empty or has non-positive pitch");
  }
  PlanarFrame f;
  f.origin = cam.translation.head<2>();
  f.heading = ground_heading(cam);
  f.forward_min = extent.forward_min;
  f.left_min = extent.left_min;
  f.pitch = extent.pitch;
  f.rows = extent.rows();
  f.cols = extent.cols();
  return f;
}

double camera_tilt(const CameraModel& cam) {
  const Eigen::Vector3d axis = cam.rotation.col(2);
  return std::asin(std::clamp(-axis.z(), -1.0, 1.0));
}

Resampler make_frame_resampler(const PlanarFrame& src, const PlanarFrame& dst, Interpolation interp) {
  Resampler rs(src.rows, src.cols, dst.rows, dst.cols);
  for (std::size_t r = 0; r < dst.rows; ++r) {
    for (std::size_t c = 0; c < dst.cols; ++c) {
      const Eigen::Vector2d rc =
          src.to_raster(dst.to_ego(static_cast<double>(r), static_cast<double>(c)));
      rs.add_sample(r * dst.cols + c, rc.x(), rc.y(), interp);
    }
  }
  return rs;
}

MaskedGrid camera_frame_to_bev(const CameraModel& cam, const Grid2D& cam_topdown,
                               const TopDownExtent& extent, const BevConfig& bev,
                               const CameraWarpOptions& options, std::vector<std::string>* warnings) {
  bev.validate();
  const PlanarFrame src = camera_ground_frame(cam, extent);
  if (cam_topdown.height() != src.rows || cam_topdown.width() != src.cols) {
    throw std::invalid_argument("camera_frame_to_bev: top-down raster does not match its extent");
  }
  const double tilt = camera_tilt(cam);
  if (warnings != nullptr && std::abs(tilt) > options.max_tilt) {
    std::ostringstream msg;
    msg << "camera '" << cam.name << "': optical axis tilt " << tilt * 180.0 / std::numbers::pi
        << " deg exceeds " << options.max_tilt * 180.0 / std::numbers::pi
        << " deg; applying its ground-plane projection only";
    warnings->push_back(msg.str());
  }
  return make_frame_resampler(src, bev_frame(bev), options.interp).apply(cam_topdown);
}

MaskedGrid bev_to_camera_frame(const CameraModel& cam, const Grid2D& bev_grid, const BevConfig& bev,
                               const TopDownExtent& extent, Interpolation interp) {
  bev.validate();
  if (bev_grid.height() != bev.rows() || bev_grid.width() != bev.cols()) {
    throw std::invalid_argument("bev_to_camera_frame: grid does not match the BEV config");
  }
  return make_frame_resampler(bev_frame(bev), camera_ground_frame(cam, extent), interp)
      .apply(bev_grid);
}

std::vector<std::uint32_t> fusion_counts(std::span<const MaskedGrid> views) {
  if (views.empty()) throw std::invalid_argument("fuse_cameras: no views");
  const Grid2D& first = views.front().grid;
  std::vector<std::uint32_t> counts(first.cells(), 0);
  for (const auto& v : views) {
    if (!v.grid.same_shape(first) || v.valid.size() != first.cells()) {
      throw std::invalid_argument("fuse_cameras: views differ in shape or channel count");
    }
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += v.valid[i] != 0 ? 1 : 0;
  }
  return counts;
}

Grid2D fuse_cameras(std::span<const MaskedGrid> views) {
  const auto counts = fusion_counts(views);
  const Grid2D& first = views.front().grid;
  Grid2D out(first.height(), first.width(), first.channels());
  for (const auto& v : views) {
    for (std::size_t i = 0; i < counts.size(); ++i) {
      if (v.valid[i] == 0) continue;
      auto dst = out.cell(i);
      auto src = v.grid.cell(i);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
  }
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] < 2) continue;
    for (double& x : out.cell(i)) x /= static_cast<double>(counts[i]);
  }
  return out;
}

std::vector<CameraModel> default_rig() {
  const double pitch_down = 10.0 * std::numbers::pi / 180.0;
  const char* names[4] = {"front", "left", "rear", "right"};
  const double yaws[4] = {0.0, std::numbers::pi / 2, std::numbers::pi, -std::numbers::pi / 2};
  const Eigen::Vector3d mounts[4] = {{1.5, 0.0, 1.6}, {0.0, 0.8, 1.6}, {-1.5, 0.0, 1.6},
                                     {0.0, -0.8, 1.6}};
  std::vector<CameraModel> rig;
  for (int k = 0; k < 4; ++k) {
    CameraModel cam;
    cam.name = names[k];
    cam.fx = cam.fy = 64.0;
    cam.cx = 63.5;
    cam.cy = 31.5;
    cam.width = 128;
    cam.height = 64;
    cam.rotation = camera_rotation(yaws[k], pitch_down);
    cam.translation = mounts[k];
    rig.push_back(cam);
  }
  return rig;
}

}  // namespace hdmap
