#include "hdmap/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "hdmap/raster.hpp"

namespace hdmap {

void SceneSpec::validate() const {
  if (lanes_min < 1 || lanes_max < lanes_min) {
    throw std::invalid_argument("SceneSpec: need 1 <= lanes_min <= lanes_max");
  }
  if (!(lane_width > 0.0)) throw std::invalid_argument("SceneSpec: lane width must be positive");
  if (!(point_density > 0.0)) throw std::invalid_argument("SceneSpec: point density must be positive");
  if (!(curvature_max >= 0.0) || !(crossing_probability >= 0.0) || !(crossing_probability <= 1.0) ||
      !(boundary_bump >= 0.0) || !(lateral_jitter >= 0.0) || !(heading_jitter >= 0.0) ||
      !(point_noise >= 0.0) || !(image_noise >= 0.0)) {
    throw std::invalid_argument("SceneSpec: noise levels and ranges must be non-negative");
  }
}

std::vector<std::vector<Eigen::Vector2d>> clip_polyline(const std::vector<Eigen::Vector2d>& pts,
                                                        double x_min, double x_max, double y_min,
                                                        double y_max) {
  std::vector<std::vector<Eigen::Vector2d>> pieces;
  std::vector<Eigen::Vector2d> current;
  auto flush = [&] {
    auto cleaned = dedupe_consecutive(current);
    if (cleaned.size() >= 2) pieces.push_back(std::move(cleaned));
    current.clear();
  };
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const Eigen::Vector2d a = pts[i];
    const Eigen::Vector2d d = pts[i + 1] - a;
    // Liang-Barsky.
    double t0 = 0.0, t1 = 1.0;
    bool inside = true;
    const double p[4] = {-d.x(), d.x(), -d.y(), d.y()};
    const double q[4] = {a.x() - x_min, x_max - a.x(), a.y() - y_min, y_max - a.y()};
    for (int k = 0; k < 4 && inside; ++k) {
      if (p[k] == 0.0) {
        if (q[k] < 0.0) inside = false;
      } else {
        const double t = q[k] / p[k];
        if (p[k] < 0.0) {
          t0 = std::max(t0, t);
        } else {
          t1 = std::min(t1, t);
        }
        if (t0 > t1) inside = false;
      }
    }
    if (!inside) {
      flush();
      continue;
    }
    const Eigen::Vector2d enter = t0 == 0.0 ? a : Eigen::Vector2d(a + t0 * d);
    const Eigen::Vector2d leave = t1 == 1.0 ? pts[i + 1] : Eigen::Vector2d(a + t1 * d);
    if (t0 > 0.0) flush();
    if (current.empty()) current.push_back(enter);
    current.push_back(leave);
    if (t1 < 1.0) flush();
  }
  flush();
  return pieces;
}

LabelPack rasterize_vector_map(const VectorMap& vm, const BevConfig& bev, const RasterStyle& style,
                               std::vector<std::string>* warnings) {
  bev.validate();
  for (std::size_t t : style.thickness) {
    if (t < 1) throw std::invalid_argument("rasterize_vector_map: thickness must be >= 1");
  }
  const std::size_t rows = bev.rows();
  const std::size_t cols = bev.cols();
  LabelPack pack;
  pack.semantic = Grid2D(rows, cols, kNumClasses + 1);
  pack.instance.assign(rows * cols, 0);
  for (std::size_t i = 0; i < pack.semantic.cells(); ++i) pack.semantic.cell(i)[0] = 1.0;

  VectorMap drawn{vm.bev, {}};
  std::uint32_t next_id = 1;
  for (std::size_t e = 0; e < vm.elements.size(); ++e) {
    const auto& element = vm.elements[e];
    const auto raster = dedupe_consecutive(to_raster(element.points, bev));
    const auto cells =
        raster.size() >= 2 ? stroke_polyline(raster, style.thickness[class_index(element.cls)], rows, cols)
                           : std::vector<std::size_t>{};
    if (cells.empty()) {
      if (warnings != nullptr) {
        warnings->push_back("element " + std::to_string(e) + " (" +
                            std::string(class_name(element.cls)) +
                            ") lies outside the BEV extent; skipped");
      }
      continue;
    }
    const std::uint32_t id = next_id++;
    for (std::size_t cell : cells) {
      auto s = pack.semantic.cell(cell);
      std::fill(s.begin(), s.end(), 0.0);
      s[static_cast<std::size_t>(element.cls)] = 1.0;
      pack.instance[cell] = id;
    }
    drawn.elements.push_back(element);
  }
  pack.direction = make_direction_labels(drawn, bev, style.num_directions, style.direction_step,
                                         style.thickness);
  return pack;
}

Grid2D render_camera(const CameraModel& cam, const LabelPack& labels, const BevConfig& bev,
                     double noise, std::mt19937_64& rng) {
  const std::size_t h = cam.image_height();
  const std::size_t w = cam.image_width();
  Grid2D image(h, w, kNumClasses);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t v = 0; v < h; ++v) {
    for (std::size_t u = 0; u < w; ++u) {
      auto px = image.cell(v, u);
      const auto ground = ipm_pixel_to_ground(cam, static_cast<double>(u), static_cast<double>(v));
      if (ground) {
        if (const auto rc = bev.cell_of(ground->x(), ground->y())) {
          const auto s = labels.semantic.cell(rc->first, rc->second);
          for (std::size_t c = 1; c < s.size(); ++c) px[c - 1] = s[c];
        }
      }
      if (noise > 0.0) {
        for (double& x : px) x += noise * gauss(rng);
      }
    }
  }
  return image;
}

double distance_to_polyline(const Eigen::Vector2d& p, const std::vector<Eigen::Vector2d>& line) {
  double best = std::numeric_limits<double>::infinity();
  if (line.size() == 1) return (p - line.front()).norm();
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    const Eigen::Vector2d d = line[i + 1] - line[i];
    const double len2 = d.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((p - line[i]).dot(d) / len2, 0.0, 1.0) : 0.0;
    best = std::min(best, (p - (line[i] + t * d)).norm());
  }
  return best;
}

namespace {

constexpr double kMinElementLength = 2.0;  // m
constexpr double kVertexSpacing = 1.0;     // m
constexpr double kCurbWidth = 0.3;         // m

struct Arc {
  Eigen::Vector2d origin;
  double heading;
  double curvature;

  double heading_at(double s) const { return heading + curvature * s; }
  Eigen::Vector2d at(double s, double offset) const {
    Eigen::Vector2d p;
    if (std::abs(curvature) < 1e-12) {
      p = origin + s * Eigen::Vector2d(std::cos(heading), std::sin(heading));
    } else {
      const double h = heading_at(s);
      p = origin + Eigen::Vector2d((std::sin(h) - std::sin(heading)) / curvature,
                                   -(std::cos(h) - std::cos(heading)) / curvature);
    }
    const double h = heading_at(s);
    return p + offset * Eigen::Vector2d(-std::sin(h), std::cos(h));
  }
};

void add_clipped(VectorMap& vm, ElementClass cls, const std::vector<Eigen::Vector2d>& pts,
                 const BevConfig& bev) {
  const double eps = 1e-6;
  for (auto& piece : clip_polyline(pts, bev.x_min + eps, bev.x_max - eps, bev.y_min + eps, bev.y_max - eps)) {
    Polyline line{cls, std::move(piece), 1.0};
    if (line.length() >= kMinElementLength) vm.elements.push_back(std::move(line));
  }
}

}  // namespace

Scene gen_scene(const SceneSpec& spec, const BevConfig& bev, std::span<const CameraModel> rig,
                const RasterStyle& style) {
  spec.validate();
  bev.validate();
  const double extent_width = bev.y_max - bev.y_min;
  if (static_cast<double>(spec.lanes_min) * spec.lane_width >= extent_width) {
    throw std::invalid_argument("gen_scene: BEV extent is too narrow to fit " +
                                std::to_string(spec.lanes_min) + " lane(s)");
  }
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  std::size_t lanes = spec.lanes_min + static_cast<std::size_t>(unit(rng) * static_cast<double>(spec.lanes_max - spec.lanes_min + 1));
  lanes = std::min(lanes, spec.lanes_max);
  while (lanes > spec.lanes_min && static_cast<double>(lanes) * spec.lane_width >= extent_width) --lanes;
  const double half_road = 0.5 * static_cast<double>(lanes) * spec.lane_width;

  // The ego sits in one of the lanes; the reference line is the road centre.
  const auto ego_lane = static_cast<std::size_t>(unit(rng) * static_cast<double>(lanes)) % lanes;
  const double ego_offset = (static_cast<double>(ego_lane) + 0.5) * spec.lane_width - half_road;
  const double centre_y = -ego_offset + uniform(-0.5, 0.5) * spec.lateral_jitter;
  Arc arc{{0.0, centre_y}, uniform(-1.0, 1.0) * spec.heading_jitter,
          uniform(-1.0, 1.0) * spec.curvature_max};

  const double reach = bev.diagonal();
  const auto samples = static_cast<std::size_t>(std::ceil(2.0 * reach / kVertexSpacing));
  auto offset_curve = [&](double offset) {
    std::vector<Eigen::Vector2d> pts;
    pts.reserve(samples + 1);
    for (std::size_t i = 0; i <= samples; ++i) {
      pts.push_back(arc.at(-reach + static_cast<double>(i) * kVertexSpacing, offset));
    }
    return pts;
  };

  Scene scene;
  scene.map.bev = bev;
  std::vector<std::vector<Eigen::Vector2d>> boundaries;
  for (double side : {-1.0, 1.0}) {
    boundaries.push_back(offset_curve(side * half_road));
    add_clipped(scene.map, ElementClass::kBoundary, boundaries.back(), bev);
  }
  for (std::size_t k = 1; k < lanes; ++k) {
    add_clipped(scene.map, ElementClass::kDivider,
                offset_curve(-half_road + static_cast<double>(k) * spec.lane_width), bev);
  }
  if (unit(rng) < spec.crossing_probability) {
    const double margin = 0.2 * (bev.x_max - bev.x_min);
    const double s = uniform(bev.x_min + margin, bev.x_max - margin);
    std::vector<Eigen::Vector2d> pts;
    const auto n = static_cast<std::size_t>(std::ceil(2.0 * half_road / kVertexSpacing));
    for (std::size_t i = 0; i <= n; ++i) {
      const double o = -half_road + 2.0 * half_road * static_cast<double>(i) / static_cast<double>(n);
      pts.push_back(arc.at(s, o));
    }
    add_clipped(scene.map, ElementClass::kPedCrossing, pts, bev);
  }

  scene.labels = rasterize_vector_map(scene.map, bev, style);

  for (const auto& cam : rig) {
    cam.validate();
    scene.cameras.push_back(render_camera(cam, scene.labels, bev, spec.image_noise, rng));
  }

  // Ground returns with a curb ridge along both road boundaries.
  const double area = (bev.x_max - bev.x_min) * (bev.y_max - bev.y_min);
  const auto count = static_cast<std::size_t>(std::llround(spec.point_density * area));
  std::normal_distribution<double> gauss(0.0, 1.0);
  scene.points = PointCloud(spec.point_features);
  std::vector<double> p(3 + spec.point_features);
  for (std::size_t i = 0; i < count; ++i) {
    const Eigen::Vector2d xy(uniform(bev.x_min, bev.x_max), uniform(bev.y_min, bev.y_max));
    double d = std::numeric_limits<double>::infinity();
    for (const auto& b : boundaries) d = std::min(d, distance_to_polyline(xy, b));
    const double ridge = d < kCurbWidth ? spec.boundary_bump * (1.0 - d / kCurbWidth) : 0.0;
    p[0] = xy.x();
    p[1] = xy.y();
    p[2] = ridge + spec.point_noise * gauss(rng);
    for (std::size_t k = 0; k < spec.point_features; ++k) p[3 + k] = gauss(rng);
    scene.points.push_back(p);
  }
  return scene;
}

std::uint64_t scene_seed(std::uint64_t base, std::size_t index) {
  // splitmix64 finaliser over base + index
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

IdealGrids ideal_grids(const LabelPack& labels, std::size_t embedding_dim, double delta_d) {
  if (embedding_dim == 0) throw std::invalid_argument("ideal_grids: embedding dimension must be >= 1");
  IdealGrids g;
  g.seg = labels.semantic;
  g.embedding = Grid2D(labels.rows(), labels.cols(), embedding_dim);
  g.direction = Grid2D(labels.rows(), labels.cols(), labels.direction.channels());
  for (std::size_t i = 0; i < labels.instance.size(); ++i) {
    const std::uint32_t id = labels.instance[i];
    if (id != 0) {
      const std::size_t axis = (id - 1) % embedding_dim;
      const double scale = 1.0 + static_cast<double>((id - 1) / embedding_dim);
      g.embedding.cell(i)[axis] = 2.0 * delta_d * scale;
    }
    auto src = labels.direction.cell(i);
    auto dst = g.direction.cell(i);
    double total = 0.0;
    for (double v : src) total += v;
    if (total > 0.0) {
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] = src[c] / total;
    }
  }
  return g;
}

}  // namespace hdmap
