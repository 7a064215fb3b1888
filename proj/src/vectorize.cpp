#include "hdmap/vectorize.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

#include "hdmap/bevnet.hpp"
#include "hdmap/numerics.hpp"

namespace hdmap {

namespace {

double l1(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
  return d;
}

Eigen::Vector2d refine_vertex(const Eigen::Vector2d& p, const std::vector<ForegroundPoint>& cluster,
                              const Grid2D& direction, double radius) {
  const auto probs = direction.cell(static_cast<std::size_t>(p.x()), static_cast<std::size_t>(p.y()));
  const auto bin = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
  const Eigen::Vector2d d = direction_vector(bin, direction.channels());
  const Eigen::Vector2d normal(-d.y(), d.x());
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& q : cluster) {
    const Eigen::Vector2d off(static_cast<double>(q.row) - p.x(), static_cast<double>(q.col) - p.y());
    if (off.norm() <= radius) {
      sum += off.dot(normal);
      ++count;
    }
  }
  return count == 0 ? p : Eigen::Vector2d(p + (sum / static_cast<double>(count)) * normal);
}

}  // namespace

std::vector<std::int32_t> dbscan(const std::vector<ForegroundPoint>& points, double eps,
                                 std::size_t min_pts) {
  if (!(eps > 0.0)) throw std::invalid_argument("dbscan: eps must be positive");
  if (min_pts < 1) throw std::invalid_argument("dbscan: min_pts must be >= 1");
  const std::size_t n = points.size();
  std::vector<std::vector<std::uint32_t>> neighbours(n);
  for (std::size_t i = 0; i < n; ++i) {
    neighbours[i].push_back(static_cast<std::uint32_t>(i));
    for (std::size_t j = i + 1; j < n; ++j) {
      if (l1(points[i].embedding, points[j].embedding) <= eps) {
        neighbours[i].push_back(static_cast<std::uint32_t>(j));
        neighbours[j].push_back(static_cast<std::uint32_t>(i));
      }
    }
  }
  constexpr std::int32_t kUnvisited = -2;
  std::vector<std::int32_t> label(n, kUnvisited);
  std::int32_t next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] != kUnvisited) continue;
    if (neighbours[i].size() < min_pts) {
      label[i] = kNoise;
      continue;
    }
    const std::int32_t id = next++;
    label[i] = id;
    std::deque<std::uint32_t> frontier(neighbours[i].begin(), neighbours[i].end());
    while (!frontier.empty()) {
      const std::uint32_t q = frontier.front();
      frontier.pop_front();
      if (label[q] == kNoise) label[q] = id;  // border point
      if (label[q] != kUnvisited) continue;
      label[q] = id;
      if (neighbours[q].size() >= min_pts) {
        frontier.insert(frontier.end(), neighbours[q].begin(), neighbours[q].end());
      }
    }
  }
  return label;
}

std::vector<ForegroundPoint> directional_nms(const std::vector<ForegroundPoint>& cluster,
                                             const NmsKernels& k) {
  if (cluster.empty()) return {};
  std::size_t r0 = cluster.front().row, r1 = r0, c0 = cluster.front().col, c1 = c0;
  for (const auto& p : cluster) {
    r0 = std::min(r0, p.row);
    r1 = std::max(r1, p.row);
    c0 = std::min(c0, p.col);
    c1 = std::max(c1, p.col);
  }
  // Pad by the largest kernel radius so every window around a cluster cell
  // sees the same cells it would on the full raster. Cells beyond the padded
  // box would be empty anyway, and the box never leaves the full raster's
  // lower bound because rows/cols are unsigned.
  std::size_t pad = 0;
  for (const auto* kk : {k.max_along_cols, k.max_along_rows, k.avg_wide, k.avg_tall}) {
    pad = std::max({pad, kk[0] / 2, kk[1] / 2});
  }
  const std::size_t top = r0 >= pad ? r0 - pad : 0;
  const std::size_t left = c0 >= pad ? c0 - pad : 0;
  Grid2D raster(r1 + pad + 1 - top, c1 + pad + 1 - left, 1);
  for (const auto& p : cluster) raster.at(p.row - top, p.col - left) = p.confidence;

  const Grid2D mp_cols = pool2d(raster, k.max_along_cols[0], k.max_along_cols[1], PoolMode::kMax);
  const Grid2D mp_rows = pool2d(raster, k.max_along_rows[0], k.max_along_rows[1], PoolMode::kMax);
  const Grid2D ap_wide = pool2d(raster, k.avg_wide[0], k.avg_wide[1], PoolMode::kAvg);
  const Grid2D ap_tall = pool2d(raster, k.avg_tall[0], k.avg_tall[1], PoolMode::kAvg);

  std::vector<ForegroundPoint> kept;
  for (const auto& p : cluster) {
    const std::size_t r = p.row - top;
    const std::size_t c = p.col - left;
    const double v = raster.at(r, c);
    const bool keep = ap_wide.at(r, c) > ap_tall.at(r, c) ? mp_rows.at(r, c) == v : mp_cols.at(r, c) == v;
    if (keep) kept.push_back(p);
  }
  return kept;
}

// ---------------------------------------------------------------------------

ConnectState::ConnectState(const std::vector<ForegroundPoint>& points, const Grid2D& direction)
    : points_(points),
      bins_(points.size(), 0),
      alive_(points.size(), 1),
      taken_(2 * points.size(), 0),
      alive_count_(points.size()),
      nd_(direction.channels()) {
  if (nd_ == 0 || nd_ % 2 != 0) {
    throw std::invalid_argument("connect: direction grid needs an even, non-zero channel count");
  }
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (points_[i].row >= direction.height() || points_[i].col >= direction.width()) {
      throw std::invalid_argument("connect: point outside the direction grid");
    }
    const auto probs = direction.cell(points_[i].row, points_[i].col);
    bins_[i] = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
  }
}

void ConnectState::remove(std::size_t i) {
  if (alive_[i] != 0) {
    alive_[i] = 0;
    --alive_count_;
  }
}

std::vector<std::size_t> connect_one_direction(std::size_t start, ConnectState& state, double step,
                                               double dist_threshold) {
  if (start >= state.size()) throw std::invalid_argument("connect_one_direction: bad start index");
  std::vector<std::size_t> line{start};
  std::size_t p = start;
  while (state.alive_count() > 0) {
    int slot = -1;
    for (int s = 0; s < 2; ++s) {
      if (!state.taken(p, s)) {
        slot = s;
        break;
      }
    }
    if (slot < 0) break;
    state.take(p, slot);
    const Eigen::Vector2d here = state.position(p);
    const Eigen::Vector2d target =
        step_node(here, direction_vector(state.bin(p, slot), state.num_directions()), step);

    for (std::size_t q = 0; q < state.size(); ++q) {
      if (state.alive(q) && (state.position(q) - here).norm() < step - 1.0) state.remove(q);
    }
    std::size_t next = state.size();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t q = 0; q < state.size(); ++q) {
      if (!state.alive(q)) continue;
      const double d = (state.position(q) - target).norm();
      if (d < best) {
        best = d;
        next = q;
      }
    }
    if (next == state.size()) break;
    const Eigen::Vector2d there = state.position(next);
    if ((there - here).norm() > dist_threshold) break;
    line.push_back(next);
    // The slot of `next` that points back at `p` is the arrival direction.
    const Eigen::Vector2d back = here - there;
    const double d0 = direction_vector(state.bin(next, 0), state.num_directions()).dot(back);
    const double d1 = direction_vector(state.bin(next, 1), state.num_directions()).dot(back);
    state.take(next, d0 >= d1 ? 0 : 1);
    p = next;
  }
  return line;
}

std::optional<std::vector<std::size_t>> connect_line(const std::vector<ForegroundPoint>& points,
                                                     const Grid2D& direction, double step,
                                                     double dist_threshold) {
  if (points.empty()) throw std::invalid_argument("connect_line: empty cluster");
  std::size_t seed = 0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (points[i].confidence > points[seed].confidence) seed = i;
  }
  ConnectState state(points, direction);
  const auto forward = connect_one_direction(seed, state, step, dist_threshold);
  const auto backward = connect_one_direction(seed, state, step, dist_threshold);
  std::vector<std::size_t> joined(backward.rbegin(), backward.rend());
  joined.insert(joined.end(), forward.begin() + 1, forward.end());
  if (joined.size() < 2) return std::nullopt;
  return joined;
}

VectorMap vectorize(const Grid2D& seg, const Grid2D& embedding, const Grid2D& direction,
                    const BevConfig& bev, const VectorizeParams& params, VectorizeStats* stats) {
  bev.validate();
  if (!seg.same_spatial(embedding) || !seg.same_spatial(direction) || seg.height() != bev.rows() ||
      seg.width() != bev.cols()) {
    throw std::invalid_argument("vectorize: prediction grids are not co-registered with the BEV config");
  }
  if (seg.channels() != kNumClasses + 1) {
    throw std::invalid_argument("vectorize: segmentation needs background plus " +
                                std::to_string(kNumClasses) + " class channels");
  }
  VectorizeStats local;
  VectorMap out{bev, {}};
  for (ElementClass cls : kAllClasses) {
    const auto ch = static_cast<std::size_t>(cls);
    std::vector<ForegroundPoint> fg;
    for (std::size_t r = 0; r < seg.height(); ++r) {
      for (std::size_t c = 0; c < seg.width(); ++c) {
        const double conf = seg.at(r, c, ch);
        if (conf <= params.foreground_threshold) continue;
        const auto e = embedding.cell(r, c);
        fg.push_back({r, c, conf, std::vector<double>(e.begin(), e.end())});
      }
    }
    if (fg.empty()) continue;
    const auto labels = dbscan(fg, params.eps, params.min_pts);
    const std::int32_t num = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<std::vector<ForegroundPoint>> clusters(static_cast<std::size_t>(std::max(num, 0)));
    for (std::size_t i = 0; i < fg.size(); ++i) {
      if (labels[i] == kNoise) {
        ++local.noise_points;
      } else {
        clusters[static_cast<std::size_t>(labels[i])].push_back(std::move(fg[i]));
      }
    }
    for (auto& cluster : clusters) {
      ++local.clusters;
      double conf = 0.0;
      for (const auto& p : cluster) conf += p.confidence;
      conf /= static_cast<double>(cluster.size());
      const auto sparse = directional_nms(cluster, params.nms);
      const auto order = connect_line(sparse, direction, params.step, params.dist_threshold);
      if (!order) {
        ++local.dropped;
        continue;
      }
      Polyline line{cls, {}, conf};
      for (std::size_t i : *order) {
        Eigen::Vector2d rc(static_cast<double>(sparse[i].row), static_cast<double>(sparse[i].col));
        if (params.refine) rc = refine_vertex(rc, cluster, direction, params.step - 1.0);
        line.points.push_back(bev.cell_center(rc.x(), rc.y()));
      }
      line.points = dedupe_consecutive(line.points);
      if (line.points.size() < 2) {
        ++local.dropped;
        continue;
      }
      out.elements.push_back(std::move(line));
    }
  }
  if (stats != nullptr) *stats = local;
  return out;
}

}  // namespace hdmap
