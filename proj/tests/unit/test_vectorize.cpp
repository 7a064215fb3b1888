#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "hdmap/bevnet.hpp"
#include "hdmap/metrics.hpp"
#include "hdmap/synth.hpp"
#include "hdmap/vectorize.hpp"
#include "support.hpp"

using namespace hdmap;

namespace {

ForegroundPoint fp(std::size_t r, std::size_t c, double conf, std::vector<double> emb = {0.0}) {
  return {r, c, conf, std::move(emb)};
}

// Textbook DBSCAN on a precomputed distance table, expanding clusters with an
// explicit seed set.
std::vector<int> oracle_dbscan(const std::vector<ForegroundPoint>& pts, double eps, std::size_t min_pts) {
  const std::size_t n = pts.size();
  auto near = [&](std::size_t i) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < n; ++j) {
      double d = 0.0;
      for (std::size_t e = 0; e < pts[i].embedding.size(); ++e) d += std::abs(pts[i].embedding[e] - pts[j].embedding[e]);
      if (d <= eps) out.push_back(j);
    }
    return out;
  };
  std::vector<int> label(n, -2);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] != -2) continue;
    auto seeds = near(i);
    if (seeds.size() < min_pts) {
      label[i] = -1;
      continue;
    }
    label[i] = next;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      const std::size_t q = seeds[k];
      if (label[q] == -1) label[q] = next;
      if (label[q] != -2) continue;
      label[q] = next;
      auto more = near(q);
      if (more.size() >= min_pts) seeds.insert(seeds.end(), more.begin(), more.end());
    }
    ++next;
  }
  return label;
}

Grid2D direction_grid(std::size_t rows, std::size_t cols, std::size_t nd, std::size_t bin) {
  Grid2D d(rows, cols, nd);
  for (std::size_t i = 0; i < d.cells(); ++i) d.cell(i)[bin] = 1.0;
  return d;
}

}  // namespace

TEST_CASE("dbscan") {
  SUBCASE("identical embeddings form one cluster") {
    std::vector<ForegroundPoint> pts;
    for (std::size_t i = 0; i < 6; ++i) pts.push_back(fp(0, i, 1.0, {0.5, 0.5}));
    const auto l = dbscan(pts, 1.0, 3);
    CHECK(std::all_of(l.begin(), l.end(), [](std::int32_t v) { return v == 0; }));
  }
  SUBCASE("separated groups form two clusters") {
    std::vector<ForegroundPoint> pts;
    for (std::size_t i = 0; i < 4; ++i) pts.push_back(fp(0, i, 1.0, {0.0}));
    for (std::size_t i = 0; i < 4; ++i) pts.push_back(fp(1, i, 1.0, {10.0}));
    const auto l = dbscan(pts, 1.0, 3);
    CHECK(l == std::vector<std::int32_t>{0, 0, 0, 0, 1, 1, 1, 1});
  }
  SUBCASE("matches a textbook implementation and ignores translation") {
    std::mt19937_64 rng(71);
    std::uniform_real_distribution<double> u(0, 6);
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<ForegroundPoint> pts, shifted;
      for (std::size_t i = 0; i < 30; ++i) {
        pts.push_back(fp(0, i, 1.0, {u(rng), u(rng)}));
        shifted.push_back(fp(0, i, 1.0, {pts.back().embedding[0] + 0.5, pts.back().embedding[1] - 2.0}));
      }
      const auto got = dbscan(pts, 1.0, 3);
      const auto want = oracle_dbscan(pts, 1.0, 3);
      for (std::size_t i = 0; i < pts.size(); ++i) CHECK(got[i] == want[i]);
      CHECK(dbscan(shifted, 1.0, 3) == got);
    }
  }
  CHECK_THROWS_AS(dbscan({}, 0.0, 3), std::invalid_argument);
}

TEST_CASE("directional_nms") {
  CHECK(directional_nms({}).empty());
  CHECK(directional_nms({fp(3, 3, 0.7)}).size() == 1);

  SUBCASE("constant blob keeps everything") {
    std::vector<ForegroundPoint> blob;
    for (std::size_t r = 2; r < 5; ++r) {
      for (std::size_t c = 2; c < 6; ++c) blob.push_back(fp(r, c, 0.8));
    }
    CHECK(directional_nms(blob).size() == blob.size());
  }

  SUBCASE("horizontal ridge keeps window maxima") {
    // A 1-cell-wide ridge along the columns: ap_wide > ap_tall, so the max
    // runs down the rows and every ridge cell is its own column's maximum.
    std::vector<ForegroundPoint> ridge;
    for (std::size_t c = 0; c < 12; ++c) ridge.push_back(fp(4, c + 4, 0.1 + 0.05 * double(c)));
    CHECK(directional_nms(ridge).size() == ridge.size());

    // Two stacked rows: only the brighter row survives.
    std::vector<ForegroundPoint> thick = ridge;
    for (std::size_t c = 0; c < 12; ++c) thick.push_back(fp(5, c + 4, 0.05 + 0.05 * double(c)));
    const auto kept = directional_nms(thick);
    CHECK(kept.size() == 12);
    for (const auto& p : kept) CHECK(p.row == 4);
  }

  SUBCASE("vertical ridge suppresses along the columns") {
    std::vector<ForegroundPoint> pts;
    for (std::size_t r = 0; r < 12; ++r) {
      pts.push_back(fp(r + 4, 6, 0.9));
      pts.push_back(fp(r + 4, 7, 0.5));
    }
    const auto kept = directional_nms(pts);
    CHECK(kept.size() == 12);
    for (const auto& p : kept) CHECK(p.col == 6);
  }

  SUBCASE("output is a subset with a window-scan oracle") {
    std::mt19937_64 rng(72);
    std::uniform_real_distribution<double> u(0.5, 1.0);
    std::vector<ForegroundPoint> pts;
    std::map<std::pair<long, long>, double> conf;
    for (std::size_t r = 5; r < 15; ++r) {
      for (std::size_t c = 5; c < 9; ++c) {
        pts.push_back(fp(r, c, u(rng)));
        conf[{long(r), long(c)}] = pts.back().confidence;
      }
    }
    auto window = [&](long r, long c, long kh, long kw, bool avg) {
      double best = 0.0, sum = 0.0;
      long n = 0;
      for (long dr = -kh / 2; dr <= kh / 2; ++dr) {
        for (long dc = -kw / 2; dc <= kw / 2; ++dc) {
          if (r + dr < 0 || c + dc < 0) continue;
          ++n;
          auto it = conf.find({r + dr, c + dc});
          const double v = it == conf.end() ? 0.0 : it->second;
          best = std::max(best, v);
          sum += v;
        }
      }
      return avg ? sum / double(n) : best;
    };
    std::set<std::pair<std::size_t, std::size_t>> want;
    for (const auto& p : pts) {
      const long r = long(p.row), c = long(p.col);
      const bool wide = window(r, c, 5, 9, true) > window(r, c, 9, 5, true);
      const double m = wide ? window(r, c, 5, 1, false) : window(r, c, 1, 5, false);
      if (m == p.confidence) want.insert({p.row, p.col});
    }
    std::set<std::pair<std::size_t, std::size_t>> got;
    for (const auto& p : directional_nms(pts)) got.insert({p.row, p.col});
    CHECK(got == want);
  }
}

TEST_CASE("connect_one_direction and connect_line") {
  const std::size_t nd = 36;
  // Direction bin 0 points along +col.
  const Grid2D dir = direction_grid(10, 40, nd, 0);

  SUBCASE("single point") {
    ConnectState st({fp(5, 5, 1.0)}, dir);
    CHECK(connect_one_direction(0, st, 4.0, 8.0) == std::vector<std::size_t>{0});
    CHECK_FALSE(connect_line({fp(5, 5, 1.0)}, dir, 4.0, 8.0).has_value());
  }

  SUBCASE("collinear points are visited in order") {
    std::vector<ForegroundPoint> pts;
    for (std::size_t k : {3u, 1u, 0u, 4u, 2u}) pts.push_back(fp(5, 2 + 4 * k, 1.0));
    ConnectState st(pts, dir);
    const auto walk = connect_one_direction(2, st, 4.0, 8.0);
    std::vector<std::size_t> cols;
    for (std::size_t i : walk) cols.push_back(pts[i].col);
    CHECK(cols == std::vector<std::size_t>{2, 6, 10, 14, 18});
  }

  SUBCASE("a far candidate stops the walk") {
    ConnectState st({fp(5, 2, 1.0), fp(5, 20, 1.0)}, dir);
    CHECK(connect_one_direction(0, st, 4.0, 8.0).size() == 1);
  }

  SUBCASE("two points make a two-point line") {
    const auto order = connect_line({fp(5, 2, 0.9), fp(5, 6, 0.8)}, dir, 4.0, 8.0);
    REQUIRE(order.has_value());
    CHECK(order->size() == 2);
  }

  SUBCASE("seeding in the middle recovers the whole segment") {
    std::vector<ForegroundPoint> pts;
    for (std::size_t k = 0; k < 9; ++k) pts.push_back(fp(5, 2 + 4 * k, k == 4 ? 1.0 : 0.5));
    const auto order = connect_line(pts, dir, 4.0, 8.0);
    REQUIRE(order.has_value());
    REQUIRE(order->size() == 9);
    const std::size_t a = pts[order->front()].col, b = pts[order->back()].col;
    CHECK(std::min(a, b) == 2);
    CHECK(std::max(a, b) == 34);
    for (std::size_t i = 1; i < order->size(); ++i) {
      CHECK(std::abs(long(pts[(*order)[i]].col) - long(pts[(*order)[i - 1]].col)) == 4);
    }
  }

  SUBCASE("arc vertices come out monotone in the arc parameter") {
    const double radius = 30.0;
    Grid2D d(80, 80, nd);
    std::vector<ForegroundPoint> pts;
    std::vector<double> param;
    for (int k = 0; k <= 12; ++k) {
      const double t = 0.14 * double(k);
      const auto r = std::size_t(std::lround(5 + radius * std::sin(t)));
      const auto c = std::size_t(std::lround(5 + radius * (1 - std::cos(t)) + 10));
      // Tangent (d_row, d_col) = (cos t, sin t).
      d.at(r, c, direction_bin(std::atan2(std::cos(t), std::sin(t)), nd)) = 1.0;
      pts.push_back(fp(r, c, k == 6 ? 1.0 : 0.5));
      param.push_back(t);
    }
    const auto order = connect_line(pts, d, 4.0, 8.0);
    REQUIRE(order.has_value());
    CHECK(order->size() == pts.size());
    const bool up = param[order->back()] > param[order->front()];
    for (std::size_t i = 1; i < order->size(); ++i) {
      CHECK((param[(*order)[i]] > param[(*order)[i - 1]]) == up);
    }
  }
}

TEST_CASE("vectorize") {
  const BevConfig bev{-6.0, 6.0, -6.0, 6.0, 0.15};
  const RasterStyle style;

  SUBCASE("all background gives an empty map") {
    Grid2D seg(bev.rows(), bev.cols(), 4);
    for (std::size_t i = 0; i < seg.cells(); ++i) seg.cell(i)[0] = 1.0;
    const auto vm = vectorize(seg, Grid2D(bev.rows(), bev.cols(), 4), Grid2D(bev.rows(), bev.cols(), 36), bev);
    CHECK(vm.elements.empty());
  }

  SUBCASE("straight divider round trip") {
    VectorMap src{bev, {Polyline{ElementClass::kDivider, {{-5.0, 0.3}, {5.0, 0.3}}, 1.0}}};
    const LabelPack labels = rasterize_vector_map(src, bev, style);
    const IdealGrids ideal = ideal_grids(labels, 4, 3.0);
    const VectorMap out = vectorize(ideal.seg, ideal.embedding, ideal.direction, bev);
    REQUIRE(out.elements.size() == 1);
    const double cd = chamfer(sample_polyline(out.elements[0], bev.pitch), sample_polyline(src.elements[0], bev.pitch), 1e9).average;
    CHECK(cd < bev.pitch);
  }

  SUBCASE("two parallel dividers give two lines") {
    VectorMap src{bev,
                  {Polyline{ElementClass::kDivider, {{-5.0, -1.0}, {5.0, -1.0}}, 1.0},
                   Polyline{ElementClass::kDivider, {{-5.0, 1.0}, {5.0, 1.0}}, 1.0}}};
    const LabelPack labels = rasterize_vector_map(src, bev, style);
    const IdealGrids ideal = ideal_grids(labels, 4, 3.0);
    VectorizeStats stats;
    const VectorMap out = vectorize(ideal.seg, ideal.embedding, ideal.direction, bev, {}, &stats);
    CHECK(out.elements.size() == 2);
    CHECK(stats.clusters == 2);
    CHECK(stats.noise_points == 0);
    // Deterministic output.
    CHECK(vectorize(ideal.seg, ideal.embedding, ideal.direction, bev) == out);
  }

  SUBCASE("shape mismatch is rejected") {
    CHECK_THROWS_AS(vectorize(Grid2D(3, 3, 4), Grid2D(3, 3, 4), Grid2D(3, 3, 36), bev), std::invalid_argument);
  }
}
