#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "hdmap/pillars.hpp"
#include "support.hpp"

using namespace hdmap;

namespace {

const BevConfig kBev{-4.0, 4.0, -2.0, 2.0, 0.5};

PointCloud random_cloud(std::size_t n, std::size_t extra, std::mt19937_64& rng, double spread = 5.0) {
  std::uniform_real_distribution<double> u(-spread, spread);
  PointCloud pc(extra);
  std::vector<double> p(3 + extra);
  for (std::size_t i = 0; i < n; ++i) {
    for (double& v : p) v = u(rng);
    pc.push_back(p);
  }
  return pc;
}

DenseNet identity_pn(std::size_t width) {
  return DenseNet{{DenseLayer{Eigen::MatrixXd::Identity(width, width), Eigen::VectorXd::Zero(width),
                              Activation::kIdentity}}};
}

}  // namespace

TEST_CASE("voxelize_dynamic basics") {
  CHECK(voxelize_dynamic(PointCloud(0), kBev).pillars.empty());

  PointCloud one(0);
  one.push_back(std::vector<double>{0.1, 0.1, 0.0});
  const PillarIndex idx = voxelize_dynamic(one, kBev);
  REQUIRE(idx.pillars.size() == 1);
  CHECK(idx.pillars[0].members == std::vector<std::uint32_t>{0});

  // Points on a cell edge belong to the cell with the floor index.
  PointCloud edge(0);
  edge.push_back(std::vector<double>{0.0, 0.5, 0.0});
  const PillarIndex e = voxelize_dynamic(edge, kBev);
  REQUIRE(e.pillars.size() == 1);
  CHECK(e.pillars[0].row == 8);
  CHECK(e.pillars[0].col == 5);
}

TEST_CASE("voxelize_dynamic matches floor binning") {
  std::mt19937_64 rng(41);
  const PointCloud pc = random_cloud(1000, 1, rng);
  const PillarIndex idx = voxelize_dynamic(pc, kBev);
  std::map<std::pair<long, long>, std::vector<std::uint32_t>> oracle;
  std::size_t outside = 0;
  for (std::size_t i = 0; i < pc.size(); ++i) {
    const auto p = pc.point(i);
    const long r = long(std::floor((p[0] - kBev.x_min) / kBev.pitch));
    const long c = long(std::floor((p[1] - kBev.y_min) / kBev.pitch));
    if (r < 0 || c < 0 || r >= long(kBev.rows()) || c >= long(kBev.cols())) {
      ++outside;
      continue;
    }
    oracle[{r, c}].push_back(std::uint32_t(i));
  }
  CHECK(idx.out_of_extent == outside);
  CHECK(idx.total_members() + idx.out_of_extent == pc.size());
  REQUIRE(idx.pillars.size() == oracle.size());
  auto it = oracle.begin();
  for (const auto& p : idx.pillars) {
    CHECK(long(p.row) == it->first.first);
    CHECK(long(p.col) == it->first.second);
    CHECK(p.members == it->second);
    ++it;
  }
}

TEST_CASE("aggregate_pillars") {
  std::mt19937_64 rng(42);

  SUBCASE("one point per pillar with an identity network") {
    PointCloud pc(1);
    pc.push_back(std::vector<double>{0.3, -0.7, 0.2, 5.0});
    const PillarIndex idx = voxelize_dynamic(pc, kBev);
    const Grid2D g = aggregate_pillars(idx, pc, identity_pn(6));
    const auto& p = idx.pillars.at(0);
    const Eigen::Vector2d centre = kBev.cell_center(double(p.row), double(p.col));
    const auto cell = g.cell(p.row, p.col);
    CHECK(cell[0] == 0.3);
    CHECK(cell[3] == 5.0);
    CHECK(cell[4] == doctest::Approx(0.3 - centre.x()).epsilon(1e-15));
    CHECK(cell[5] == doctest::Approx(-0.7 - centre.y()).epsilon(1e-15));
    double other = 0.0;
    for (double v : g.data()) other += std::abs(v);
    for (double v : cell) other -= std::abs(v);
    CHECK(other == doctest::Approx(0.0));
  }

  SUBCASE("two points in one pillar take the channel max") {
    PointCloud pc(0);
    pc.push_back(std::vector<double>{0.1, 0.1, 3.0});
    pc.push_back(std::vector<double>{0.4, 0.2, -1.0});
    const PillarIndex idx = voxelize_dynamic(pc, kBev);
    REQUIRE(idx.pillars.size() == 1);
    const Grid2D g = aggregate_pillars(idx, pc, identity_pn(5));
    const auto cell = g.cell(idx.pillars[0].row, idx.pillars[0].col);
    CHECK(cell[0] == 0.4);
    CHECK(cell[1] == 0.2);
    CHECK(cell[2] == 3.0);
  }

  SUBCASE("input size mismatch is rejected") {
    PointCloud pc(2);
    pc.push_back(std::vector<double>{0, 0, 0, 0, 0});
    CHECK_THROWS_AS(aggregate_pillars(voxelize_dynamic(pc, kBev), pc, identity_pn(5)), std::invalid_argument);
  }

  SUBCASE("adding a point never lowers a relu feature") {
    const std::size_t sizes[] = {6, 8, 4};
    const Activation acts[] = {Activation::kRelu, Activation::kRelu};
    const DenseNet pn = make_dense_net(sizes, acts, rng);
    PointCloud pc = random_cloud(200, 1, rng, 3.0);
    const Grid2D before = aggregate_pillars(voxelize_dynamic(pc, kBev), pc, pn);
    pc.push_back(std::vector<double>{0.2, 0.2, 1.0, -0.5});
    const Grid2D after = aggregate_pillars(voxelize_dynamic(pc, kBev), pc, pn);
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(after.data()[i] >= before.data()[i]);
  }

  SUBCASE("shuffling the points changes nothing") {
    const std::size_t sizes[] = {5, 16, 16};
    const Activation acts[] = {Activation::kRelu, Activation::kIdentity};
    const DenseNet pn = make_dense_net(sizes, acts, rng);
    const PointCloud pc = random_cloud(300, 0, rng, 3.0);
    const Grid2D ref = aggregate_pillars(voxelize_dynamic(pc, kBev), pc, pn);
    std::vector<std::size_t> order(pc.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int trial = 0; trial < 50; ++trial) {
      std::shuffle(order.begin(), order.end(), rng);
      PointCloud shuffled(0);
      for (std::size_t i : order) shuffled.push_back(pc.point(i));
      CHECK(aggregate_pillars(voxelize_dynamic(shuffled, kBev), shuffled, pn) == ref);
    }
  }
}

TEST_CASE("aggregate_pillars backward matches finite differences") {
  std::mt19937_64 rng(43);
  const std::size_t sizes[] = {5, 6, 3};
  const Activation acts[] = {Activation::kRelu, Activation::kIdentity};
  DenseNet pn = make_dense_net(sizes, acts, rng);
  const PointCloud pc = random_cloud(40, 0, rng, 2.0);
  const PillarIndex idx = voxelize_dynamic(pc, kBev);
  const Grid2D up = testing::random_grid(kBev.rows(), kBev.cols(), 3, rng);
  auto objective = [&]() {
    const Grid2D f = aggregate_pillars(idx, pc, pn);
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += f.data()[i] * up.data()[i];
    return s;
  };
  const PillarActivations act = aggregate_pillars_forward(idx, pc, pn);
  NetGrad g = zero_grad(pn.layers);
  aggregate_pillars_backward(act, pn, up, g);
  for (std::size_t k = 0; k < pn.layers.size(); ++k) {
    for (Eigen::Index i = 0; i < pn.layers[k].weight.size(); ++i) {
      const double fd = testing::central_difference(pn.layers[k].weight.data()[i], objective, 1e-6);
      CHECK(std::abs(fd - g[k].weight.data()[i]) < 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("point cloud rejects bad input") {
  CHECK_THROWS_AS(PointCloud(1, std::vector<double>{1, 2, 3}), std::invalid_argument);
  PointCloud pc(0);
  CHECK_THROWS_AS(pc.push_back(std::vector<double>{0, std::nan(""), 0}), std::invalid_argument);
}
