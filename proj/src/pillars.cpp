#include "hdmap/pillars.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hdmap {

PointCloud::PointCloud(std::size_t extra, std::vector<double> values)
    : extra_(extra), values_(std::move(values)) {
  if (values_.size() % stride() != 0) {
    throw std::invalid_argument("PointCloud: value count is not a multiple of 3 + K");
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw std::invalid_argument("PointCloud: non-finite value");
  }
}

void PointCloud::push_back(std::span<const double> p) {
  if (p.size() != stride()) throw std::invalid_argument("PointCloud::push_back: wrong point width");
  for (double v : p) {
    if (!std::isfinite(v)) throw std::invalid_argument("PointCloud: non-finite value");
  }
  values_.insert(values_.end(), p.begin(), p.end());
}

std::size_t PillarIndex::total_members() const {
  std::size_t n = 0;
  for (const auto& p : pillars) n += p.members.size();
  return n;
}

PillarIndex voxelize_dynamic(const PointCloud& points, const BevConfig& bev) {
  bev.validate();
  PillarIndex index;
  index.bev = bev;
  const std::size_t ncells = bev.rows() * bev.cols();
  constexpr std::uint32_t kNone = 0xffffffffu;
  std::vector<std::uint32_t> cell_of(points.size(), kNone);
  std::vector<std::uint32_t> counts(ncells, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto p = points.point(i);
    const auto rc = bev.cell_of(p[0], p[1]);
    if (!rc) {
      ++index.out_of_extent;
      continue;
    }
    cell_of[i] = static_cast<std::uint32_t>(rc->first * bev.cols() + rc->second);
    ++counts[cell_of[i]];
  }
  std::vector<std::uint32_t> slot(ncells, kNone);
  for (std::size_t c = 0; c < ncells; ++c) {
    if (counts[c] == 0) continue;
    slot[c] = static_cast<std::uint32_t>(index.pillars.size());
    Pillar p;
    p.row = c / bev.cols();
    p.col = c % bev.cols();
    p.members.reserve(counts[c]);
    index.pillars.push_back(std::move(p));
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (cell_of[i] == kNone) continue;
    index.pillars[slot[cell_of[i]]].members.push_back(static_cast<std::uint32_t>(i));
  }
  return index;
}

PillarActivations aggregate_pillars_forward(const PillarIndex& index, const PointCloud& points,
                                            const DenseNet& pn) {
  const std::size_t in = pillar_input_size(points.extra());
  if (pn.input_size() != in) {
    throw std::invalid_argument("aggregate_pillars: network expects " +
                                std::to_string(pn.input_size()) + " inputs, points provide " +
                                std::to_string(in) + " (3 + K + 2 offsets)");
  }
  const BevConfig& bev = index.bev;
  const std::size_t nc = pn.output_size();
  PillarActivations act;
  act.features = Grid2D(bev.rows(), bev.cols(), nc);
  act.winner.assign(bev.rows() * bev.cols() * nc, -1);

  const std::size_t total = index.total_members();
  Eigen::MatrixXd input(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(in));
  act.rows_point.reserve(total);
  Eigen::Index row = 0;
  for (const auto& pillar : index.pillars) {
    const Eigen::Vector2d centre =
        bev.cell_center(static_cast<double>(pillar.row), static_cast<double>(pillar.col));
    for (std::uint32_t m : pillar.members) {
      const auto p = points.point(m);
      for (std::size_t k = 0; k < p.size(); ++k) input(row, static_cast<Eigen::Index>(k)) = p[k];
      input(row, static_cast<Eigen::Index>(p.size())) = p[0] - centre.x();
      input(row, static_cast<Eigen::Index>(p.size() + 1)) = p[1] - centre.y();
      act.rows_point.push_back(m);
      ++row;
    }
  }
  const Eigen::MatrixXd out = forward_rowwise(pn.layers, input, &act.cache);

  row = 0;
  for (const auto& pillar : index.pillars) {
    const std::size_t cell = pillar.row * bev.cols() + pillar.col;
    auto dst = act.features.cell(cell);
    for (std::size_t m = 0; m < pillar.members.size(); ++m, ++row) {
      for (std::size_t c = 0; c < nc; ++c) {
        const double v = out(row, static_cast<Eigen::Index>(c));
        std::int32_t& w = act.winner[cell * nc + c];
        if (w < 0 || v > dst[c]) {
          dst[c] = v;
          w = static_cast<std::int32_t>(row);
        }
      }
    }
  }
  return act;
}

Grid2D aggregate_pillars(const PillarIndex& index, const PointCloud& points, const DenseNet& pn) {
  return aggregate_pillars_forward(index, points, pn).features;
}

void aggregate_pillars_backward(const PillarActivations& act, const DenseNet& pn,
                                const Grid2D& upstream, NetGrad& grads) {
  if (!upstream.same_shape(act.features)) {
    throw std::invalid_argument("aggregate_pillars_backward: upstream shape mismatch");
  }
  const std::size_t nc = act.features.channels();
  const Eigen::Index nrows = act.cache.values.empty() ? 0 : act.cache.values.front().rows();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(nrows, static_cast<Eigen::Index>(nc));
  for (std::size_t cell = 0; cell < act.features.cells(); ++cell) {
    for (std::size_t c = 0; c < nc; ++c) {
      const std::int32_t w = act.winner[cell * nc + c];
      if (w >= 0) g(w, static_cast<Eigen::Index>(c)) += upstream.at(cell / upstream.width(), cell % upstream.width(), c);
    }
  }
  if (nrows > 0) backward_batch(pn.layers, act.cache, g, grads);
}

}  // namespace hdmap
