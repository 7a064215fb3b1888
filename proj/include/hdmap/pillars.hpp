#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hdmap/geometry.hpp"
#include "hdmap/numerics.hpp"

namespace hdmap {

/// N points of (x, y, z, f_1 .. f_K), row-major.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(std::size_t extra) : extra_(extra) {}
  PointCloud(std::size_t extra, std::vector<double> values);

  std::size_t size() const { return stride() == 0 ? 0 : values_.size() / stride(); }
  std::size_t extra() const { return extra_; }
  std::size_t stride() const { return 3 + extra_; }
  bool empty() const { return values_.empty(); }

  std::span<const double> point(std::size_t i) const { return {values_.data() + i * stride(), stride()}; }
  void push_back(std::span<const double> p);

  const std::vector<double>& values() const { return values_; }

  bool operator==(const PointCloud&) const = default;

 private:
  std::size_t extra_ = 0;
  std::vector<double> values_;
};

struct Pillar {
  std::size_t row = 0;
  std::size_t col = 0;
  std::vector<std::uint32_t> members;  // point indices, ascending
};

/// Non-empty pillars only, ordered row-major by cell.
struct PillarIndex {
  BevConfig bev;
  std::vector<Pillar> pillars;
  std::size_t out_of_extent = 0;

  std::size_t total_members() const;
};

/// Bins every point into the BEV cell containing its (x, y). No capacity
/// limit; points outside the extent are counted but not stored.
PillarIndex voxelize_dynamic(const PointCloud& points, const BevConfig& bev);

/// Per-point network input: the point's own features followed by its (dx, dy)
/// offset from the pillar centre.
inline std::size_t pillar_input_size(std::size_t extra) { return 3 + extra + 2; }

/// Channel-wise max over the shared per-point network outputs of each pillar.
/// Empty pillars are zero.
Grid2D aggregate_pillars(const PillarIndex& index, const PointCloud& points, const DenseNet& pn);

/// Forward state kept for backpropagation through aggregate_pillars.
struct PillarActivations {
  Grid2D features;
  ForwardCache cache;                 // rows follow `rows_point`
  std::vector<std::uint32_t> rows_point;
  std::vector<std::int32_t> winner;   // per cell and channel: row into cache, -1 if empty
};

PillarActivations aggregate_pillars_forward(const PillarIndex& index, const PointCloud& points,
                                            const DenseNet& pn);

/// Routes `upstream` (shaped like the feature grid) to the winning points and
/// accumulates the network gradient into `grads`.
void aggregate_pillars_backward(const PillarActivations& act, const DenseNet& pn,
                                const Grid2D& upstream, NetGrad& grads);

}  // namespace hdmap
