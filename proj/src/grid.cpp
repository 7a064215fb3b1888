#include "hdmap/grid.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hdmap {

Grid2D::Grid2D(std::size_t height, std::size_t width, std::size_t channels, double fill)
    : height_(height), width_(width), channels_(channels), data_(height * width * channels, fill) {}

Grid2D::Grid2D(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (data_.size() != height * width * channels) {
    throw std::invalid_argument("Grid2D: data length " + std::to_string(data_.size()) +
                                " does not match " + std::to_string(height) + "x" +
                                std::to_string(width) + "x" + std::to_string(channels));
  }
}

Grid2D Grid2D::channel(std::size_t ch) const {
  if (ch >= channels_) throw std::out_of_range("Grid2D::channel: index out of range");
  Grid2D out(height_, width_, 1);
  for (std::size_t i = 0; i < cells(); ++i) out.data_[i] = data_[i * channels_ + ch];
  return out;
}

bool Grid2D::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Grid2D concat_channels(std::span<const Grid2D> grids) {
  if (grids.empty()) return {};
  std::size_t total = 0;
  for (const auto& g : grids) {
    if (!g.same_spatial(grids.front())) {
      throw std::invalid_argument("concat_channels: spatial shapes differ");
    }
    total += g.channels();
  }
  Grid2D out(grids.front().height(), grids.front().width(), total);
  for (std::size_t i = 0; i < out.cells(); ++i) {
    auto dst = out.cell(i);
    std::size_t offset = 0;
    for (const auto& g : grids) {
      auto src = g.cell(i);
      for (std::size_t c = 0; c < src.size(); ++c) dst[offset + c] = src[c];
      offset += src.size();
    }
  }
  return out;
}

}  // namespace hdmap
