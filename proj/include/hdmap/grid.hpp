#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace hdmap {

/// Dense height x width x channels field, row-major and channel-last.
///
/// Used for feature maps, label rasters, logits and embeddings alike.
class Grid2D {
 public:
  Grid2D() = default;
  Grid2D(std::size_t height, std::size_t width, std::size_t channels, double fill = 0.0);
  Grid2D(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> data);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t channels() const { return channels_; }
  std::size_t cells() const { return height_ * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(std::size_t row, std::size_t col, std::size_t ch = 0) {
    return data_[(row * width_ + col) * channels_ + ch];
  }
  double at(std::size_t row, std::size_t col, std::size_t ch = 0) const {
    return data_[(row * width_ + col) * channels_ + ch];
  }

  std::span<double> cell(std::size_t row, std::size_t col) {
    return {data_.data() + (row * width_ + col) * channels_, channels_};
  }
  std::span<const double> cell(std::size_t row, std::size_t col) const {
    return {data_.data() + (row * width_ + col) * channels_, channels_};
  }
  std::span<double> cell(std::size_t index) { return {data_.data() + index * channels_, channels_}; }
  std::span<const double> cell(std::size_t index) const {
    return {data_.data() + index * channels_, channels_};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Grid2D& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }
  bool same_spatial(const Grid2D& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  /// Copies one channel out as a single-channel grid.
  Grid2D channel(std::size_t ch) const;

  /// True when every stored value is finite.
  bool all_finite() const;

  bool operator==(const Grid2D& other) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> data_;
};

/// Stacks grids with equal spatial shape along the channel axis.
Grid2D concat_channels(std::span<const Grid2D> grids);

}  // namespace hdmap
